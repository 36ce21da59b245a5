"""Builtin model library, classical-chain embedding, model-file ingestion."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import numpy as np

from .matrixcore import DEFAULT_TOLS, Tolerances, dagger
from .semigroup import (
    QMS,
    OpenSystemModel,
    build_generator,
    conjugation_superop,
    evolve,
    is_cp_unital,
    qms_from_step,
)
from .states import DensityState, density_state, invariant_states

__all__ = [
    "BuiltinModel",
    "builtin",
    "builtin_names",
    "all_builtins",
    "classical_chain_embed",
    "random_model",
    "random_faithful_model",
    "load_model_file",
    "LoadedModel",
]

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|
SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=complex)  # |1><0|


@dataclass(frozen=True)
class BuiltinModel:
    name: str
    model: OpenSystemModel | None
    qms: QMS
    state: DensityState
    description: str


def _finish(name: str, model: OpenSystemModel | None, qms: QMS, desc: str,
            tol: Tolerances) -> BuiltinModel:
    _, canonical = invariant_states(qms, tol)
    return BuiltinModel(name=name, model=model, qms=qms, state=canonical,
                        description=desc)


def _dephasing(gamma: float = 0.5, tol: Tolerances = DEFAULT_TOLS) -> BuiltinModel:
    model = OpenSystemModel.from_ops(
        hamiltonian=np.zeros((2, 2)), lindblads=[np.sqrt(gamma) * SIGMA_Z], tol=tol
    )
    return _finish(
        f"dephasing({gamma})", model, build_generator(model),
        "qubit dephasing; coherences decay at 2*gamma, diagonal algebra fixed", tol,
    )


def _amplitude_damping(gamma: float = 1.0, tol: Tolerances = DEFAULT_TOLS) -> BuiltinModel:
    model = OpenSystemModel.from_ops(
        hamiltonian=np.zeros((2, 2)), lindblads=[np.sqrt(gamma) * SIGMA_MINUS], tol=tol
    )
    return _finish(
        f"amplitude_damping({gamma})", model, build_generator(model),
        "decay to the ground state; unique non-faithful invariant state", tol,
    )


def _thermal_qubit(
    down: float = 2.0, up: float = 1.0, tol: Tolerances = DEFAULT_TOLS
) -> BuiltinModel:
    model = OpenSystemModel.from_ops(
        hamiltonian=np.zeros((2, 2)),
        lindblads=[np.sqrt(down) * SIGMA_MINUS, np.sqrt(up) * SIGMA_PLUS],
        tol=tol,
    )
    return _finish(
        f"thermal_qubit({down},{up})", model, build_generator(model),
        "thermal relaxation; faithful invariant state diag(down, up)/(down+up)", tol,
    )


def _unitary(omega: float = 1.0, tol: Tolerances = DEFAULT_TOLS) -> BuiltinModel:
    model = OpenSystemModel.from_ops(hamiltonian=omega * SIGMA_Z, lindblads=[], tol=tol)
    return _finish(
        f"unitary({omega})", model, build_generator(model),
        "closed dynamics e^{itH} . e^{-itH}; nothing decays", tol,
    )


def classical_chain_embed(
    p_matrix: np.ndarray, tol: Tolerances = DEFAULT_TOLS
) -> QMS:
    """Embed a row-stochastic matrix as a discrete CP unital map on M_n.

    Diagonal action (Phi f)(i) = sum_j P_ij f(j); off-diagonal entries are
    Schur-multiplied by sqrt(P_ii P_jj).  The map has the explicit Kraus
    family {diag(sqrt(P_ii))} + {sqrt(P_ij) |j><i|, i != j}, so complete
    positivity holds by construction, and the diagonal subalgebra is
    invariant.
    """
    p = np.asarray(p_matrix, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError("transition matrix must be square")
    if np.any(p < 0):
        raise ValueError("transition probabilities must be nonnegative")
    if np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-12:
        raise ValueError("rows must sum to 1 within 1e-12")
    n = p.shape[0]
    kraus = [np.diag(np.sqrt(np.diag(p))).astype(complex)]
    for i in range(n):
        for j in range(n):
            if i != j and p[i, j] > 0:
                k = np.zeros((n, n), dtype=complex)
                k[j, i] = np.sqrt(p[i, j])
                kraus.append(k)
    mat = sum(conjugation_superop(dagger(k), k).mat for k in kraus)
    return qms_from_step(mat, tol)


def _three_state_chain(tol: Tolerances = DEFAULT_TOLS) -> BuiltinModel:
    p = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.5, 0.5, 0.0]])
    qms = classical_chain_embed(p, tol)
    return _finish(
        "three_state_chain", None, qms,
        "discrete chain with two absorbing states and one transient state "
        "splitting half-half", tol,
    )


def _random_hermitian(rng: np.random.Generator, d: int) -> np.ndarray:
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (a + dagger(a)) / 2.0


def _random_matrix(rng: np.random.Generator, d: int, scale: float = 0.7) -> np.ndarray:
    return scale * (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)))


def random_model(seed: int, dim: int = 2, n_lindblads: int = 2,
                 tol: Tolerances = DEFAULT_TOLS) -> BuiltinModel:
    """Seeded generic GKSL model; no structure imposed, the invariant
    state may or may not be faithful."""
    rng = np.random.default_rng(seed)
    model = OpenSystemModel.from_ops(
        hamiltonian=_random_hermitian(rng, dim),
        lindblads=[_random_matrix(rng, dim) for _ in range(n_lindblads)],
        tol=tol,
    )
    return _finish(f"random({seed})", model, build_generator(model),
                   "seeded generic model", tol)


def _block_embed(top: np.ndarray, bottom: np.ndarray) -> np.ndarray:
    d1, d2 = top.shape[0], bottom.shape[0]
    out = np.zeros((d1 + d2, d1 + d2), dtype=complex)
    out[:d1, :d1] = top
    out[d1:, d1:] = bottom
    return out


def random_faithful_model(
    seed: int, tol: Tolerances = DEFAULT_TOLS
) -> BuiltinModel:
    """Seeded model guaranteed (by retry) to have a faithful invariant
    state.  Cycles through three shapes: a generic qubit, a generic
    qutrit, and a unitarily rotated direct sum of two thermal qubits (the
    latter has a two-dimensional fixed-point algebra, keeping the
    commutant cross-checks non-vacuous)."""
    base = int(seed)
    for attempt in range(25):
        s = base + 1000 * attempt
        rng = np.random.default_rng(s)
        variant = base % 3
        if variant == 0:
            model = OpenSystemModel.from_ops(
                hamiltonian=_random_hermitian(rng, 2),
                lindblads=[_random_matrix(rng, 2), _random_matrix(rng, 2, 0.5)],
                tol=tol,
            )
        elif variant == 1:
            model = OpenSystemModel.from_ops(
                hamiltonian=_random_hermitian(rng, 3),
                lindblads=[_random_matrix(rng, 3), _random_matrix(rng, 3, 0.4)],
                tol=tol,
            )
        else:
            rates = rng.uniform(0.5, 2.5, size=4)
            zero = np.zeros((2, 2))
            l_ops = [
                _block_embed(np.sqrt(rates[0]) * SIGMA_MINUS, zero),
                _block_embed(np.sqrt(rates[1]) * SIGMA_PLUS, zero),
                _block_embed(zero, np.sqrt(rates[2]) * SIGMA_MINUS),
                _block_embed(zero, np.sqrt(rates[3]) * SIGMA_PLUS),
            ]
            h = _block_embed(rng.uniform(0.1, 1.0) * SIGMA_Z,
                             rng.uniform(0.1, 1.0) * SIGMA_Z)
            q, _ = np.linalg.qr(
                rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
            )
            model = OpenSystemModel.from_ops(
                hamiltonian=q @ h @ dagger(q),
                lindblads=[q @ l @ dagger(q) for l in l_ops],
                tol=tol,
            )
        qms = build_generator(model)
        _, state = invariant_states(qms, tol)
        if state.faithful:
            return BuiltinModel(
                name=f"random_faithful({seed})", model=model, qms=qms, state=state,
                description=f"seeded faithful-state model, variant {variant}",
            )
    raise RuntimeError(f"could not produce a faithful invariant state for seed {seed}")


_CATALOG = {
    "dephasing": (_dephasing, (0.5,)),
    "amplitude_damping": (_amplitude_damping, (1.0,)),
    "thermal_qubit": (_thermal_qubit, (2.0, 1.0)),
    "unitary": (_unitary, (1.0,)),
    "three_state_chain": (_three_state_chain, ()),
    "random": (lambda *a, tol=DEFAULT_TOLS: random_model(int(a[0]), tol=tol), (0,)),
    "random_faithful": (
        lambda *a, tol=DEFAULT_TOLS: random_faithful_model(int(a[0]), tol=tol),
        (0,),
    ),
}

_NAME_RE = re.compile(r"^([A-Za-z_][A-Za-z_0-9]*)(?:\((.*)\))?$")


def builtin_names() -> list[str]:
    return sorted(_CATALOG)


def builtin(spec: str, tol: Tolerances = DEFAULT_TOLS) -> BuiltinModel:
    """Resolve a builtin specifier like ``thermal_qubit(2,1)``."""
    m = _NAME_RE.match(spec.strip())
    if not m:
        raise ValueError(f"malformed builtin specifier {spec!r}")
    name, argstr = m.group(1), m.group(2)
    if name not in _CATALOG:
        raise ValueError(
            f"unknown builtin {name!r}; available: {', '.join(builtin_names())}"
        )
    factory, defaults = _CATALOG[name]
    if argstr:
        try:
            args = tuple(float(x) for x in argstr.split(","))
        except ValueError as exc:
            raise ValueError(f"bad arguments in {spec!r}: {exc}") from exc
    else:
        args = defaults
    return factory(*args, tol=tol)


def all_builtins(tol: Tolerances = DEFAULT_TOLS) -> list[BuiltinModel]:
    """The standard fixture set at default parameters."""
    return [
        _dephasing(tol=tol),
        _amplitude_damping(tol=tol),
        _thermal_qubit(tol=tol),
        _unitary(tol=tol),
        _three_state_chain(tol=tol),
    ]


@dataclass(frozen=True)
class LoadedModel:
    kind: str
    model: OpenSystemModel | None
    qms: QMS
    state_hint: DensityState | None


def _reject_constant(name: str):
    raise ValueError(f"non-finite constant {name!r} in model file")


def _complex_matrix(data, what: str, dim: int | None = None) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(
            f"{what} must be a square matrix of [re, im] pairs, got shape {arr.shape}"
        )
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"{what} has dimension {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite entries")
    return arr[..., 0] + 1j * arr[..., 1]


def load_model_file(path, tol: Tolerances = DEFAULT_TOLS) -> LoadedModel:
    """Parse a structured model file (UTF-8 JSON).

    Fields: dim, kind (continuous | discrete), hamiltonian and lindblads
    as row-major matrices of [re, im] pairs, stochastic_matrix (discrete
    classical option), optional state_hint.  NaN/Inf anywhere is rejected.
    """
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh, parse_constant=_reject_constant)
    if not isinstance(raw, dict):
        raise ValueError("model file must contain a JSON object")
    kind = raw.get("kind", "continuous")
    if kind not in ("continuous", "discrete"):
        raise ValueError(f"unknown kind {kind!r}")
    dim = raw.get("dim")
    if dim is not None:
        dim = int(dim)
    state_hint = None
    if raw.get("state_hint") is not None:
        rho = _complex_matrix(raw["state_hint"], "state_hint", dim)
        state_hint = density_state(rho, tol)
    if kind == "discrete":
        if raw.get("stochastic_matrix") is None:
            raise ValueError("discrete model files must supply stochastic_matrix")
        p = np.asarray(raw["stochastic_matrix"], dtype=float)
        if not np.all(np.isfinite(p)):
            raise ValueError("stochastic_matrix contains non-finite entries")
        qms = classical_chain_embed(p, tol)
        return LoadedModel(kind=kind, model=None, qms=qms, state_hint=state_hint)
    if raw.get("hamiltonian") is None and not raw.get("lindblads"):
        raise ValueError("continuous model files need hamiltonian or lindblads")
    h = None
    if raw.get("hamiltonian") is not None:
        h = _complex_matrix(raw["hamiltonian"], "hamiltonian", dim)
        herm = np.linalg.norm(h - dagger(h))
        if herm > 1e-10 * max(np.linalg.norm(h), 1.0):
            raise ValueError(f"hamiltonian is not Hermitian (residual {herm:.2e})")
        dim = h.shape[0]
    ls = [
        _complex_matrix(l, f"lindblads[{i}]", dim)
        for i, l in enumerate(raw.get("lindblads") or [])
    ]
    model = OpenSystemModel.from_ops(hamiltonian=h, lindblads=ls, dim=dim, tol=tol)
    qms = build_generator(model)
    verdict = is_cp_unital(evolve(qms, 1.0), tol)
    if not verdict.ok:
        raise ValueError(f"model fails the CP-unital gate: {verdict}")
    return LoadedModel(kind=kind, model=model, qms=qms, state_hint=state_hint)
