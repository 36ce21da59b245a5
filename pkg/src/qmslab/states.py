"""Invariant states, support projections, sub-harmonic analysis.

The canonical invariant state is the spectral projection (at eigenvalue 0
of the predual generator, or eigenvalue 1 of the predual step map) applied
to the maximally mixed state, renormalized.  This is the Cesaro limit of
the predual orbit of I/d, and in finite dimension it always exists.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .matrixcore import (
    DEFAULT_TOLS,
    Tolerances,
    dagger,
    nullspace,
    orthonormalize,
    require_finite,
    require_square,
    spectral_projection,
    unvec,
    vec,
)
from .semigroup import (
    QMS,
    OpenSystemModel,
    SuperOp,
    default_sample_times,
    evolve,
    kraus_operators,
    predual,
)

__all__ = [
    "DensityState",
    "density_state",
    "require_projection",
    "invariant_states",
    "support_projection",
    "SubharmonicVerdict",
    "is_subharmonic",
    "subharmonic_limit",
    "reachability_tower",
    "reduced_qms",
    "peripheral_predual_projection",
]


@dataclass(frozen=True)
class DensityState:
    """A density matrix with its support projection and faithfulness flag."""

    rho: np.ndarray
    support: np.ndarray
    faithful: bool
    tol: Tolerances = field(default=DEFAULT_TOLS, repr=False)

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    def expect(self, x: np.ndarray) -> complex:
        return complex(np.trace(self.rho @ x))


def density_state(
    rho: np.ndarray, tol: Tolerances = DEFAULT_TOLS, clamp: bool = False
) -> DensityState:
    """Validate a density matrix and compute its support data.

    With ``clamp=True`` eigenvalues within the PSD slack below zero are
    clamped and the trace is renormalized first (used for states produced
    by spectral projections).
    """
    rho = require_finite(require_square(np.asarray(rho, dtype=complex), "rho"))
    rho = (rho + dagger(rho)) / 2.0
    lam, v = np.linalg.eigh(rho)
    scale = max(float(np.max(np.abs(lam))), 1e-300)
    if lam[0] < -tol.psd_slack * max(scale, 1.0):
        raise ValueError(f"state has a negative eigenvalue {lam[0]:.3e} beyond slack")
    if clamp:
        lam = np.clip(lam, 0.0, None)
        total = float(np.sum(lam))
        if total <= 0:
            raise ValueError("state has zero trace after clamping")
        lam = lam / total
        rho = (v * lam) @ dagger(v)
    tr = float(np.trace(rho).real)
    if abs(tr - 1.0) > 1e-12:
        raise ValueError(f"state trace {tr} is not 1 within 1e-12")
    cutoff = tol.rank_cutoff(rho.shape[0], float(np.max(lam)))
    keep = lam > cutoff
    supp = (v[:, keep]) @ dagger(v[:, keep])
    faithful = bool(np.all(keep))
    return DensityState(rho=rho, support=supp, faithful=faithful, tol=tol)


def require_projection(p: np.ndarray, tol: Tolerances = DEFAULT_TOLS) -> np.ndarray:
    p = require_finite(require_square(np.asarray(p, dtype=complex), "projection"))
    herm = np.linalg.norm(p - dagger(p))
    idem = np.linalg.norm(p @ p - p)
    if max(herm, idem) > tol.algebraic * max(np.linalg.norm(p), 1.0) * 10:
        raise ValueError(
            f"not a projection: |p-p*|={herm:.2e}, |p^2-p|={idem:.2e}"
        )
    return p


def _zero_group_selector(qms: QMS, tol: Tolerances):
    """Eigenvalue predicate picking the invariant spectral group."""
    if qms.kind == "continuous":
        scale = max(np.linalg.norm(qms.generator.mat), 1.0)
        cut = tol.algebraic * scale
        return lambda lam: bool(abs(lam) <= cut)
    cut = tol.algebraic * max(np.linalg.norm(qms.step_map.mat), 1.0)
    return lambda lam: bool(abs(lam - 1.0) <= cut)


def peripheral_predual_projection(qms: QMS, tol: Tolerances = DEFAULT_TOLS) -> SuperOp:
    """Spectral projection of the predual dynamics onto its invariant
    eigenvalue group (0 for generators, 1 for step maps)."""
    if qms.kind == "continuous":
        target = predual(qms.generator)
    else:
        target = predual(qms.step_map)
    sel = _zero_group_selector(qms, tol)
    return SuperOp(spectral_projection(target.mat, sel), qms.dim)


def invariant_states(
    qms: QMS, tol: Tolerances = DEFAULT_TOLS
) -> tuple[list[np.ndarray], DensityState]:
    """Kernel basis of the predual dynamics plus the canonical state.

    The kernel basis spans {rho : predual-generator(rho) = 0} (or the fixed
    points of the predual step map); each element is returned as a d x d
    matrix.  The canonical state is the invariant spectral projection of
    I/d, clamped and renormalized.
    """
    d = qms.dim
    if qms.kind == "continuous":
        mat = predual(qms.generator).mat
        kern = nullspace(mat, tol)
    else:
        mat = predual(qms.step_map).mat
        kern = nullspace(mat - np.eye(d * d), tol)
    basis = [unvec(kern[:, j], d) for j in range(kern.shape[1])]
    proj = peripheral_predual_projection(qms, tol)
    cand = proj.apply(np.eye(d) / d)
    cand = (cand + dagger(cand)) / 2.0
    try:
        canonical = density_state(cand / np.trace(cand).real, tol, clamp=True)
    except ValueError as exc:
        raise ValueError(
            f"canonical invariant state is ill-conditioned: {exc}"
        ) from exc
    return basis, canonical


def support_projection(
    state: DensityState,
    tol: Tolerances | None = None,
    qms: QMS | None = None,
    model: OpenSystemModel | None = None,
) -> np.ndarray:
    """Spectral projection onto the eigenvalues of rho above the rank cutoff.

    If a semigroup is supplied the result is verified sub-harmonic (the
    support of an invariant state always is) and a failure raises.
    """
    tol = tol or state.tol
    p = require_projection(state.support, tol)
    if qms is not None:
        verdict = is_subharmonic(p, model, qms, tol)
        if not verdict.ok:
            raise ValueError(
                f"support projection failed the sub-harmonic check: {verdict}"
            )
    return p


@dataclass(frozen=True)
class SubharmonicVerdict:
    """Two-certificate sub-harmonicity check.

    algebraic_residual is max(|(1-p) Y p|, |(1-p) L_k p|) when generator
    data is available (Theorem-5.1-style certificate), else None.
    dynamic_min_eig is the worst min-eigenvalue of tau_t(p) - p over the
    sampled times.  compression_residual is the worst residual of
    p tau_t(p) = tau_t(p) p = p, asserted only when the verdict is true.
    """

    ok: bool
    algebraic_residual: float | None
    dynamic_min_eig: float
    compression_residual: float
    sampled_times: tuple[float, ...]


def _alphabet(model: OpenSystemModel | None, qms: QMS, tol: Tolerances):
    """Operator alphabet for algebraic certificates and reachability:
    {Y, L_k} for generator data, Kraus operators for a discrete step map."""
    if model is not None:
        return [model.drift, *model.lindblads]
    if qms.kind == "discrete":
        return kraus_operators(qms.step_map, tol)
    return None


def is_subharmonic(
    p: np.ndarray,
    model: OpenSystemModel | None,
    qms: QMS,
    tol: Tolerances = DEFAULT_TOLS,
) -> SubharmonicVerdict:
    p = require_projection(p, tol)
    d = qms.dim
    comp = np.eye(d) - p

    algebraic = None
    if model is not None:
        residuals = [np.linalg.norm(comp @ model.drift @ p)]
        residuals += [np.linalg.norm(comp @ l @ p) for l in model.lindblads]
        algebraic = float(max(residuals))

    times = default_sample_times(qms.kind)
    worst_eig = np.inf
    worst_comp = 0.0
    for t in times:
        tp = evolve(qms, t).apply(p)
        gap = (tp - p + dagger(tp - p)) / 2.0
        worst_eig = min(worst_eig, float(np.linalg.eigvalsh(gap)[0]))
        worst_comp = max(
            worst_comp,
            float(np.linalg.norm(p @ tp - p)),
            float(np.linalg.norm(tp @ p - p)),
        )
    dyn_ok = worst_eig >= -100 * tol.algebraic
    alg_ok = algebraic is None or algebraic <= 100 * tol.algebraic
    ok = bool(dyn_ok and alg_ok)
    if ok and worst_comp > 1000 * tol.algebraic:
        # Prop 3.3(a) is a theorem for sub-harmonic projections; a large
        # residual here means the verdict itself is unreliable.
        ok = False
    return SubharmonicVerdict(
        ok=ok,
        algebraic_residual=algebraic,
        dynamic_min_eig=float(worst_eig),
        compression_residual=float(worst_comp),
        sampled_times=tuple(times),
    )


def subharmonic_limit(
    p: np.ndarray,
    qms: QMS,
    tol: Tolerances = DEFAULT_TOLS,
    verify: bool = True,
) -> np.ndarray:
    """The strong limit y of tau_t(p) for a sub-harmonic projection p.

    Computed spectrally (invariant spectral projection of the Heisenberg
    dynamics applied to p); monotone convergence toward y and p <= y <= I
    are verified on the sampled time grid.
    """
    p = require_projection(p, tol)
    if verify:
        verdict = is_subharmonic(p, None, qms, tol)
        if not verdict.ok:
            raise ValueError(f"projection is not sub-harmonic: {verdict}")
    target = qms.generator if qms.kind == "continuous" else None
    sel = _zero_group_selector(qms, tol)
    if qms.kind == "continuous":
        proj = spectral_projection(target.mat, sel)
    else:
        proj = spectral_projection(qms.step_map.mat, sel)
    y = unvec(proj @ vec(p), qms.dim)
    y = (y + dagger(y)) / 2.0
    if verify:
        d = qms.dim
        lam_bounds = np.linalg.eigvalsh(y - p), np.linalg.eigvalsh(np.eye(d) - y)
        slack = 100 * tol.algebraic
        if lam_bounds[0][0] < -slack or lam_bounds[1][0] < -slack:
            raise ValueError("limit violates p <= y <= I beyond tolerance")
        prev = -np.inf
        for t in default_sample_times(qms.kind):
            tp = evolve(qms, t).apply(p)
            dist = float(np.linalg.norm(tp - y))
            gap = float(np.linalg.eigvalsh((tp - p + dagger(tp - p)) / 2.0)[0])
            if gap < -slack:
                raise ValueError("tau_t(p) is not monotone toward the limit")
            prev = max(prev, dist)
    return y


def reachability_tower(
    p: np.ndarray,
    model: OpenSystemModel | QMS,
    max_len: int | None = None,
    tol: Tolerances = DEFAULT_TOLS,
) -> tuple[np.ndarray, bool]:
    """Span closure of the rows of p under right multiplication by words
    in the operator alphabet {L_0 := Y, L_1, ...} (Kraus operators for a
    discrete step map).

    Returns (basis, spans_all) where basis rows are an orthonormal basis of
    the closure; spans_all is True iff the closure is all of C^d, which is
    equivalent to injectivity of the sub-harmonic limit y of p.
    """
    if isinstance(model, OpenSystemModel):
        ops = [model.drift, *model.lindblads]
        d = model.dim
    else:
        ops = _alphabet(None, model, tol)
        if ops is None:
            raise ValueError("reachability needs generator data or a discrete step map")
        d = model.dim
    p = require_projection(p, tol)
    if max_len is None:
        max_len = d * d
    basis = orthonormalize(p.T, tol)  # columns are the (unconjugated) rows of p
    for _ in range(max_len):
        cols = [basis]
        for op in ops:
            # a row v of the current span goes to v @ op; as columns that is op^T v
            cols.append(op.T @ basis)
        new_basis = orthonormalize(np.hstack(cols), tol)
        if new_basis.shape[1] == basis.shape[1]:
            basis = new_basis
            break
        basis = new_basis
    spans_all = basis.shape[1] == d
    return basis.T, spans_all


def reduced_qms(
    qms: QMS, p: np.ndarray, tol: Tolerances = DEFAULT_TOLS
) -> tuple[QMS, np.ndarray]:
    """Compression of the semigroup to the corner algebra p A p.

    For a sub-harmonic p, x -> p tau_t(x) p restricted to the corner is
    again a Markov semigroup.  Returns the corner semigroup on the range
    of p together with the isometry V whose columns span range(p).
    """
    p = require_projection(p, tol)
    lam, vmat = np.linalg.eigh((p + dagger(p)) / 2.0)
    keep = lam > 0.5
    v = vmat[:, keep]
    r = v.shape[1]
    if r == 0:
        raise ValueError("zero projection has no corner dynamics")
    # vec(A X B) = (B^T kron A) vec(X) also for rectangular A, B
    down = np.kron(v.T, dagger(v))  # x -> V* x V
    up = np.kron(v.conj(), v)  # x_hat -> V x_hat V*
    if qms.kind == "continuous":
        mat = down @ qms.generator.mat @ up
        return QMS(kind="continuous", dim=r, generator=SuperOp(mat, r)), v
    mat = down @ qms.step_map.mat @ up
    return QMS(kind="discrete", dim=r, step_map=SuperOp(mat, r)), v
