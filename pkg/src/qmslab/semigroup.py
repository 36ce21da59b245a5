"""GKSL generators, their semigroups, and complete-positivity validation.

The generator built here acts in the Heisenberg picture,

    L(x) = Y* x + x Y + sum_k  L_k* x L_k,

with ``Y = -iH - (1/2) sum_k L_k* L_k`` when no drift is supplied, so that
``L(I) = 0`` holds by construction (the Markov/unital condition).  Discrete
time dynamics are first-class: a single completely positive unital step map
``Phi`` whose powers play the role of ``tau_t``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .matrixcore import (
    DEFAULT_TOLS,
    Tolerances,
    dagger,
    is_hermitian,
    matrix_exp,
    require_finite,
    require_square,
    unvec,
    vec,
)

__all__ = [
    "SuperOp",
    "OpenSystemModel",
    "QMS",
    "conjugation_superop",
    "left_mult_superop",
    "right_mult_superop",
    "build_generator",
    "qms_from_step",
    "evolve",
    "predual",
    "choi_matrix",
    "kraus_operators",
    "CPUnitalVerdict",
    "is_cp_unital",
    "minimal_semigroup_iterate",
    "default_sample_times",
    "schwarz_defect",
    "dynamics_eigenvalues",
    "gap_of_matrix",
    "spectral_gap",
    "default_horizon",
]


@dataclass(frozen=True)
class SuperOp:
    """A linear map on d x d matrices stored as a d^2 x d^2 matrix
    (column-stacking convention)."""

    mat: np.ndarray
    dim: int

    def apply(self, x: np.ndarray) -> np.ndarray:
        return unvec(self.mat @ vec(x), self.dim)

    def compose(self, other: "SuperOp") -> "SuperOp":
        """self after other."""
        return SuperOp(self.mat @ other.mat, self.dim)

    def __matmul__(self, other: "SuperOp") -> "SuperOp":
        return self.compose(other)

    def hs_adjoint(self) -> "SuperOp":
        """Adjoint for the Hilbert-Schmidt pairing tr(a* b)."""
        return SuperOp(dagger(self.mat), self.dim)

    @classmethod
    def identity(cls, dim: int) -> "SuperOp":
        return cls(np.eye(dim * dim, dtype=complex), dim)


def conjugation_superop(a: np.ndarray, b: np.ndarray) -> SuperOp:
    """Superoperator of x -> a x b."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    return SuperOp(np.kron(b.T, a), a.shape[0])


def left_mult_superop(a: np.ndarray) -> SuperOp:
    a = np.asarray(a, dtype=complex)
    return SuperOp(np.kron(np.eye(a.shape[0]), a), a.shape[0])


def right_mult_superop(b: np.ndarray) -> SuperOp:
    b = np.asarray(b, dtype=complex)
    return SuperOp(np.kron(b.T, np.eye(b.shape[0])), b.shape[0])


@dataclass(frozen=True)
class OpenSystemModel:
    """The (H, {L_k}, Y) data of a GKSL generator.

    ``drift`` may be supplied directly; otherwise it is derived from the
    Hamiltonian and the jump operators.  Either way the unitality identity
    ``Y + Y* + sum L_k* L_k = 0`` must hold.
    """

    dim: int
    hamiltonian: np.ndarray
    lindblads: tuple[np.ndarray, ...]
    drift: np.ndarray
    tol: Tolerances = field(default=DEFAULT_TOLS, repr=False)

    @classmethod
    def from_ops(
        cls,
        hamiltonian: np.ndarray | None = None,
        lindblads: list[np.ndarray] | tuple[np.ndarray, ...] = (),
        drift: np.ndarray | None = None,
        dim: int | None = None,
        tol: Tolerances = DEFAULT_TOLS,
    ) -> "OpenSystemModel":
        if hamiltonian is None and drift is None and not lindblads and dim is None:
            raise ValueError("need at least one operator or an explicit dimension")
        ops = [hamiltonian, drift, *lindblads]
        for op in ops:
            if op is not None:
                d = np.asarray(op).shape[0]
                break
        else:
            d = dim
        if dim is not None and dim != d:
            raise ValueError("dim disagrees with operator shapes")
        ls = tuple(
            require_finite(require_square(np.asarray(l, dtype=complex), "lindblad"))
            for l in lindblads
        )
        dissip = sum((dagger(l) @ l for l in ls), np.zeros((d, d), dtype=complex))
        if hamiltonian is None and drift is not None:
            y = require_finite(require_square(np.asarray(drift, dtype=complex), "drift"))
            # skew part of Y recovers H; used for reporting only
            h = 1j * (y - dagger(y)) / 2.0
        else:
            h = np.zeros((d, d), dtype=complex) if hamiltonian is None else np.asarray(
                hamiltonian, dtype=complex
            )
            h = require_finite(require_square(h, "hamiltonian"))
            if not is_hermitian(h, tol):
                raise ValueError("hamiltonian must be Hermitian")
            y = -1j * h - 0.5 * dissip if drift is None else np.asarray(drift, dtype=complex)
        unital_defect = np.linalg.norm(y + dagger(y) + dissip)
        scale = max(np.linalg.norm(y), np.linalg.norm(dissip), 1.0)
        if unital_defect > tol.algebraic * scale:
            raise ValueError(
                f"unitality identity violated: |Y + Y* + sum L*L| = {unital_defect:.3e}"
            )
        return cls(dim=d, hamiltonian=h, lindblads=ls, drift=y, tol=tol)


@dataclass(frozen=True)
class QMS:
    """A quantum Markov semigroup, continuous (generator) or discrete
    (one CP unital step map whose powers are tau_n)."""

    kind: str  # "continuous" | "discrete"
    dim: int
    generator: SuperOp | None = None
    step_map: SuperOp | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("continuous", "discrete"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.kind == "continuous" and self.generator is None:
            raise ValueError("continuous QMS requires a generator")
        if self.kind == "discrete" and self.step_map is None:
            raise ValueError("discrete QMS requires a step map")


def build_generator(model: OpenSystemModel, tol: Tolerances | None = None) -> QMS:
    """Assemble the Heisenberg generator of the model as a superoperator."""
    tol = tol or model.tol
    d = model.dim
    y = model.drift
    mat = np.kron(np.eye(d), dagger(y)) + np.kron(y.T, np.eye(d))
    for l in model.lindblads:
        mat = mat + np.kron(l.T, dagger(l))
    gen = SuperOp(mat, d)
    unital = np.linalg.norm(gen.apply(np.eye(d)))
    if unital > tol.algebraic * max(np.linalg.norm(mat), 1.0):
        raise ValueError(f"generator does not annihilate the identity: {unital:.3e}")
    return QMS(kind="continuous", dim=d, generator=gen)


def qms_from_step(step: np.ndarray | SuperOp, tol: Tolerances = DEFAULT_TOLS) -> QMS:
    """Wrap a CP unital map as a discrete-time semigroup, after checking it."""
    if not isinstance(step, SuperOp):
        m = require_finite(np.asarray(step, dtype=complex))
        d = int(round(np.sqrt(m.shape[0])))
        step = SuperOp(m, d)
    verdict = is_cp_unital(step, tol)
    if not verdict.ok:
        raise ValueError(f"step map is not CP unital: {verdict}")
    return QMS(kind="discrete", dim=step.dim, step_map=step)


def evolve(qms: QMS, t: float) -> SuperOp:
    """tau_t as a superoperator: exp(t L) or Phi^t."""
    if t < 0:
        raise ValueError("evolve requires t >= 0")
    if qms.kind == "continuous":
        return SuperOp(matrix_exp(t * qms.generator.mat), qms.dim)
    n = int(round(t))
    if abs(t - n) > 1e-12:
        raise ValueError("discrete semigroups evolve by nonnegative integers")
    return SuperOp(np.linalg.matrix_power(qms.step_map.mat, n), qms.dim)


def predual(s: SuperOp) -> SuperOp:
    """Trace-duality adjoint: tr(predual(s)(rho) x) = tr(rho s(x)).

    With column stacking the predual matrix is the (3,2,1,0) tensor
    transpose of the original superoperator matrix.
    """
    d = s.dim
    m4 = s.mat.reshape(d, d, d, d)
    return SuperOp(np.transpose(m4, (3, 2, 1, 0)).reshape(d * d, d * d), d)


def choi_matrix(s: SuperOp) -> np.ndarray:
    """Choi matrix sum_ij |i><j| (x) s(|i><j|); PSD iff s is CP."""
    d = s.dim
    c = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = 1.0
            c[i * d : (i + 1) * d, j * d : (j + 1) * d] = s.apply(e)
    return c


def kraus_operators(s: SuperOp, tol: Tolerances = DEFAULT_TOLS) -> list[np.ndarray]:
    """Kraus decomposition s(x) = sum_a K_a* x K_a of a CP map.

    This module keeps generators and step maps in the Heisenberg picture,
    so the operators returned satisfy the starred-left convention above.
    """
    c = choi_matrix(s)
    lam, v = np.linalg.eigh((c + dagger(c)) / 2.0)
    lam_max = max(float(lam[-1]), 0.0)
    if lam[0] < -tol.psd_slack * max(lam_max, 1.0) * 100:
        raise ValueError("map is not CP; no Kraus decomposition")
    cutoff = tol.rank_cutoff(c.shape[0], lam_max)
    ops = []
    d = s.dim
    for k in range(lam.size):
        if lam[k] > cutoff:
            # the Choi eigenvector w (unvec'ed) gives the summand
            # x -> w x w*; the starred-left Heisenberg operator is w*
            w = unvec(v[:, k], d) * np.sqrt(lam[k])
            ops.append(dagger(w))
    return ops


@dataclass(frozen=True)
class CPUnitalVerdict:
    ok: bool
    unital_residual: float
    choi_min_eig: float
    choi_scale: float

    def __str__(self) -> str:
        return (
            f"CP-unital {'pass' if self.ok else 'FAIL'} "
            f"(unital residual {self.unital_residual:.2e}, "
            f"Choi min eig {self.choi_min_eig:.2e})"
        )


def is_cp_unital(s: SuperOp, tol: Tolerances = DEFAULT_TOLS) -> CPUnitalVerdict:
    """Check Phi(I) = I and positivity of the Choi matrix."""
    d = s.dim
    unital = float(np.linalg.norm(s.apply(np.eye(d)) - np.eye(d)))
    c = choi_matrix(s)
    lam = np.linalg.eigvalsh((c + dagger(c)) / 2.0)
    scale = max(float(np.max(np.abs(lam))), 1.0)
    ok = unital <= tol.algebraic * max(d, 1) and lam[0] >= -tol.psd_slack * scale
    return CPUnitalVerdict(
        ok=bool(ok),
        unital_residual=unital,
        choi_min_eig=float(lam[0]),
        choi_scale=scale,
    )


def _apply_phi_batch(ls: tuple[np.ndarray, ...], m: np.ndarray) -> np.ndarray:
    """Phi(x) = sum_k L_k* x L_k applied to a stack of matrices."""
    if not ls:
        return np.zeros_like(m)
    lstack = np.stack(ls)
    return np.einsum("kyx,byz,kzw->bxw", lstack.conj(), m, lstack)


def minimal_semigroup_iterate(
    model: OpenSystemModel,
    x: np.ndarray,
    t: float,
    n_max: int,
    mesh: float | None = None,
    require_psd: bool = True,
    tol: Tolerances | None = None,
) -> list[np.ndarray]:
    """Picard iterates of the integral form of the semigroup.

    Computes

        tau^(0)_t(x) = e^{tY*} x e^{tY}
        tau^(n)_t(x) = e^{tY*} x e^{tY}
                       + int_0^t e^{(t-s)Y*} Phi(tau^(n-1)_s(x)) e^{(t-s)Y} ds

    with the integral discretized by the composite trapezoid rule on a
    uniform mesh, caching the previous iterate on the mesh points.  Returns
    the list ``[tau^(0)_t(x), ..., tau^(n_max)_t(x)]``.  For PSD ``x`` the
    sequence is nondecreasing and bounded by ``norm(x) * I`` up to
    discretization error.
    """
    tol = tol or model.tol
    x = require_finite(require_square(np.asarray(x, dtype=complex), "x"))
    if t < 0:
        raise ValueError("t must be nonnegative")
    if require_psd:
        lam = np.linalg.eigvalsh((x + dagger(x)) / 2.0)
        herm = np.linalg.norm(x - dagger(x))
        scale = max(float(np.max(np.abs(lam))), 1.0)
        if herm > tol.algebraic * scale or lam[0] < -tol.psd_slack * scale:
            raise ValueError("monotonicity verification requires PSD x")
    if t == 0:
        return [x.copy() for _ in range(n_max + 1)]
    if mesh is None:
        mesh = 1e-3 * t
    if mesh <= 0:
        raise ValueError("mesh must be positive")
    m = max(int(np.ceil(t / mesh)), 1)
    if m < 16:
        warnings.warn(
            f"mesh {mesh} is coarse for t={t} ({m} intervals); "
            "trapezoid error may dominate",
            RuntimeWarning,
            stacklevel=2,
        )
    h = t / m
    d = model.dim
    e1 = matrix_exp(h * model.drift)
    props = np.empty((m + 1, d, d), dtype=complex)
    props[0] = np.eye(d)
    for j in range(1, m + 1):
        props[j] = props[j - 1] @ e1
    props_dag = props.conj().transpose(0, 2, 1)

    free = np.einsum("jxy,yz,jzw->jxw", props_dag, x, props)

    # The integral at every mesh point is the discrete convolution
    #   C_g = sum_{j<=g} M_{g-j} f_j,   M_k = kron(e^{kh Y*}, e^{kh Y}^T)
    # acting on flattened Phi values, evaluated for all g at once by FFT;
    # composite-trapezoid endpoint corrections are applied afterwards.
    d2 = d * d
    kernels = np.einsum("jxy,jzw->jxwyz", props_dag, props).reshape(m + 1, d2, d2)
    pad = 1 << int(np.ceil(np.log2(2 * m + 2)))
    fk = np.fft.fft(kernels, n=pad, axis=0)

    cur = free.copy()  # tau^(0) on all mesh points
    out = [cur[m].copy()]
    for _ in range(n_max):
        phi_vals = _apply_phi_batch(model.lindblads, cur)
        f_flat = phi_vals.reshape(m + 1, d2)
        ff = np.fft.fft(f_flat, n=pad, axis=0)
        conv = np.fft.ifft(np.einsum("kab,kb->ka", fk, ff), axis=0)[: m + 1]
        integral = h * (
            conv
            - 0.5 * np.einsum("gab,b->ga", kernels, f_flat[0])
            - 0.5 * np.einsum("ab,gb->ga", kernels[0], f_flat)
        )
        integral[0] = 0.0
        cur = free + integral.reshape(m + 1, d, d)
        out.append(cur[m].copy())
    return out


def default_sample_times(kind: str) -> list[float]:
    """The sampling grid used for 'for all t' style checks."""
    if kind == "continuous":
        return [2.0**k for k in range(-3, 6)]
    return [1, 2, 3, 4, 6, 8, 16, 32]


def schwarz_defect(s: SuperOp, y: np.ndarray) -> float:
    """Min eigenvalue of tau(y* y) - tau(y)* tau(y); nonnegative for a CP
    unital map up to roundoff (the two-positivity inequality)."""
    ty = s.apply(y)
    gap = s.apply(dagger(y) @ y) - dagger(ty) @ ty
    return float(np.linalg.eigvalsh((gap + dagger(gap)) / 2.0)[0])


def dynamics_eigenvalues(qms: QMS) -> np.ndarray:
    mat = qms.generator.mat if qms.kind == "continuous" else qms.step_map.mat
    return np.linalg.eigvals(mat)


def gap_of_matrix(mat: np.ndarray, kind: str, tol: Tolerances = DEFAULT_TOLS) -> float:
    """Decay rate of the non-invariant spectrum of a dynamics matrix.

    Continuous: -max Re of the spectrum outside the zero group; discrete:
    -log of the largest modulus outside the fixed group.  Returns 0.0 when
    peripheral (non-invariant, non-decaying) spectrum is present and +inf
    when the dynamics is a projection onto its invariant part already.
    """
    lam = np.linalg.eigvals(mat)
    cut = tol.algebraic * max(np.linalg.norm(mat), 1.0)
    if kind == "continuous":
        rest = lam[np.abs(lam) > cut]
        if rest.size == 0:
            return float("inf")
        m = float(np.max(rest.real))
        return -m if m < -cut else 0.0
    rest = lam[np.abs(lam - 1.0) > cut]
    if rest.size == 0:
        return float("inf")
    r = float(np.max(np.abs(rest)))
    if r <= cut:
        return float("inf")
    return -float(np.log(r)) if r < 1.0 - cut else 0.0


def spectral_gap(qms: QMS, tol: Tolerances = DEFAULT_TOLS) -> float:
    """Asymptotic decay rate of the non-invariant part of the dynamics."""
    mat = qms.generator.mat if qms.kind == "continuous" else qms.step_map.mat
    return gap_of_matrix(mat, qms.kind, tol)


def default_horizon(
    qms: QMS, tol: Tolerances = DEFAULT_TOLS, factor: float = 50.0, cap: float = 1e4
) -> float | None:
    """Horizon T = factor / gap used for 'limit as t -> infinity' probes;
    None when the gap vanishes (no finite horizon is conclusive)."""
    gap = spectral_gap(qms, tol)
    if gap == 0.0:
        return None
    if np.isinf(gap):
        return 1.0 if qms.kind == "continuous" else 1
    t = min(factor / gap, cap)
    return float(t) if qms.kind == "continuous" else max(int(np.ceil(t)), 1)
