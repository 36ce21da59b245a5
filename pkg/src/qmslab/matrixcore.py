"""Dense complex matrix primitives shared by every other module.

Conventions fixed here once and used everywhere:

* Vectorization is column-stacking, so ``vec(A X B) = (B^T kron A) vec(X)``.
  A superoperator on d x d matrices is therefore a d^2 x d^2 matrix acting
  on ``vec``'ed inputs.
* Rank decisions are always made from singular values (or Hermitian
  eigenvalues) against the cutoff ``rank_cutoff_factor * eps * dim * s_max``,
  never from pivoted elimination.  Gram matrices produced by the dilation
  kernel are near-singular by construction and pivoting is not reliable
  there.
* Positive-semidefinite inputs are allowed tiny negative eigenvalues
  (relative size ``psd_slack``); they are clamped to zero before any
  fractional power is taken.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "Tolerances",
    "DEFAULT_TOLS",
    "vec",
    "unvec",
    "dagger",
    "hs_inner",
    "require_square",
    "require_finite",
    "is_hermitian",
    "matrix_exp",
    "psd_power",
    "nullspace",
    "gram_quotient",
    "spectral_projection",
    "orthonormalize",
    "span_projector",
    "projection_residual",
    "subspace_contains",
    "subspace_equal",
    "subspace_intersection",
    "restrict_to_span",
    "trace_norm",
    "matrix_units",
    "adjoint_unit_index",
]

_EPS = float(np.finfo(np.float64).eps)


@dataclass(frozen=True)
class Tolerances:
    """Global numeric tolerances.

    algebraic:
        Relative residual bound for algebraic identities (semigroup law,
        adjoint relations, projector equations, ...).
    rank_cutoff_factor:
        Multiplier on ``eps * dim * s_max`` below which singular values are
        treated as zero in rank/nullspace decisions.
    psd_slack:
        Permitted magnitude of negative eigenvalues of nominally PSD
        matrices, relative to the largest eigenvalue.
    """

    algebraic: float = 1e-9
    rank_cutoff_factor: float = 64.0
    psd_slack: float = 1e-10

    def __post_init__(self) -> None:
        if self.algebraic <= 0 or self.rank_cutoff_factor <= 0 or self.psd_slack <= 0:
            raise ValueError("all tolerance fields must be strictly positive")

    def rank_cutoff(self, dim: int, s_max: float) -> float:
        return self.rank_cutoff_factor * _EPS * max(dim, 1) * max(s_max, _EPS)


DEFAULT_TOLS = Tolerances()


def vec(x: np.ndarray) -> np.ndarray:
    """Column-stack a matrix into a vector."""
    return np.asarray(x).reshape(-1, order="F")


def unvec(v: np.ndarray, rows: int, cols: int | None = None) -> np.ndarray:
    """Inverse of :func:`vec`."""
    v = np.asarray(v)
    if cols is None:
        cols = rows
    return v.reshape((rows, cols), order="F")


def dagger(x: np.ndarray) -> np.ndarray:
    return np.asarray(x).conj().T


def hs_inner(a: np.ndarray, b: np.ndarray) -> complex:
    """Hilbert-Schmidt inner product tr(a* b)."""
    return complex(np.vdot(a, b))


def require_square(a: np.ndarray, what: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{what} must be square, got shape {a.shape}")
    return a


def require_finite(a: np.ndarray, what: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if not np.all(np.isfinite(a.real)) or not np.all(np.isfinite(a.imag)):
        raise ValueError(f"{what} contains non-finite entries")
    return a


def is_hermitian(a: np.ndarray, tol: Tolerances = DEFAULT_TOLS) -> bool:
    a = np.asarray(a)
    scale = max(np.linalg.norm(a), 1.0)
    return bool(np.linalg.norm(a - dagger(a)) <= tol.algebraic * scale)


def matrix_exp(a: np.ndarray) -> np.ndarray:
    """Matrix exponential of a square complex matrix.

    Backed by scipy's scaling-and-squaring Pade implementation.  Non-square
    or non-finite input is rejected.
    """
    a = require_finite(require_square(a, "matrix_exp input"), "matrix_exp input")
    return scipy.linalg.expm(a)


def psd_power(a: np.ndarray, p: float, tol: Tolerances = DEFAULT_TOLS) -> np.ndarray:
    """Spectral power a^p of a Hermitian PSD matrix.

    Eigenvalues in ``[-psd_slack * lam_max, 0)`` are clamped to zero.  A
    negative eigenvalue beyond the slack is an error, as is a negative
    exponent on a matrix with a nontrivial kernel (the caller is expected
    to restrict to the support first).
    """
    a = require_finite(require_square(a, "psd_power input"), "psd_power input")
    if not is_hermitian(a, tol):
        raise ValueError("psd_power input must be Hermitian")
    lam, v = np.linalg.eigh((a + dagger(a)) / 2.0)
    scale = max(float(lam[-1]), 0.0)
    slack = tol.psd_slack * max(scale, 1.0)
    if lam[0] < -slack:
        raise ValueError(
            f"matrix is not PSD within slack: min eigenvalue {lam[0]:.3e}"
        )
    lam = np.clip(lam, 0.0, None)
    if p < 0:
        cutoff = tol.rank_cutoff(a.shape[0], scale)
        if np.any(lam <= cutoff):
            raise ValueError("negative power of a singular PSD matrix")
    powered = lam.astype(float) ** p
    return (v * powered) @ dagger(v)


def nullspace(a: np.ndarray, tol: Tolerances = DEFAULT_TOLS) -> np.ndarray:
    """Orthonormal basis of the numerical kernel, as columns.

    Directions whose singular values fall below the rank cutoff are kept.
    The result has shape (n, k) with k possibly zero.
    """
    a = require_finite(np.atleast_2d(np.asarray(a, dtype=complex)))
    m, n = a.shape
    if m == 0:
        return np.eye(n, dtype=complex)
    _, s, vh = np.linalg.svd(a, full_matrices=True)
    s_max = float(s[0]) if s.size else 0.0
    cutoff = tol.rank_cutoff(max(m, n), s_max)
    rank = int(np.sum(s > cutoff))
    return dagger(vh)[:, rank:]


def gram_quotient(
    g: np.ndarray, tol: Tolerances = DEFAULT_TOLS
) -> tuple[np.ndarray, int]:
    """Rank-revealing quotient of a Hermitian PSD Gram matrix.

    Returns ``(q, dim)`` where ``q`` has shape (dim, n), full row rank, and
    ``q* q`` reproduces ``g`` up to the quotient: the i-th column of ``q``
    is the image in C^dim of the i-th abstract spanning vector, and images
    have pairwise inner products equal to the Gram entries.

    A significantly non-PSD input signals a kernel-construction bug
    upstream and is rejected.
    """
    g = require_finite(require_square(g, "gram matrix"), "gram matrix")
    herm_defect = np.linalg.norm(g - dagger(g))
    scale = max(np.linalg.norm(g), 1.0)
    if herm_defect > tol.algebraic * scale * 10:
        raise ValueError("gram matrix is not Hermitian")
    lam, v = np.linalg.eigh((g + dagger(g)) / 2.0)
    lam_max = max(float(lam[-1]), 0.0)
    if lam[0] < -tol.psd_slack * max(lam_max, 1.0):
        raise ValueError(
            f"gram matrix significantly non-PSD: min eigenvalue {lam[0]:.3e}"
        )
    cutoff = tol.rank_cutoff(g.shape[0], lam_max)
    keep = lam > cutoff
    dim = int(np.sum(keep))
    q = (np.sqrt(lam[keep].astype(float))[:, None]) * dagger(v[:, keep])
    return q, dim


def spectral_projection(a: np.ndarray, select) -> np.ndarray:
    """Spectral (Riesz) projection of ``a`` onto the eigenvalue group
    picked out by the callable ``select``.

    Computed from a sorted complex Schur form; the off-diagonal coupling is
    removed with a Sylvester solve, so no diagonalizability assumption is
    needed.  The selected eigenvalue group must be well separated from the
    rest for the Sylvester equation to be well conditioned.
    """
    a = require_finite(require_square(a, "spectral_projection input"))
    n = a.shape[0]
    t, z, sdim = scipy.linalg.schur(a, output="complex", sort=select)
    if sdim == 0:
        return np.zeros_like(a)
    if sdim == n:
        return np.eye(n, dtype=complex)
    t11 = t[:sdim, :sdim]
    t12 = t[:sdim, sdim:]
    t22 = t[sdim:, sdim:]
    # t11 X - X t22 = -t12  <=>  solve_sylvester(t11, -t22, -t12)
    x = scipy.linalg.solve_sylvester(t11, -t22, -t12)
    core = np.zeros((n, n), dtype=complex)
    core[:sdim, :sdim] = np.eye(sdim)
    core[:sdim, sdim:] = -x
    return z @ core @ dagger(z)


def orthonormalize(
    vectors: np.ndarray, tol: Tolerances = DEFAULT_TOLS
) -> np.ndarray:
    """Orthonormal basis (columns) of the span of the given columns."""
    v = np.atleast_2d(np.asarray(vectors, dtype=complex))
    if v.size == 0 or v.shape[1] == 0:
        return np.zeros((v.shape[0], 0), dtype=complex)
    u, s, _ = np.linalg.svd(v, full_matrices=False)
    s_max = float(s[0]) if s.size else 0.0
    cutoff = tol.rank_cutoff(max(v.shape), s_max)
    rank = int(np.sum(s > cutoff))
    return u[:, :rank]


def span_projector(basis: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the span of orthonormal columns."""
    b = np.asarray(basis)
    return b @ dagger(b)


def projection_residual(basis: np.ndarray, v: np.ndarray) -> float:
    """Distance of ``v`` (a vector) from the span of orthonormal columns,
    relative to ``norm(v)`` (absolute if ``v`` is tiny)."""
    v = np.asarray(v, dtype=complex).reshape(-1)
    b = np.asarray(basis)
    resid = v - b @ (dagger(b) @ v)
    nv = np.linalg.norm(v)
    return float(np.linalg.norm(resid) / max(nv, 1.0))


def subspace_contains(
    big: np.ndarray, small: np.ndarray, tol: Tolerances = DEFAULT_TOLS
) -> float:
    """Max projection residual of ``small``'s columns against ``big``'s span.

    Near zero iff span(small) is contained in span(big).
    """
    small = np.atleast_2d(np.asarray(small, dtype=complex))
    if small.shape[1] == 0:
        return 0.0
    return max(projection_residual(big, small[:, j]) for j in range(small.shape[1]))


def subspace_equal(
    a: np.ndarray, b: np.ndarray, tol: Tolerances = DEFAULT_TOLS
) -> tuple[bool, float]:
    """Subspace equality check; returns (verdict, worst mutual residual)."""
    r = max(subspace_contains(a, b, tol), subspace_contains(b, a, tol))
    same_dim = a.shape[1] == b.shape[1]
    return bool(same_dim and r <= 100 * tol.algebraic), r


def subspace_intersection(
    a: np.ndarray, b: np.ndarray, tol: Tolerances = DEFAULT_TOLS
) -> np.ndarray:
    """Orthonormal basis of span(a) intersect span(b)."""
    if a.shape[1] == 0 or b.shape[1] == 0:
        return np.zeros((a.shape[0], 0), dtype=complex)
    pa = span_projector(a)
    pb = span_projector(b)
    # x in both spans iff (2 - Pa - Pb) x = 0
    return nullspace(2 * np.eye(a.shape[0], dtype=complex) - pa - pb, tol)


def restrict_to_span(
    cols: np.ndarray,
    target: np.ndarray,
    tol: Tolerances = DEFAULT_TOLS,
    angle_tol: float = 1e-8,
) -> np.ndarray:
    """Orthonormal basis of the part of span(cols) lying inside
    span(target).

    Decided by principal-angle sines against the absolute ``angle_tol``
    rather than a cutoff relative to the residual's own largest singular
    value; the latter keeps everything when cols is (numerically) fully
    contained, because then the residual matrix is itself noise.
    """
    cols = orthonormalize(cols, tol)
    if cols.shape[1] == 0:
        return cols
    if target.shape[1] == 0:
        return np.zeros((cols.shape[0], 0), dtype=complex)
    resid = cols - target @ (dagger(target) @ cols)
    _, s, vh = np.linalg.svd(resid, full_matrices=True)
    s = np.concatenate([s, np.zeros(cols.shape[1] - s.size)])
    rank = int(np.sum(s > angle_tol))
    coeff = dagger(vh)[:, rank:]
    return orthonormalize(cols @ coeff, tol)


def trace_norm(a: np.ndarray) -> float:
    """Schatten 1-norm."""
    return float(np.sum(np.linalg.svd(np.asarray(a, dtype=complex), compute_uv=False)))


def matrix_units(d: int) -> np.ndarray:
    """All d^2 matrix units, ordered so that unit u satisfies
    ``vec(units[u]) = e_u`` (coefficient vectors in this basis coincide
    with column-stacked vectorization)."""
    out = np.zeros((d * d, d, d), dtype=complex)
    for u in range(d * d):
        out[u] = unvec(np.eye(d * d)[:, u], d)
    return out


def adjoint_unit_index(u: int, d: int) -> int:
    """Index of the adjoint of matrix unit u in the :func:`matrix_units`
    ordering (e_ij* = e_ji)."""
    i, j = u % d, u // d
    return j + d * i
