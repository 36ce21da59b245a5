"""Finite-dimensional *-subalgebra machinery.

A subalgebra is stored as a Hilbert-Schmidt-orthonormal spanning basis;
membership is a projection-residual test.  That keeps the fixed-point
algebra, the multiplicative domain and the adjoint-composition fixed
points in one uniform, testable representation.
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
    psd_power,
    subspace_contains,
    subspace_equal,
    subspace_intersection,
    unvec,
    vec,
)
from .semigroup import SuperOp
from .states import DensityState

__all__ = [
    "StarSubalgebra",
    "algebra_from_span",
    "generated_algebra",
    "commutant",
    "conditional_expectation",
    "BlockFactor",
    "BlockDecomposition",
    "block_structure",
]


@dataclass(frozen=True)
class StarSubalgebra:
    """A *-subalgebra of M_d given by an HS-orthonormal basis.

    basis has shape (k, d, d).
    """

    dim: int
    basis: np.ndarray
    tol: Tolerances = field(default=DEFAULT_TOLS, repr=False)

    @property
    def algebra_dim(self) -> int:
        return self.basis.shape[0]

    def vec_basis(self) -> np.ndarray:
        """Basis as columns of vectorized matrices, shape (d^2, k)."""
        return np.stack([vec(b) for b in self.basis], axis=1)

    def membership_residual(self, x: np.ndarray) -> float:
        v = vec(np.asarray(x, dtype=complex))
        b = self.vec_basis()
        resid = v - b @ (dagger(b) @ v)
        return float(np.linalg.norm(resid) / max(np.linalg.norm(v), 1.0))

    def contains(self, x: np.ndarray) -> bool:
        return self.membership_residual(x) <= 100 * self.tol.algebraic

    def project(self, x: np.ndarray) -> np.ndarray:
        """HS-orthogonal projection of x onto the span."""
        b = self.vec_basis()
        return unvec(b @ (dagger(b) @ vec(np.asarray(x, dtype=complex))), self.dim)

    def equals(self, other: "StarSubalgebra") -> tuple[bool, float]:
        return subspace_equal(self.vec_basis(), other.vec_basis(), self.tol)

    def closure_defects(self) -> dict[str, float]:
        """Residuals of the unital *-algebra axioms for the stored span."""
        vb = self.vec_basis()
        defects = {
            "identity": subspace_contains(vb, vec(np.eye(self.dim))[:, None], self.tol),
            "adjoint": 0.0,
            "product": 0.0,
        }
        for b in self.basis:
            defects["adjoint"] = max(
                defects["adjoint"],
                subspace_contains(vb, vec(dagger(b))[:, None], self.tol),
            )
        for a in self.basis:
            for b in self.basis:
                defects["product"] = max(
                    defects["product"],
                    subspace_contains(vb, vec(a @ b)[:, None], self.tol),
                )
        return defects


def algebra_from_span(
    mats: list[np.ndarray] | np.ndarray,
    tol: Tolerances = DEFAULT_TOLS,
    check: bool = True,
) -> StarSubalgebra:
    """Orthonormalize a spanning set and (optionally) validate the algebra
    axioms.  ``check=False`` is for callers that assert closure separately
    with their own diagnostics."""
    mats = list(mats)
    if not mats:
        raise ValueError("empty span; a unital algebra needs at least the identity")
    d = np.asarray(mats[0]).shape[0]
    cols = np.stack([vec(np.asarray(m, dtype=complex)) for m in mats], axis=1)
    on = orthonormalize(cols, tol)
    basis = np.stack([unvec(on[:, j], d) for j in range(on.shape[1])])
    alg = StarSubalgebra(dim=d, basis=basis, tol=tol)
    if check:
        defects = alg.closure_defects()
        worst = max(defects.values())
        if worst > 1000 * tol.algebraic:
            raise ValueError(f"span is not a unital *-algebra: defects {defects}")
    return alg


def generated_algebra(
    gens: list[np.ndarray], dim: int | None = None, tol: Tolerances = DEFAULT_TOLS
) -> StarSubalgebra:
    """Smallest unital *-closed product-closed span containing the
    generators, by alternating product/adjoint closure until the dimension
    stabilizes (at most d^2 rounds)."""
    gens = [np.asarray(g, dtype=complex) for g in gens]
    if dim is None:
        if not gens:
            raise ValueError("need generators or an explicit dimension")
        dim = gens[0].shape[0]
    seed = [np.eye(dim, dtype=complex)] + gens + [dagger(g) for g in gens]
    cols = orthonormalize(np.stack([vec(m) for m in seed], axis=1), tol)
    for _ in range(dim * dim + 1):
        mats = [unvec(cols[:, j], dim) for j in range(cols.shape[1])]
        prods = [a @ b for a in mats for b in mats]
        new_cols = orthonormalize(
            np.hstack([cols, np.stack([vec(p) for p in prods], axis=1)]), tol
        )
        if new_cols.shape[1] == cols.shape[1]:
            cols = new_cols
            break
        cols = new_cols
    basis = np.stack([unvec(cols[:, j], dim) for j in range(cols.shape[1])])
    return StarSubalgebra(dim=dim, basis=basis, tol=tol)


def commutant(alg: StarSubalgebra, check_double: bool = True) -> StarSubalgebra:
    """{x : xb = bx for every basis element b}, via the nullspace of the
    stacked commutator superoperators."""
    d = alg.dim
    blocks = [
        np.kron(np.eye(d), b) - np.kron(b.T, np.eye(d)) for b in alg.basis
    ]
    stacked = np.vstack(blocks) if blocks else np.zeros((0, d * d))
    kern = nullspace(stacked, alg.tol)
    mats = [unvec(kern[:, j], d) for j in range(kern.shape[1])]
    out = algebra_from_span(mats if mats else [np.eye(d)], alg.tol)
    if check_double:
        dd = commutant(out, check_double=False)
        regen = generated_algebra(list(alg.basis), d, alg.tol)
        ok, resid = dd.equals(regen)
        if not ok:
            raise ValueError(
                f"double commutant mismatch (residual {resid:.2e}); "
                "input span was probably not an algebra"
            )
    return out


def conditional_expectation(
    alg: StarSubalgebra, state: DensityState, tol: Tolerances | None = None
) -> SuperOp:
    """The state-preserving conditional expectation onto ``alg``.

    Realized as the orthogonal projection onto the subalgebra in the GNS
    inner product <a, b> = tr(rho a* b) of a faithful state.  It exists as
    a positive unital idempotent precisely when the subalgebra is invariant
    under the modular group of the state; in finite dimension that is
    equivalent to invariance under x -> rho x rho^{-1}, which is what gets
    checked (exactly, with no time sampling).  We refuse rather than
    return a non-positive "expectation".
    """
    tol = tol or alg.tol
    if not state.faithful:
        raise ValueError("conditional expectation requires a faithful state")
    rho = state.rho
    d = alg.dim
    rho_inv = psd_power(rho, -1.0, tol)
    vb = alg.vec_basis()
    worst = 0.0
    for b in alg.basis:
        worst = max(worst, subspace_contains(vb, vec(rho @ b @ rho_inv)[:, None], tol))
    if worst > 1000 * tol.algebraic:
        raise ValueError(
            "subalgebra is not modular-invariant for this state "
            f"(residual {worst:.2e}); a state-preserving expectation need not exist"
        )
    k = alg.algebra_dim
    gram = np.empty((k, k), dtype=complex)
    for i in range(k):
        for j in range(k):
            gram[i, j] = np.trace(rho @ dagger(alg.basis[i]) @ alg.basis[j])
    gram_inv = np.linalg.inv(gram)
    # E(x) = sum_ij b_i (G^-1)_ij tr(rho b_j* x); tr(rho b_j* x) = <vec(b_j rho), vec(x)>
    mat = np.zeros((d * d, d * d), dtype=complex)
    for i in range(k):
        for j in range(k):
            mat += gram_inv[i, j] * np.outer(
                vec(alg.basis[i]), vec(alg.basis[j] @ rho).conj()
            )
    e = SuperOp(mat, d)
    idem = np.linalg.norm(mat @ mat - mat)
    unital = np.linalg.norm(e.apply(np.eye(d)) - np.eye(d))
    preserve = abs(np.trace(rho @ e.apply(rho)) - np.trace(rho @ rho))
    if max(idem, unital, float(preserve)) > 1e5 * tol.algebraic:
        raise ValueError(
            f"expectation construction failed (idem {idem:.2e}, unital {unital:.2e})"
        )
    return e


@dataclass(frozen=True)
class BlockFactor:
    """One Artin-Wedderburn summand M_n (x) I_m of a type-I algebra with
    atomic center."""

    block_dim: int
    multiplicity: int


@dataclass(frozen=True)
class BlockDecomposition:
    factors: tuple[BlockFactor, ...]
    unitary: np.ndarray

    def factor_pairs(self) -> list[tuple[int, int]]:
        return [(f.block_dim, f.multiplicity) for f in self.factors]


def _generic_hermitian(basis: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """A random Hermitian element of the span of the given matrices."""
    herm = []
    for b in basis:
        herm.append(b + dagger(b))
        herm.append(1j * (b - dagger(b)))
    coeff = rng.standard_normal(len(herm))
    out = sum(c * h for c, h in zip(coeff, herm))
    return (out + dagger(out)) / 2.0


def _cluster_eigh(a: np.ndarray, rel_gap: float = 1e-6):
    """Eigendecomposition with eigenvalues grouped into well separated
    clusters; returns a list of (value, eigenvector-column-block)."""
    lam, v = np.linalg.eigh(a)
    spread = max(float(lam[-1] - lam[0]), 1.0)
    groups = []
    start = 0
    for i in range(1, lam.size + 1):
        if i == lam.size or lam[i] - lam[i - 1] > rel_gap * spread:
            groups.append((float(np.mean(lam[start:i])), v[:, start:i]))
            start = i
    return groups


def _minimal_projections_and_units(
    corner_basis: np.ndarray, rng: np.random.Generator, tol: Tolerances
) -> tuple[int, int, np.ndarray]:
    """Factor structure of a corner algebra acting on C^r.

    Returns (n, m, w) where the corner is isomorphic to M_n (x) I_m and w
    is an r x r unitary realizing that form.
    """
    r = corner_basis.shape[1]
    k = corner_basis.shape[0]
    n = int(round(np.sqrt(k)))
    if n * n != k:
        raise ValueError(f"corner algebra dimension {k} is not a perfect square")
    m, rem = divmod(r, n)
    if rem:
        raise ValueError("corner rank is not divisible by the factor dimension")
    a = _generic_hermitian(corner_basis, rng)
    groups = _cluster_eigh(a)
    if len(groups) != n:
        raise ValueError(
            f"generic element produced {len(groups)} spectral clusters, expected {n}; "
            "retry with another seed"
        )
    projs = [vcols @ dagger(vcols) for _, vcols in groups]
    c = _generic_hermitian(corner_basis, rng)
    e1 = projs[0]
    isometries = [e1]
    for ek in projs[1:]:
        w = ek @ c @ e1
        u, s, vh = np.linalg.svd(w)
        cutoff = tol.rank_cutoff(r, float(s[0]) if s.size else 0.0)
        rank = int(np.sum(s > cutoff))
        if rank != m:
            raise ValueError("partial isometry construction failed; retry seed")
        isometries.append(u[:, :rank] @ vh[:rank, :])
    lam1, v1 = np.linalg.eigh(e1)
    fbasis = v1[:, lam1 > 0.5]
    cols = []
    for vk in isometries:
        for mu in range(m):
            cols.append(vk @ fbasis[:, mu])
    w = np.stack(cols, axis=1)
    if np.linalg.norm(dagger(w) @ w - np.eye(r)) > 1e4 * tol.algebraic:
        raise ValueError("matrix-unit basis is not orthonormal; retry seed")
    return n, m, w


def block_structure(
    alg: StarSubalgebra, rng_seed: int = 7, tol: Tolerances | None = None
) -> BlockDecomposition:
    """Artin-Wedderburn decomposition: a unitary W and factors (n_i, m_i)
    with W* alg W = direct sum of M_{n_i} (x) I_{m_i}.

    Computed from the joint eigenspaces of the center (minimal central
    projections via a generic central element) followed by a matrix-unit
    construction inside each central corner.
    """
    tol = tol or alg.tol
    d = alg.dim
    comm = commutant(alg, check_double=False)
    center_cols = subspace_intersection(alg.vec_basis(), comm.vec_basis(), tol)
    center = [unvec(center_cols[:, j], d) for j in range(center_cols.shape[1])]
    if not center:
        raise ValueError("center is empty; input is not a unital algebra")
    rng = np.random.default_rng(rng_seed)
    z = _generic_hermitian(np.stack(center), rng)
    groups = _cluster_eigh(z)
    blocks = []
    columns = []
    for _, vcols in groups:
        viso = vcols
        corner = np.stack([dagger(viso) @ b @ viso for b in alg.basis])
        corner_cols = orthonormalize(
            np.stack([vec(c) for c in corner], axis=1), tol
        )
        r = viso.shape[1]
        corner_basis = np.stack(
            [unvec(corner_cols[:, j], r) for j in range(corner_cols.shape[1])]
        )
        n, m, w_local = _minimal_projections_and_units(corner_basis, rng, tol)
        blocks.append(BlockFactor(block_dim=n, multiplicity=m))
        columns.append(viso @ w_local)
    w = np.hstack(columns)
    if np.linalg.norm(dagger(w) @ w - np.eye(d)) > 1e4 * tol.algebraic:
        raise ValueError("assembled basis change is not unitary")
    if sum(f.block_dim * f.multiplicity for f in blocks) != d:
        raise ValueError("block dimensions do not add up to the ambient dimension")
    if sum(f.block_dim**2 for f in blocks) != alg.algebra_dim:
        raise ValueError("block structure inconsistent with the algebra dimension")
    return BlockDecomposition(factors=tuple(blocks), unitary=w)
