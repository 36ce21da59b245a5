"""Modular data of a faithful state, the KMS (Petz) adjoint semigroup,
detailed-balance decomposition, and the J-twisted correlation.

The GNS space of a faithful state is realized as the d x d matrices with
the Hilbert-Schmidt inner product and cyclic vector rho^(1/2); there the
modular operator acts as Delta(a) = rho a rho^{-1} and the modular
conjugation as J(a) = a*.

Sign convention for the analytic continuation of the modular group: with

    twist_s(x) = rho^s x rho^{-s}

the adjoint relation that the constructed semigroup satisfies is

    phi_0( twist_{-1/2}(x) tau_t(y) ) = phi_0( tilde-tau_t(x) twist_{+1/2}(y) ).

The opposite placement fails for non-tracial faithful states; the chosen
one is verified at construction time and reduces to plain trace duality
when rho = I/d.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .matrixcore import (
    DEFAULT_TOLS,
    Tolerances,
    dagger,
    matrix_units,
    psd_power,
    require_finite,
    require_square,
    unvec,
    vec,
)
from .semigroup import (
    QMS,
    SuperOp,
    default_sample_times,
    evolve,
    is_cp_unital,
    predual,
)
from .states import DensityState

__all__ = [
    "ModularData",
    "modular_data",
    "modular_twist",
    "invariance_residual",
    "kms_adjoint",
    "eq_adjoint_residual",
    "DetailedBalanceReport",
    "detailed_balance_decomposition",
    "j_correlation",
    "traceless_hermitian_basis",
]


def _transpose_perm(d: int) -> np.ndarray:
    """Permutation matrix T with T vec(x) = vec(x^T)."""
    t = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            t[j + d * i, i + d * j] = 1.0
    return t


@dataclass(frozen=True)
class ModularData:
    """Modular objects (Delta, J) of a faithful state on the HS-GNS space.

    j_linear is the linear part of the anti-linear J: applying J to a
    vectorized GNS vector v is ``conj(j_linear @ v)``, which at the matrix
    level is just the adjoint a -> a*.
    """

    state: DensityState
    delta: SuperOp
    j_linear: np.ndarray
    gns_metric: np.ndarray
    sqrt_rho: np.ndarray
    inv_sqrt_rho: np.ndarray

    def apply_delta(self, a: np.ndarray, power: float = 1.0) -> np.ndarray:
        rho = self.state.rho
        return (
            psd_power(rho, power, self.state.tol)
            @ a
            @ psd_power(rho, -power, self.state.tol)
        )

    def apply_j(self, a: np.ndarray) -> np.ndarray:
        return dagger(a)


def modular_data(state: DensityState, tol: Tolerances | None = None) -> ModularData:
    tol = tol or state.tol
    if not state.faithful:
        raise ValueError("modular data requires a faithful state")
    rho = state.rho
    d = state.dim
    sqrt_rho = psd_power(rho, 0.5, tol)
    inv_sqrt_rho = psd_power(rho, -0.5, tol)
    rho_inv = inv_sqrt_rho @ inv_sqrt_rho
    delta = SuperOp(np.kron(rho_inv.T, rho), d)
    j_linear = _transpose_perm(d)
    metric = np.kron(rho.T, np.eye(d))
    data = ModularData(
        state=state,
        delta=delta,
        j_linear=j_linear,
        gns_metric=metric,
        sqrt_rho=sqrt_rho,
        inv_sqrt_rho=inv_sqrt_rho,
    )
    # defining identity of S = J Delta^(1/2): x rho^(1/2) -> x* rho^(1/2)
    worst = 0.0
    for u in matrix_units(d):
        half = sqrt_rho @ (u @ sqrt_rho) @ inv_sqrt_rho
        worst = max(worst, float(np.linalg.norm(dagger(half) - dagger(u) @ sqrt_rho)))
    if worst > 1e-10 * max(np.linalg.norm(rho), 1.0) * 100:
        raise ValueError(f"modular identity S = J Delta^(1/2) failed: {worst:.2e}")
    return data


def modular_twist(state: DensityState, x: np.ndarray, s: float) -> np.ndarray:
    """rho^s x rho^{-s}, the analytic continuation of the modular group."""
    rho = state.rho
    return psd_power(rho, s, state.tol) @ x @ psd_power(rho, -s, state.tol)


def invariance_residual(qms: QMS, state: DensityState) -> float:
    """Norm residual of the state being fixed by the predual dynamics."""
    if qms.kind == "continuous":
        return float(np.linalg.norm(predual(qms.generator).apply(state.rho)))
    return float(np.linalg.norm(predual(qms.step_map).apply(state.rho) - state.rho))


def kms_adjoint(
    qms: QMS, state: DensityState, tol: Tolerances | None = None
) -> QMS:
    """The KMS (Petz) adjoint semigroup of ``qms`` for a faithful
    invariant state, as the rho^(1/2)-sandwiched trace dual:

        tilde-tau_t(x) = rho^{-1/2} tau_t_predual( rho^{1/2} x rho^{1/2} ) rho^{-1/2}.

    The generator (or step map) is assembled by the same sandwich on the
    predual; the adjoint relation is then verified on the matrix-unit
    basis rather than used as the construction.
    """
    tol = tol or state.tol
    if not state.faithful:
        raise ValueError("the KMS adjoint requires a faithful state")
    inv_res = invariance_residual(qms, state)
    if inv_res > 1000 * tol.algebraic:
        raise ValueError(
            f"state is not invariant (residual {inv_res:.2e}); "
            "the adjoint relation cannot hold"
        )
    d = qms.dim
    sqrt_rho = psd_power(state.rho, 0.5, tol)
    inv_sqrt = psd_power(state.rho, -0.5, tol)
    sandwich = np.kron(sqrt_rho.T, sqrt_rho)
    unsandwich = np.kron(inv_sqrt.T, inv_sqrt)
    if qms.kind == "continuous":
        mat = unsandwich @ predual(qms.generator).mat @ sandwich
        adj = QMS(kind="continuous", dim=d, generator=SuperOp(mat, d))
    else:
        mat = unsandwich @ predual(qms.step_map).mat @ sandwich
        adj = QMS(kind="discrete", dim=d, step_map=SuperOp(mat, d))
        verdict = is_cp_unital(adj.step_map, tol)
        if not verdict.ok:
            raise ValueError(f"adjoint step map is not CP unital: {verdict}")
    adj_inv = invariance_residual(adj, state)
    if adj_inv > 1000 * tol.algebraic:
        raise ValueError(f"adjoint does not preserve the state: {adj_inv:.2e}")
    resid = eq_adjoint_residual(qms, adj, state)
    if resid > 1e-8 * max(np.linalg.norm(state.rho), 1.0) * 10:
        raise ValueError(f"adjoint relation residual too large: {resid:.2e}")
    return adj


def eq_adjoint_residual(
    qms: QMS,
    adjoint_qms: QMS,
    state: DensityState,
    times: list[float] | None = None,
) -> float:
    """Max residual of the KMS adjoint relation over the matrix-unit basis
    and the sampled times."""
    d = qms.dim
    units = matrix_units(d)
    times = times if times is not None else default_sample_times(qms.kind)[:4]
    rho = state.rho
    sqrt_rho = psd_power(rho, 0.5, state.tol)
    inv_sqrt = psd_power(rho, -0.5, state.tol)
    worst = 0.0
    for t in times:
        fwd = evolve(qms, t)
        bwd = evolve(adjoint_qms, t)
        for x in units:
            tw_x = inv_sqrt @ x @ sqrt_rho  # twist_{-1/2}(x)
            bx = bwd.apply(x)
            for y in units:
                lhs = np.trace(rho @ tw_x @ fwd.apply(y))
                tw_y = sqrt_rho @ y @ inv_sqrt  # twist_{+1/2}(y)
                rhs = np.trace(rho @ bx @ tw_y)
                worst = max(worst, abs(lhs - rhs))
    return float(worst)


def traceless_hermitian_basis(d: int) -> list[np.ndarray]:
    """HS-orthonormal basis of the traceless Hermitian d x d matrices."""
    out = []
    for i in range(d):
        for j in range(i + 1, d):
            sym = np.zeros((d, d), dtype=complex)
            sym[i, j] = sym[j, i] = 1.0 / np.sqrt(2.0)
            out.append(sym)
            asym = np.zeros((d, d), dtype=complex)
            asym[i, j] = -1j / np.sqrt(2.0)
            asym[j, i] = 1j / np.sqrt(2.0)
            out.append(asym)
    for k in range(1, d):
        diag = np.zeros(d, dtype=complex)
        diag[:k] = 1.0
        diag[k] = -k
        out.append(np.diag(diag / np.linalg.norm(diag)))
    return out


@dataclass(frozen=True)
class DetailedBalanceReport:
    """Normality plus the inner-derivation decomposition of L~ - L.

    h_prime is the traceless self-adjoint K minimizing
    | (L~ - L) - 2i[K, .] | in Frobenius norm over superoperators;
    detailed balance holds when the dynamics is normal (the two semigroups
    commute) and the minimum is numerically zero.
    """

    is_normal: bool
    commutation_residual: float
    h_prime: np.ndarray | None
    residual: float
    is_detailed_balance: bool


def detailed_balance_decomposition(
    qms: QMS,
    adjoint_qms: QMS,
    state: DensityState,
    tol: Tolerances | None = None,
) -> DetailedBalanceReport:
    tol = tol or state.tol
    d = qms.dim
    if qms.kind == "continuous":
        a_mat = qms.generator.mat
        b_mat = adjoint_qms.generator.mat
    else:
        a_mat = qms.step_map.mat
        b_mat = adjoint_qms.step_map.mat
    scale = max(np.linalg.norm(a_mat), np.linalg.norm(b_mat), 1.0)
    comm = float(np.linalg.norm(a_mat @ b_mat - b_mat @ a_mat)) / scale**2
    sampled = 0.0
    for t in default_sample_times(qms.kind)[:4]:
        for s in default_sample_times(qms.kind)[:4]:
            f = evolve(qms, t).mat
            g = evolve(adjoint_qms, s).mat
            sampled = max(sampled, float(np.linalg.norm(f @ g - g @ f)))
    is_normal = comm <= 100 * tol.algebraic and sampled <= 1000 * tol.algebraic

    diff = b_mat - a_mat
    basis = traceless_hermitian_basis(d)
    cols = []
    for b in basis:
        ad = 2j * (np.kron(np.eye(d), b) - np.kron(b.T, np.eye(d)))
        cols.append(ad.reshape(-1))
    a = np.stack(cols, axis=1)
    rhs = diff.reshape(-1)
    a_real = np.vstack([a.real, a.imag])
    rhs_real = np.concatenate([rhs.real, rhs.imag])
    coeff, *_ = np.linalg.lstsq(a_real, rhs_real, rcond=None)
    k = sum(c * b for c, b in zip(coeff, basis))
    k = (k + dagger(k)) / 2.0
    resid = float(np.linalg.norm(a @ coeff - rhs))
    is_db = bool(is_normal and resid <= 1e-8 * max(scale, 1.0) * 10)
    return DetailedBalanceReport(
        is_normal=bool(is_normal),
        commutation_residual=float(max(comm, sampled)),
        h_prime=k,
        residual=resid,
        is_detailed_balance=is_db,
    )


def j_correlation(
    qms: QMS, modular: ModularData, x: np.ndarray, y: np.ndarray, t: float
) -> complex:
    """phi_0( J tau_t(x) J tau_t(y) ) in the GNS representation.

    In the HS standard form, J z J acts by right multiplication with z*,
    so the value reduces to tr( rho^(1/2) tau_t(y) rho^(1/2) tau_t(x)* ).
    """
    x = require_finite(require_square(np.asarray(x, dtype=complex)))
    y = require_finite(require_square(np.asarray(y, dtype=complex)))
    s = evolve(qms, t)
    tx = s.apply(x)
    ty = s.apply(y)
    r = modular.sqrt_rho
    return complex(np.trace(r @ ty @ r @ dagger(tx)))
