"""Ergodicity, weak/strong mixing, and the Kolmogorov property.

All classification happens on the GNS contraction semigroup P0 of the
invariant state: the dynamics descended to the GNS space of phi_0 (the
quotient that removes null vectors when the state is not faithful).
Correlations phi_0(x tau_t(y)) are matrix elements of P0, so its spectrum
decides the Cesaro / time-averaged / plain decay criteria.  In finite
dimension:

* ergodic        <=>  the invariant eigenspace of P0 is one-dimensional,
* weak mixing    <=>  strong mixing  <=>  ergodic and no further
                      peripheral spectrum (imag axis / unit circle),
* Kolmogorov     <=>  two-point correlations phi_0(tau_t(x) tau_t(y))
                      converge to the product, which spectrally collapses
                      onto strong mixing (the finite-dimensional shadow of
                      the compact-resolvent corollary).

Spectral verdicts are therefore primary; correlation decay at a horizon
T = 50/gap backs every verdict numerically and the two must agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adjoint import kms_adjoint
from .fixedpoints import g_algebra, multiplicative_domain_algebra
from .matrixcore import (
    DEFAULT_TOLS,
    Tolerances,
    dagger,
    matrix_units,
    nullspace,
    trace_norm,
    unvec,
)
from .semigroup import (
    QMS,
    evolve,
    gap_of_matrix,
    predual,
)
from .states import DensityState

__all__ = [
    "Verdict",
    "GnsQuotient",
    "gns_quotient",
    "correlation",
    "AsymptoticsReport",
    "spectral_classification",
    "KPropertyVerdict",
    "k_property_test",
    "TypeICrossCheck",
    "cross_check_typeI",
    "ConjectureProbe",
    "conjecture_probe",
    "decay_table",
]


@dataclass(frozen=True)
class Verdict:
    value: bool
    witness: float | None = None
    note: str = ""


@dataclass(frozen=True)
class GnsQuotient:
    """The dynamics on the GNS space of the invariant state.

    Vectors are classes of observables x, realized as d x r matrices x V
    where V spans the support of rho; the inner product is
    <X, Y> = tr(rho_hat X* Y).  p0_mat is the generator (continuous) or
    the step map (discrete) of the descended contraction semigroup.
    """

    kind: str
    v: np.ndarray
    rho_hat: np.ndarray
    p0_mat: np.ndarray

    @property
    def ambient_dim(self) -> int:
        return self.v.shape[0]

    @property
    def support_rank(self) -> int:
        return self.v.shape[1]

    def to_class(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=complex) @ self.v

    def norm(self, cls: np.ndarray) -> float:
        val = np.trace(self.rho_hat @ dagger(cls) @ cls).real
        return float(np.sqrt(max(val, 0.0)))

    def evolve_mat(self, t: float) -> np.ndarray:
        if self.kind == "continuous":
            import scipy.linalg

            return scipy.linalg.expm(t * self.p0_mat)
        return np.linalg.matrix_power(self.p0_mat, int(round(t)))


def gns_quotient(qms: QMS, state: DensityState, tol: Tolerances | None = None) -> GnsQuotient:
    tol = tol or state.tol
    d = qms.dim
    lam, w = np.linalg.eigh(state.rho)
    cutoff = tol.rank_cutoff(d, float(np.max(lam)))
    v = w[:, lam > cutoff]
    rho_hat = dagger(v) @ state.rho @ v
    lift = np.kron(v.conj(), np.eye(d))  # X -> X V*
    restrict = np.kron(v.T, np.eye(d))  # x -> x V
    dyn = qms.generator.mat if qms.kind == "continuous" else qms.step_map.mat
    p0 = restrict @ dyn @ lift
    return GnsQuotient(kind=qms.kind, v=v, rho_hat=rho_hat, p0_mat=p0)


def correlation(
    qms: QMS, state: DensityState, x: np.ndarray, y: np.ndarray, t: float
) -> tuple[complex, complex]:
    """(plain, twopoint) = (phi_0(x tau_t(y)), phi_0(tau_t(x) tau_t(y)))."""
    s = evolve(qms, t)
    ty = s.apply(y)
    plain = complex(np.trace(state.rho @ np.asarray(x, dtype=complex) @ ty))
    twopoint = complex(np.trace(state.rho @ s.apply(x) @ ty))
    return plain, twopoint


def _fixed_classes(q: GnsQuotient, tol: Tolerances) -> np.ndarray:
    n = q.p0_mat.shape[0]
    if q.kind == "continuous":
        return nullspace(q.p0_mat, tol)
    return nullspace(q.p0_mat - np.eye(n), tol)


def _peripheral_eigs(q: GnsQuotient, tol: Tolerances) -> np.ndarray:
    lam = np.linalg.eigvals(q.p0_mat)
    cut = tol.algebraic * max(np.linalg.norm(q.p0_mat), 1.0)
    if q.kind == "continuous":
        return lam[np.abs(lam.real) <= cut]
    return lam[np.abs(lam) >= 1.0 - cut]


def _mixing_spectral(q: GnsQuotient, tol: Tolerances) -> tuple[bool, bool, float]:
    """(ergodic, mixing, gap) from the quotient spectrum."""
    fix_dim = _fixed_classes(q, tol).shape[1]
    ergodic = fix_dim == 1
    lam = np.linalg.eigvals(q.p0_mat)
    cut = tol.algebraic * max(np.linalg.norm(q.p0_mat), 1.0)
    if q.kind == "continuous":
        extra = lam[(np.abs(lam.real) <= cut) & (np.abs(lam) > cut)]
    else:
        extra = lam[(np.abs(lam) >= 1.0 - cut) & (np.abs(lam - 1.0) > cut)]
    mixing = bool(ergodic and extra.size == 0)
    gap = gap_of_matrix(q.p0_mat, q.kind, tol)
    return bool(ergodic), mixing, gap


def _abel_mean_residual(
    q: GnsQuotient, state: DensityState, lam_samples, tol: Tolerances
) -> list[tuple[float, float]]:
    """Numeric Abel means of centered correlations at sampled resolvent
    parameters; backs the spectral ergodicity verdict."""
    d = q.ambient_dim
    units = matrix_units(d)
    rho = state.rho
    out = []
    n = q.p0_mat.shape[0]
    for lam in lam_samples:
        if q.kind == "continuous":
            mean_mat = lam * np.linalg.solve(
                lam * np.eye(n) - q.p0_mat, np.eye(n)
            )
        else:
            r = 1.0 - lam  # lam plays the role of 1 - r
            mean_mat = (1.0 - r) * np.linalg.solve(np.eye(n) - r * q.p0_mat, np.eye(n))
        worst = 0.0
        for y in units:
            ey = complex(np.trace(rho @ y))
            ycls = q.to_class(y).reshape(-1, order="F")
            mean = unvec(mean_mat @ ycls, d, q.support_rank)
            for x in units:
                ex = complex(np.trace(rho @ x))
                # phi_0(x . mean(y)) via the class pairing with x* class
                val = np.trace(q.rho_hat @ dagger(q.to_class(dagger(x))) @ mean)
                worst = max(worst, abs(val - ex * ey))
        out.append((float(lam), float(worst)))
    return out


@dataclass(frozen=True)
class KPropertyVerdict:
    value: bool
    spectral_value: bool
    twopoint_sup: float | None
    polarization_sup: float | None
    horizon: float | None
    inconclusive: bool
    agree: bool


def k_property_test(
    qms: QMS,
    state: DensityState,
    horizon: float | None = None,
    tol_value: float = 1e-6,
    tol: Tolerances | None = None,
) -> KPropertyVerdict:
    """Kolmogorov property via two-point correlation decay.

    Evaluates sup over matrix-unit pairs of
    |phi_0(tau_T(x) tau_T(y)) - phi_0(x) phi_0(y)| at T = horizon
    (default 50/gap), together with the polarization criterion
    |P0_T x_0| -> 0 for centered x; the two must agree, and both must
    match the spectral verdict when a finite horizon exists.  A zero gap
    makes the correlation test inconclusive at any horizon and the
    spectral verdict is returned.
    """
    tol = tol or state.tol
    q = gns_quotient(qms, state, tol)
    _, mixing, gap = _mixing_spectral(q, tol)
    spectral_value = mixing
    if horizon is None:
        if gap == 0.0:
            horizon = None
        elif np.isinf(gap):
            horizon = 1.0 if qms.kind == "continuous" else 1
        else:
            horizon = min(50.0 / gap, 1e4)
            if qms.kind == "discrete":
                horizon = max(int(np.ceil(horizon)), 1)
    if horizon is None:
        return KPropertyVerdict(
            value=spectral_value,
            spectral_value=spectral_value,
            twopoint_sup=None,
            polarization_sup=None,
            horizon=None,
            inconclusive=True,
            agree=True,
        )
    d = qms.dim
    units = matrix_units(d)
    s = evolve(qms, horizon)
    rho = state.rho
    tu = [s.apply(u) for u in units]
    means = [complex(np.trace(rho @ u)) for u in units]
    two_sup = 0.0
    for a in range(d * d):
        for b in range(d * d):
            val = np.trace(rho @ tu[a] @ tu[b]) - means[a] * means[b]
            two_sup = max(two_sup, abs(val))
    pol_sup = 0.0
    for a in range(d * d):
        centered = tu[a] - means[a] * np.eye(d)
        pol_sup = max(pol_sup, q.norm(q.to_class(centered)))
    numeric = bool(two_sup <= tol_value)
    numeric_pol = bool(pol_sup <= np.sqrt(tol_value) * 10)
    agree = numeric == numeric_pol and numeric == spectral_value
    return KPropertyVerdict(
        value=numeric,
        spectral_value=spectral_value,
        twopoint_sup=float(two_sup),
        polarization_sup=float(pol_sup),
        horizon=horizon,
        inconclusive=False,
        agree=bool(agree),
    )


@dataclass(frozen=True)
class AsymptoticsReport:
    ergodic: Verdict
    weak_mixing: Verdict
    strong_mixing: Verdict
    k_property: Verdict
    spectral_gap: float
    peripheral_spectrum: tuple[complex, ...]
    abel_samples: tuple[tuple[float, float], ...]
    adjoint_k_property: Verdict | None
    consistent: bool


def spectral_classification(
    qms: QMS, state: DensityState, tol: Tolerances | None = None
) -> AsymptoticsReport:
    """Classify the dynamics relative to its invariant state."""
    tol = tol or state.tol
    q = gns_quotient(qms, state, tol)
    ergodic, mixing, gap = _mixing_spectral(q, tol)
    fix_dim = _fixed_classes(q, tol).shape[1]
    peripheral = tuple(_peripheral_eigs(q, tol))
    abel = tuple(_abel_mean_residual(q, state, (1.0, 0.1, 0.01), tol))
    kv = k_property_test(qms, state, tol=tol)

    ergodic_v = Verdict(
        value=ergodic,
        witness=float(fix_dim),
        note="dimension of the invariant eigenspace of the GNS contraction",
    )
    mixing_note = f"{len(peripheral)} peripheral eigenvalue(s)"
    weak_v = Verdict(value=mixing, witness=float(len(peripheral)), note=mixing_note)
    strong_v = Verdict(value=mixing, witness=float(len(peripheral)), note=mixing_note)
    k_v = Verdict(
        value=kv.value,
        witness=kv.twopoint_sup,
        note="sup two-point correlation residual at the horizon"
        if not kv.inconclusive
        else "spectral verdict (zero gap, correlation test inconclusive)",
    )
    adjoint_v = None
    if state.faithful:
        adj = kms_adjoint(qms, state, tol)
        akv = k_property_test(adj, state, tol=tol)
        adjoint_v = Verdict(value=akv.value, witness=akv.twopoint_sup)
    chain = [k_v.value, strong_v.value, weak_v.value, ergodic_v.value]
    consistent = all(
        (not chain[i]) or chain[i + 1] for i in range(len(chain) - 1)
    ) and kv.agree
    return AsymptoticsReport(
        ergodic=ergodic_v,
        weak_mixing=weak_v,
        strong_mixing=strong_v,
        k_property=k_v,
        spectral_gap=float(gap),
        peripheral_spectrum=peripheral,
        abel_samples=abel,
        adjoint_k_property=adjoint_v,
        consistent=bool(consistent),
    )


@dataclass(frozen=True)
class TypeICrossCheck:
    """The five equivalent conditions of the type-I classification:
    state convergence, triviality of F, triviality of G, strong mixing,
    and the Kolmogorov property.  In finite dimension they must agree."""

    state_convergence: Verdict
    f_trivial: Verdict
    g_trivial: Verdict
    strong_mixing: Verdict
    k_property: Verdict
    all_agree: bool
    findings: tuple[str, ...]


def cross_check_typeI(
    qms: QMS,
    state: DensityState,
    adjoint_qms: QMS,
    tol: Tolerances | None = None,
    horizon: float | None = None,
    n_states: int = 6,
    seed: int = 5,
) -> TypeICrossCheck:
    tol = tol or state.tol
    if not state.faithful:
        raise ValueError("the type-I cross-check requires a faithful state")
    d = qms.dim
    report = spectral_classification(qms, state, tol)
    kv = k_property_test(qms, state, horizon=horizon, tol=tol)
    alg_f = multiplicative_domain_algebra(qms, state, tol)
    gres = g_algebra(qms, adjoint_qms, state=state, alg_f=alg_f, tol=tol)
    t_end = horizon if horizon is not None else kv.horizon
    conv_witness = None
    conv_value = report.strong_mixing.value
    if t_end is not None:
        rng = np.random.default_rng(seed)
        sigma = predual(evolve(qms, t_end))
        worst = 0.0
        for _ in range(n_states):
            a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
            psi = a @ dagger(a)
            psi = psi / np.trace(psi).real
            worst = max(worst, trace_norm(sigma.apply(psi) - state.rho))
        conv_witness = float(worst)
        conv_value = bool(worst <= 1e-6)
    conditions = {
        "state_convergence": Verdict(conv_value, conv_witness),
        "f_trivial": Verdict(alg_f.algebra_dim == 1, float(alg_f.algebra_dim)),
        "g_trivial": Verdict(gres.g.algebra_dim == 1, float(gres.g.algebra_dim)),
        "strong_mixing": report.strong_mixing,
        "k_property": Verdict(kv.value, kv.twopoint_sup),
    }
    values = [v.value for v in conditions.values()]
    all_agree = len(set(values)) == 1
    findings = ()
    if not all_agree:
        findings = (
            "type-I equivalence violated: "
            + ", ".join(f"{k}={v.value}" for k, v in conditions.items()),
        )
    return TypeICrossCheck(
        state_convergence=conditions["state_convergence"],
        f_trivial=conditions["f_trivial"],
        g_trivial=conditions["g_trivial"],
        strong_mixing=conditions["strong_mixing"],
        k_property=conditions["k_property"],
        all_agree=bool(all_agree),
        findings=findings,
    )


@dataclass(frozen=True)
class ConjectureProbe:
    """Forward/backward Kolmogorov verdict pair.

    Evidence about time reversibility of the K property; a disagreeing
    pair is a reportable finding, never an assertion either way.
    """

    forward: KPropertyVerdict
    backward: KPropertyVerdict
    agree: bool
    finding: str | None


def conjecture_probe(
    qms: QMS,
    state: DensityState,
    adjoint_qms: QMS,
    tol: Tolerances | None = None,
) -> ConjectureProbe:
    tol = tol or state.tol
    fwd = k_property_test(qms, state, tol=tol)
    bwd = k_property_test(adjoint_qms, state, tol=tol)
    agree = fwd.value == bwd.value
    finding = None
    if not agree:
        finding = (
            f"forward/backward K-property disagreement: forward={fwd.value}, "
            f"backward={bwd.value}"
        )
    return ConjectureProbe(forward=fwd, backward=bwd, agree=bool(agree), finding=finding)


def decay_table(
    qms: QMS,
    state: DensityState,
    x: np.ndarray,
    y: np.ndarray,
    times,
    which: str = "twopoint",
) -> list[tuple[float, float]]:
    """(t, |correlation - product|) rows for CSV export."""
    px = complex(np.trace(state.rho @ np.asarray(x)))
    py = complex(np.trace(state.rho @ np.asarray(y)))
    rows = []
    for t in times:
        plain, two = correlation(qms, state, x, y, t)
        val = two if which == "twopoint" else plain
        rows.append((float(t), float(abs(val - px * py))))
    return rows
