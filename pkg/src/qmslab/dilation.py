"""Finite time-grid truncations of the weak Markov dilation.

The dilation Hilbert space is the GNS quotient of the positive kernel

    L(x, y) = phi_0( x_1* tau_{r_2 - r_1}( x_2* ( ... tau_{r_n - r_{n-1}}(
              x_n* y_n ) y_{n-1} ... ) y_2 ) y_1 ),

over tuples x = (x_1 at r_1, ..., x_n at r_n) with r_1 < ... < r_n,
evaluated right-to-left so every propagation gap is nonnegative; the
kernel depends only on the gaps because the state is invariant.  The
spanning family is all elementary tuples of matrix units, (d^2)^n of
them, and everything (the represented operators j_t(x), the filtration
projections F_t, the cyclic vector Omega) lives in coordinates on the
rank-revealed quotient of the Gram matrix of that family.

Tuple coefficient space is the n-fold tensor power of C^(d^2) with slot 1
as the most significant index; a tuple slot holding the identity is the
coefficient vector with ones at the diagonal matrix units.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .matrixcore import (
    DEFAULT_TOLS,
    Tolerances,
    dagger,
    gram_quotient,
    matrix_units,
    orthonormalize,
    vec,
)
from .semigroup import QMS, evolve
from .states import DensityState

__all__ = [
    "TimeGrid",
    "DilationSpace",
    "build_dilation_space",
    "represent_j",
    "represent_units",
    "filtration_projection",
    "filtration_closed_form_residual",
    "markov_property_check",
    "CompressionCheck",
    "compression_check",
    "shift_isometry_check",
    "KShiftProbe",
    "k_shift_probe",
]

DEFAULT_TUPLE_CAP = 4096


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time points; integers for discrete dynamics."""

    points: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.points) < 1:
            raise ValueError("a time grid needs at least one point")
        diffs = np.diff(self.points)
        if np.any(diffs <= 0):
            raise ValueError("grid points must be strictly increasing")

    @classmethod
    def make(cls, points, kind: str = "continuous") -> "TimeGrid":
        pts = tuple(float(p) for p in points)
        if kind == "discrete":
            for p in pts:
                if abs(p - round(p)) > 1e-12:
                    raise ValueError("discrete dynamics needs integer grid points")
        return cls(points=pts)

    def __len__(self) -> int:
        return len(self.points)


def _tau_tensor(qms: QMS, gap: float, cache: dict) -> np.ndarray:
    key = round(float(gap), 12)
    if key not in cache:
        d = qms.dim
        cache[key] = evolve(qms, gap).mat.reshape(d, d, d, d)
    return cache[key]


def _apply_tau_batch(s4: np.ndarray, m: np.ndarray) -> np.ndarray:
    return np.einsum("jilk,mkl->mij", s4, m)


@dataclass
class DilationSpace:
    qms: QMS
    state: DensityState
    grid: TimeGrid
    units: np.ndarray
    gram: np.ndarray
    quotient: np.ndarray  # (rank, N) images of elementary tuples
    rank: int
    omega: np.ndarray
    tol: Tolerances = field(default=DEFAULT_TOLS, repr=False)
    _tau_cache: dict = field(default_factory=dict, repr=False)
    _filtration_cache: dict = field(default_factory=dict, repr=False)
    _rep_cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.qms.dim

    @property
    def n_slots(self) -> int:
        return len(self.grid)

    @property
    def n_tuples(self) -> int:
        return self.gram.shape[0]

    def identity_slot_vec(self) -> np.ndarray:
        d = self.dim
        c = np.zeros(d * d, dtype=complex)
        for i in range(d):
            c[i + d * i] = 1.0
        return c

    def support_columns(self, t: float) -> np.ndarray:
        """Coefficient vectors (columns) of all elementary tuples supported
        at grid times <= t; later slots hold the identity."""
        d2 = self.dim * self.dim
        c_id = self.identity_slot_vec().reshape(-1, 1)
        factors = []
        for r in self.grid.points:
            factors.append(np.eye(d2, dtype=complex) if r <= t + 1e-12 else c_id)
        return reduce(np.kron, factors)

    def single_slot_columns(self, t: float) -> np.ndarray:
        """Columns of the tuples i_t(e_u): a matrix unit at slot t, the
        identity everywhere else."""
        d2 = self.dim * self.dim
        c_id = self.identity_slot_vec().reshape(-1, 1)
        factors = []
        hit = False
        for r in self.grid.points:
            if abs(r - t) <= 1e-12:
                factors.append(np.eye(d2, dtype=complex))
                hit = True
            else:
                factors.append(c_id)
        if not hit:
            raise ValueError(f"time {t} is not a grid point")
        return reduce(np.kron, factors)

    def collapse_matrix(self, tuple_units: tuple[int, ...], t: float) -> tuple[np.ndarray, tuple[int, ...]]:
        """Closed-form compression of an elementary tuple onto times <= t.

        Returns (slot value at the largest grid time <= t after absorbing
        all later slots, the kept unit indices at strictly earlier times).
        Requires t to be at or above the lowest grid point.
        """
        pts = self.grid.points
        units = self.units
        d = self.dim
        keep = [k for k, r in enumerate(pts) if r <= t + 1e-12]
        if not keep:
            raise ValueError("no grid point at or below the collapse time")
        above = [k for k, r in enumerate(pts) if r > t + 1e-12]
        anchor = keep[-1]
        # nest from the top time downwards: z <- tau_gap(z) x_k
        z = None
        cur_time = None
        for k in reversed(above):
            xk = units[tuple_units[k]]
            if z is None:
                z = xk
            else:
                s4 = _tau_tensor(self.qms, cur_time - pts[k], self._tau_cache)
                z = _apply_tau_batch(s4, z[None])[0] @ xk
            cur_time = pts[k]
        if z is None:
            slot_val = units[tuple_units[anchor]]
        else:
            s4 = _tau_tensor(self.qms, cur_time - pts[anchor], self._tau_cache)
            slot_val = _apply_tau_batch(s4, z[None])[0] @ units[tuple_units[anchor]]
        return slot_val, tuple(tuple_units[k] for k in keep[:-1])


def build_dilation_space(
    qms: QMS,
    state: DensityState,
    grid: TimeGrid,
    cap: int = DEFAULT_TUPLE_CAP,
    tol: Tolerances | None = None,
) -> DilationSpace:
    """Gram matrix of the dilation kernel over elementary matrix-unit
    tuples, with its rank-revealed quotient and cyclic vector."""
    tol = tol or state.tol
    d = qms.dim
    d2 = d * d
    n = len(grid)
    n_tuples = d2**n
    if n_tuples > cap:
        raise ValueError(
            f"spanning family has {n_tuples} tuples, above the cap {cap}"
        )
    units = matrix_units(d)
    units_dag = units.conj().transpose(0, 2, 1)
    pts = grid.points
    tau_cache: dict = {}
    gaps = [pts[k + 1] - pts[k] for k in range(n - 1)]
    rho = state.rho

    gram = np.empty((n_tuples, n_tuples), dtype=complex)
    shape = (d2,) * n
    for a_flat in range(n_tuples):
        a = np.unravel_index(a_flat, shape)
        m = np.einsum("xy,byz->bxz", units_dag[a[n - 1]], units)
        for k in range(n - 2, -1, -1):
            s4 = _tau_tensor(qms, gaps[k], tau_cache)
            m = _apply_tau_batch(s4, m)
            m = np.einsum("xy,Byz,bzw->bBxw", units_dag[a[k]], m, units).reshape(
                -1, d, d
            )
        gram[a_flat] = np.einsum("xy,Byx->B", rho, m)
    gram = (gram + dagger(gram)) / 2.0
    q, rank = gram_quotient(gram, tol)

    c_id = np.zeros(d2, dtype=complex)
    for i in range(d):
        c_id[i + d * i] = 1.0
    w_id = reduce(np.kron, [c_id] * n)
    omega = q @ w_id
    nrm = np.linalg.norm(omega)
    if abs(nrm - 1.0) > 1e-8:
        raise ValueError(f"cyclic vector norm {nrm} deviates from 1")
    omega = omega / nrm
    space = DilationSpace(
        qms=qms,
        state=state,
        grid=grid,
        units=units,
        gram=gram,
        quotient=q,
        rank=rank,
        omega=omega,
        tol=tol,
    )
    space._tau_cache.update(tau_cache)
    return space


def filtration_projection(space: DilationSpace, t: float) -> np.ndarray:
    """Orthogonal projection onto the span of tuples supported at times
    <= t.  Above the grid this is the identity; below the whole grid only
    the cyclic vector survives."""
    key = round(float(t), 12)
    if key in space._filtration_cache:
        return space._filtration_cache[key]
    if t >= space.grid.points[-1] - 1e-12:
        f = np.eye(space.rank, dtype=complex)
    elif t < space.grid.points[0] - 1e-12:
        f = np.outer(space.omega, space.omega.conj())
    else:
        u = space.quotient @ space.support_columns(t)
        b = orthonormalize(u, space.tol)
        f = b @ dagger(b)
    space._filtration_cache[key] = f
    return f


def represent_units(space: DilationSpace, t: float) -> np.ndarray:
    """Represented operators j_t(e_u) for every matrix unit, as a stacked
    (d^2, rank, rank) array.  j_t is linear in its argument, so these
    determine j_t(x) for every x; they share one pseudoinverse of the
    supported-tuple image matrix, which is cached per grid time."""
    key = round(float(t), 12)
    if key in space._rep_cache:
        return space._rep_cache[key]
    pts = space.grid.points
    if not any(abs(r - t) <= 1e-12 for r in pts):
        raise ValueError(f"time {t} is not a grid point")
    d = space.dim
    d2 = d * d
    c_id = space.identity_slot_vec().reshape(-1, 1)
    w_factors = []
    for r in pts:
        if r <= t + 1e-12:
            w_factors.append(np.eye(d2, dtype=complex))
        else:
            w_factors.append(c_id)
    w = reduce(np.kron, w_factors)
    u = space.quotient @ w
    s = np.linalg.svd(u, compute_uv=False)
    s_max = float(s[0]) if s.size else 1.0
    rcond = space.tol.rank_cutoff(max(u.shape), s_max) / max(s_max, 1e-300)
    u_pinv = np.linalg.pinv(u, rcond=rcond)
    reps = np.empty((d2, space.rank, space.rank), dtype=complex)
    for a in range(d2):
        slot_map = np.kron(np.eye(d), space.units[a])
        img_factors = []
        for r in pts:
            if r < t - 1e-12:
                img_factors.append(np.eye(d2, dtype=complex))
            elif abs(r - t) <= 1e-12:
                img_factors.append(slot_map)
            else:
                img_factors.append(c_id)
        v = space.quotient @ reduce(np.kron, img_factors)
        reps[a] = v @ u_pinv
    space._rep_cache[key] = reps
    return reps


def represent_j(space: DilationSpace, t: float, x: np.ndarray) -> np.ndarray:
    """The represented operator j_t(x) on the quotient space.

    Acts on tuples supported at times <= t by left-multiplying the slot
    at t, extended by zero on the orthogonal complement (the F_t
    compression).
    """
    x = np.asarray(x, dtype=complex)
    reps = represent_units(space, t)
    return np.einsum("a,aij->ij", vec(x), reps)


def markov_property_check(
    space: DilationSpace, s: float, t: float, x: np.ndarray
) -> float:
    """Residual of F_s j_t(x) F_s = j_s(tau_{t-s}(x)) on the quotient."""
    if s > t + 1e-12:
        raise ValueError("need s <= t")
    f_s = filtration_projection(space, s)
    j_t = represent_j(space, t, x)
    lhs = f_s @ j_t @ f_s
    rhs = represent_j(space, s, evolve(space.qms, t - s).apply(x))
    return float(np.linalg.norm(lhs - rhs, ord=2))


def filtration_closed_form_residual(
    space: DilationSpace, t: float
) -> float:
    """Check F_t against the closed-form compression: applying F_t to an
    elementary tuple equals the tuple whose slot at the largest grid time
    <= t absorbs all later slots through alternating propagation and
    multiplication.  Returns the worst coordinate-space residual over the
    spanning family."""
    pts = space.grid.points
    if t < pts[0] - 1e-12:
        # collapses to phi_0-weighted cyclic vector; checked via omega
        worst = 0.0
        f = filtration_projection(space, t)
        for col in range(space.n_tuples):
            v = space.quotient[:, col]
            lhs = f @ v
            rhs = np.vdot(space.omega, v) * space.omega
            worst = max(worst, float(np.linalg.norm(lhs - rhs)))
        return worst
    d = space.dim
    d2 = d * d
    f = filtration_projection(space, t)
    shape = (d2,) * space.n_slots
    c_id = space.identity_slot_vec()
    keep = [k for k, r in enumerate(pts) if r <= t + 1e-12]
    anchor = keep[-1]
    worst = 0.0
    for flat in range(space.n_tuples):
        tu = np.unravel_index(flat, shape)
        slot_val, kept_units = space.collapse_matrix(tuple(tu), t)
        factors = []
        ki = 0
        for k, r in enumerate(pts):
            if k == anchor:
                factors.append(vec(slot_val))
            elif r <= t + 1e-12:
                one_hot = np.zeros(d2, dtype=complex)
                one_hot[kept_units[ki]] = 1.0
                ki += 1
                factors.append(one_hot)
            else:
                factors.append(c_id)
        w = reduce(np.kron, factors)
        rhs = space.quotient @ w
        lhs = f @ space.quotient[:, flat]
        worst = max(worst, float(np.linalg.norm(lhs - rhs)))
    return worst


@dataclass(frozen=True)
class CompressionCheck:
    isometry_residual: float
    eq_residual: float
    per_time: tuple[tuple[float, float], ...]


def compression_check(space: DilationSpace) -> CompressionCheck:
    """V_+ embeds the GNS space of phi_0 as the tuples with a single slot
    at time 0; checks the isometry property (images reproduce the GNS
    Gram) and the compression identity <V z, j_t(x) V y> = phi_0(z* tau_t(x) y)
    for every grid time t >= 0 over the matrix-unit basis."""
    pts = space.grid.points
    if not any(abs(r) <= 1e-12 for r in pts):
        raise ValueError("compression check needs 0 in the grid")
    d = space.dim
    d2 = d * d
    units = space.units
    rho = space.state.rho
    w0 = space.single_slot_columns(0.0)
    v0 = space.quotient @ w0
    gns = np.empty((d2, d2), dtype=complex)
    for a in range(d2):
        for b in range(d2):
            gns[a, b] = np.trace(rho @ dagger(units[a]) @ units[b])
    iso_res = float(np.linalg.norm(dagger(v0) @ v0 - gns))
    per_time = []
    worst = 0.0
    for t in pts:
        if t < -1e-12:
            continue
        s = evolve(space.qms, t)
        t_worst = 0.0
        for ux in range(d2):
            j = represent_j(space, t, units[ux])
            lhs = dagger(v0) @ j @ v0
            tx = s.apply(units[ux])
            rhs = np.empty((d2, d2), dtype=complex)
            for a in range(d2):
                for b in range(d2):
                    rhs[a, b] = np.trace(rho @ dagger(units[a]) @ tx @ units[b])
            t_worst = max(t_worst, float(np.max(np.abs(lhs - rhs))))
        per_time.append((float(t), t_worst))
        worst = max(worst, t_worst)
    return CompressionCheck(
        isometry_residual=iso_res, eq_residual=worst, per_time=tuple(per_time)
    )


def shift_isometry_check(
    qms: QMS,
    state: DensityState,
    grid: TimeGrid,
    t: float,
    cap: int = DEFAULT_TUPLE_CAP,
    tol: Tolerances | None = None,
) -> float:
    """Stationarity of the kernel under a common grid translation: the
    Gram matrices on grid and grid - t must coincide entrywise (the
    finite-grid shadow of the unitarity of the shift)."""
    tol = tol or state.tol
    base = build_dilation_space(qms, state, grid, cap, tol)
    shifted_grid = TimeGrid.make([p - t for p in grid.points], qms.kind)
    shifted = build_dilation_space(qms, state, shifted_grid, cap, tol)
    return float(np.max(np.abs(base.gram - shifted.gram)))


@dataclass(frozen=True)
class KShiftProbe:
    table: tuple[tuple[float, float], ...]
    verdict: bool
    fitted_rate: float | None
    delta_tol: float


def k_shift_probe(
    qms: QMS,
    state: DensityState,
    base_grid: TimeGrid,
    tail_times,
    cap: int = DEFAULT_TUPLE_CAP,
    tol: Tolerances | None = None,
    delta_tol: float = 1e-6,
) -> KShiftProbe:
    """Tail-filtration collapse probe.

    For each tail time T below the base grid, builds the dilation space on
    {T} union base_grid and measures

        delta(T) = max over base-grid spanning vectors v of
                   |F_T v - <Omega, v> Omega| / |v|,

    the distance of the tail filtration from the rank-one projection onto
    the cyclic vector, over the fixed spanning family of the base grid.
    Kolmogorov dynamics sends delta(T) -> 0 at the spectral-gap rate; the
    verdict is delta at the deepest tail falling below delta_tol.
    """
    tol = tol or state.tol
    tails = sorted(set(float(t) for t in tail_times), reverse=True)
    if not tails:
        raise ValueError("need at least one tail time")
    if tails[0] >= base_grid.points[0]:
        raise ValueError("tail times must lie strictly below the base grid")
    d2 = qms.dim * qms.dim
    rows = []
    for t_tail in tails:
        union = TimeGrid.make((t_tail, *base_grid.points), qms.kind)
        space = build_dilation_space(qms, state, union, cap, tol)
        c_id = space.identity_slot_vec().reshape(-1, 1)
        factors = [c_id] + [np.eye(d2, dtype=complex)] * len(base_grid)
        w_base = reduce(np.kron, factors)
        u = space.quotient @ w_base
        f = filtration_projection(space, t_tail)
        delta = 0.0
        for col in range(u.shape[1]):
            v = u[:, col]
            nv = np.linalg.norm(v)
            if nv <= 1e-9:
                continue
            resid = f @ v - np.vdot(space.omega, v) * space.omega
            delta = max(delta, float(np.linalg.norm(resid) / nv))
        rows.append((float(t_tail), delta))
    verdict = rows[-1][1] <= delta_tol
    usable = [(abs(t), dl) for t, dl in rows if dl > 1e-13]
    rate = None
    if len(usable) >= 2:
        xs = np.array([u[0] for u in usable])
        ys = np.log(np.array([u[1] for u in usable]))
        slope = np.polyfit(xs, ys, 1)[0]
        rate = float(-slope)
    return KShiftProbe(
        table=tuple(rows), verdict=bool(verdict), fitted_rate=rate, delta_tol=delta_tol
    )
