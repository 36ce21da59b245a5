"""Command-line orchestration and reporting.

Exit codes: 0 = all gates pass, 1 = input error, 2 = verdict-level
findings (an equivalence cross-check disagreed, a probe produced a
reportable pair, or an internal consistency flag fired).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from . import __version__
from .adjoint import (
    detailed_balance_decomposition,
    eq_adjoint_residual,
    invariance_residual,
    kms_adjoint,
)
from .asymptotics import (
    conjecture_probe,
    cross_check_typeI,
    decay_table,
    k_property_test,
    spectral_classification,
)
from .dilation import (
    TimeGrid,
    build_dilation_space,
    compression_check,
    filtration_closed_form_residual,
    filtration_projection,
    k_shift_probe,
    markov_property_check,
    shift_isometry_check,
)
from .fixedpoints import (
    cal_E_map,
    convergence_verdict,
    fixed_point_set,
    g_algebra,
    irreducibility_report,
    multiplicative_domain_algebra,
)
from .matrixcore import Tolerances, matrix_units
from .semigroup import (
    default_sample_times,
    evolve,
    is_cp_unital,
    minimal_semigroup_iterate,
    spectral_gap,
)
from .models import BuiltinModel, LoadedModel, builtin, load_model_file
from .states import invariant_states, support_projection

SCHEMA_TAG = "qmslab-report/1"

CONVENTIONS = {
    "vectorization": "column-stacking: vec(A X B) = (B^T kron A) vec(X)",
    "modular_twist": (
        "twist_s(x) = rho^s x rho^{-s}; the adjoint pairing is "
        "phi(twist_{-1/2}(x) tau_t(y)) = phi(adj_t(x) twist_{+1/2}(y))"
    ),
}


def _jsonable(obj):
    """Recursively convert report payloads to plain JSON types.
    Complex scalars become [re, im]; arrays become nested lists."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {
            f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)
        }
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return _jsonable(np.stack([obj.real, obj.imag], axis=-1))
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _resolve(spec: str, tol: Tolerances):
    if spec.startswith("builtin:"):
        return builtin(spec[len("builtin:") :], tol)
    if not os.path.exists(spec):
        raise FileNotFoundError(f"model file not found: {spec}")
    loaded: LoadedModel = load_model_file(spec, tol)
    _, state = invariant_states(loaded.qms, tol)
    return BuiltinModel(
        name=spec, model=loaded.model, qms=loaded.qms, state=state,
        description="model file",
    )


def _gate_section(bm: BuiltinModel, tol: Tolerances) -> dict:
    t_probe = 1.0 if bm.qms.kind == "continuous" else 1
    verdict = is_cp_unital(evolve(bm.qms, t_probe), tol)
    return {
        "kind": bm.qms.kind,
        "dim": bm.qms.dim,
        "cp_unital_ok": verdict.ok,
        "unital_residual": verdict.unital_residual,
        "choi_min_eig": verdict.choi_min_eig,
        "state_invariance_residual": invariance_residual(bm.qms, bm.state),
        "spectral_gap": spectral_gap(bm.qms, tol),
    }


def _invariant_section(bm: BuiltinModel, tol: Tolerances) -> dict:
    kernel, canonical = invariant_states(bm.qms, tol)
    return {
        "kernel_dim": len(kernel),
        "canonical_state": canonical.rho,
        "faithful": canonical.faithful,
        "support_rank": int(round(np.trace(canonical.support).real)),
    }


def _algebra_payload(alg) -> dict:
    return {"dim": alg.algebra_dim, "basis": alg.basis}


def _fixed_point_section(bm: BuiltinModel, tol: Tolerances, findings: list) -> dict:
    out = {}
    alg_n = fixed_point_set(bm.qms, bm.state, tol)
    out["fixed_points"] = _algebra_payload(alg_n)
    alg_f = alg_g = None
    if bm.state.faithful:
        alg_f = multiplicative_domain_algebra(bm.qms, bm.state, tol)
        out["multiplicative_domain"] = _algebra_payload(alg_f)
        adj = kms_adjoint(bm.qms, bm.state, tol)
        gres = g_algebra(bm.qms, adj, state=bm.state, alg_n=alg_n, alg_f=alg_f, tol=tol)
        out["adjoint_composition_fixed"] = _algebra_payload(gres.g)
        alg_g = gres.g
    ir = irreducibility_report(bm.model, bm.qms, bm.state, tol)
    out["irreducibility"] = {
        "n_dim": ir.n_dim,
        "n_trivial": ir.n_trivial,
        "literal_set_dim": ir.literal_set_dim,
        "star_commutant_dim": ir.star_commutant_dim,
        "nontrivial_invariant_projection": ir.has_nontrivial_invariant_projection,
        "consistent": ir.prop_equivalence_consistent,
        "notes": list(ir.notes),
    }
    if not ir.prop_equivalence_consistent:
        findings.append("irreducibility predicates disagree")
    cv = convergence_verdict(bm.qms, bm.state, alg_n, alg_f, alg_g, tol)
    out["convergence"] = {
        "nf_equal": cv.nf_equal,
        "ng_equal": cv.ng_equal,
        "support_route_holds": cv.support_route_holds,
        "target": cv.target,
        "horizon": cv.horizon,
        "limit_residual": cv.limit_residual,
        "verified": cv.verified,
        "notes": list(cv.notes),
    }
    if cv.target is not None and cv.verified is False:
        findings.append("convergence conclusion not verified at horizon")
    return out


def _adjoint_section(bm: BuiltinModel, tol: Tolerances, findings: list) -> dict:
    if not bm.state.faithful:
        return {"available": False, "reason": "invariant state not faithful"}
    adj = kms_adjoint(bm.qms, bm.state, tol)
    db = detailed_balance_decomposition(bm.qms, adj, bm.state, tol)
    ce = cal_E_map(bm.qms, adj, bm.state, tol=tol)
    out = {
        "available": True,
        "adjoint_relation_residual": eq_adjoint_residual(bm.qms, adj, bm.state),
        "is_normal": db.is_normal,
        "commutation_residual": db.commutation_residual,
        "detailed_balance": db.is_detailed_balance,
        "derivation_residual": db.residual,
        "hamiltonian_part": db.h_prime,
        "cal_E_converged": ce.converged,
        "cal_E_idempotency": ce.idempotency_residual,
        "cal_E_equals_expectation": ce.expectation_residual,
    }
    if not ce.converged:
        findings.append("cal-E limit did not converge within the horizon")
    return out


def _mixing_section(
    bm: BuiltinModel, tol: Tolerances, findings: list, horizon: float | None
) -> dict:
    rep = spectral_classification(bm.qms, bm.state, tol)
    kv = k_property_test(bm.qms, bm.state, horizon=horizon, tol=tol)
    out = {
        "ergodic": dataclasses.asdict(rep.ergodic),
        "weak_mixing": dataclasses.asdict(rep.weak_mixing),
        "strong_mixing": dataclasses.asdict(rep.strong_mixing),
        "k_property": dataclasses.asdict(rep.k_property),
        "spectral_gap": rep.spectral_gap,
        "peripheral_spectrum": list(rep.peripheral_spectrum),
        "abel_samples": list(rep.abel_samples),
        "k_test": dataclasses.asdict(kv),
        "consistent": rep.consistent,
    }
    if not rep.consistent:
        findings.append("asymptotics implication chain violated")
    if bm.state.faithful:
        adj = kms_adjoint(bm.qms, bm.state, tol)
        cc = cross_check_typeI(bm.qms, bm.state, adj, tol, horizon=horizon)
        out["type_i_cross_check"] = {
            "state_convergence": dataclasses.asdict(cc.state_convergence),
            "f_trivial": dataclasses.asdict(cc.f_trivial),
            "g_trivial": dataclasses.asdict(cc.g_trivial),
            "strong_mixing": dataclasses.asdict(cc.strong_mixing),
            "k_property": dataclasses.asdict(cc.k_property),
            "all_agree": cc.all_agree,
        }
        findings.extend(cc.findings)
        probe = conjecture_probe(bm.qms, bm.state, adj, tol)
        out["forward_backward_k"] = {
            "forward": probe.forward.value,
            "backward": probe.backward.value,
            "agree": probe.agree,
        }
        if probe.finding:
            findings.append(probe.finding)
    return out


def _default_grid(kind: str) -> list[float]:
    return [0.0, 1.0] if kind == "continuous" else [0, 1]


def _default_tails(bm: BuiltinModel, tol: Tolerances) -> list[float]:
    """Doubling tail depths; deep enough to reach the 50/gap horizon when a
    gap exists, so the collapse verdict is comparable with the two-point
    correlation test."""
    gap = spectral_gap(bm.qms, tol)
    depth = 8.0
    if gap not in (0.0,) and np.isfinite(gap):
        depth = max(depth, 50.0 / gap)
    tails = []
    t = 1.0
    while t < depth:
        tails.append(-t)
        t *= 2
    tails.append(-float(np.ceil(depth)))
    return tails


def _dilation_section(
    bm: BuiltinModel,
    tol: Tolerances,
    findings: list,
    grid_points=None,
    tails=None,
    cap: int = 4096,
    csv_dir: str | None = None,
) -> dict:
    kind = bm.qms.kind
    pts = grid_points if grid_points is not None else _default_grid(kind)
    grid = TimeGrid.make(pts, kind)
    space = build_dilation_space(bm.qms, bm.state, grid, cap, tol)
    units = matrix_units(bm.qms.dim)
    markov_worst = 0.0
    for i, s in enumerate(grid.points):
        for t in grid.points[i:]:
            for u in units:
                markov_worst = max(
                    markov_worst, markov_property_check(space, s, t, u)
                )
    filt_worst = max(
        filtration_closed_form_residual(space, t) for t in grid.points
    )
    mono_worst = 0.0
    for i, s in enumerate(grid.points):
        for t in grid.points[i:]:
            fs = filtration_projection(space, s)
            ft = filtration_projection(space, t)
            mono_worst = max(mono_worst, float(np.linalg.norm(fs @ ft - fs, ord=2)))
    gram_min = float(np.linalg.eigvalsh(space.gram)[0])
    out = {
        "grid": list(grid.points),
        "rank": space.rank,
        "gram_min_eig": gram_min,
        "markov_residual": markov_worst,
        "filtration_closed_form_residual": filt_worst,
        "filtration_monotonicity_residual": mono_worst,
    }
    if any(abs(p) < 1e-12 for p in grid.points):
        cc = compression_check(space)
        out["compression_isometry_residual"] = cc.isometry_residual
        out["compression_identity_residual"] = cc.eq_residual
    shift_by = 1.0 if kind == "continuous" else 1
    out["shift_stationarity_residual"] = shift_isometry_check(
        bm.qms, bm.state, grid, shift_by, cap, tol
    )
    tail_list = tails if tails is not None else _default_tails(bm, tol)
    tail_list = [t for t in tail_list if t < grid.points[0]]
    if tail_list:
        probe = k_shift_probe(bm.qms, bm.state, grid, tail_list, cap, tol)
        out["k_shift"] = {
            "table": list(probe.table),
            "verdict": probe.verdict,
            "fitted_rate": probe.fitted_rate,
        }
        if csv_dir:
            path = os.path.join(csv_dir, "k_shift_decay.csv")
            _write_csv(path, probe.table)
            out["k_shift"]["csv"] = path
    gate_bad = (
        gram_min < -1e-8
        or markov_worst > 1e-8
        or filt_worst > 1e-8
        or mono_worst > 1e-9
    )
    if gate_bad:
        findings.append("dilation identity residual above gate")
    return out


def _write_csv(path: str, rows) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "value"])
        for t, v in rows:
            writer.writerow([t, v])


def _minimal_section(bm: BuiltinModel, tol: Tolerances, findings: list) -> dict:
    if bm.model is None or bm.qms.kind != "continuous":
        return {"available": False, "reason": "needs generator data (continuous model)"}
    d = bm.qms.dim
    x = np.zeros((d, d), dtype=complex)
    x[d - 1, d - 1] = 1.0
    t, n_max, mesh = 1.0, 30, 1e-3
    iters = minimal_semigroup_iterate(bm.model, x, t, n_max, mesh)
    exact = evolve(bm.qms, t).apply(x)
    err = float(np.linalg.norm(iters[-1] - exact))
    worst_mono = 0.0
    for a, b in zip(iters, iters[1:]):
        gap = (b - a + (b - a).conj().T) / 2
        worst_mono = min(worst_mono, float(np.linalg.eigvalsh(gap)[0]))
    ok = err <= 1e-6
    if not ok:
        findings.append(f"iteration scheme missed the exponential by {err:.2e}")
    return {
        "available": True,
        "iterations": n_max,
        "mesh": mesh,
        "time": t,
        "final_error": err,
        "worst_monotonicity_violation": worst_mono,
        "pass": ok,
    }


def _emit(report: dict, fmt: str) -> None:
    if fmt == "structured":
        json.dump(_jsonable(report), sys.stdout, indent=2)
        sys.stdout.write("\n")
        return
    _emit_text(report)


def _emit_text(report: dict, indent: int = 0) -> None:
    pad = "  " * indent
    for key, val in report.items():
        if isinstance(val, dict):
            print(f"{pad}{key}:")
            _emit_text(val, indent + 1)
        elif isinstance(val, np.ndarray):
            flat = np.array2string(val, precision=6, suppress_small=True)
            print(f"{pad}{key}: {flat}")
        elif isinstance(val, float):
            print(f"{pad}{key}: {val:.6g}")
        else:
            print(f"{pad}{key}: {val}")


def _parse_floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qmslab",
        description="analysis toolkit for quantum Markov semigroups at desk scale",
    )
    ap.add_argument("--version", action="version", version=f"qmslab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("model", help="builtin:NAME(args) or a model file path")
        p.add_argument("--tol", type=float, default=None, help="algebraic tolerance")
        p.add_argument("--horizon", type=float, default=None)
        p.add_argument("--format", choices=("text", "structured"), default="text")
        p.add_argument("--csv-dir", default=None)
        p.add_argument("--cap", type=int, default=4096)

    for name in ("analyze", "invariant", "fixed-points", "adjoint", "mixing",
                 "minimal-check"):
        common(sub.add_parser(name))
    dil = sub.add_parser("dilation")
    common(dil)
    dil.add_argument("--grid", type=_parse_floats, default=None)
    dil.add_argument("--tails", type=_parse_floats, default=None)

    probe = sub.add_parser("probe-conjecture43")
    probe.add_argument("--seeds", type=int, default=50)
    probe.add_argument("--tol", type=float, default=None)
    probe.add_argument("--format", choices=("text", "structured"), default="text")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    tol = Tolerances(algebraic=args.tol) if getattr(args, "tol", None) else Tolerances()
    findings: list[str] = []
    report: dict = {
        "schema": SCHEMA_TAG,
        "command": args.command,
        "conventions": CONVENTIONS,
        "tolerances": dataclasses.asdict(tol),
    }
    if args.command == "probe-conjecture43":
        from .models import random_faithful_model

        pairs = []
        for seed in range(args.seeds):
            bm = random_faithful_model(seed, tol)
            adj = kms_adjoint(bm.qms, bm.state, tol)
            pr = conjecture_probe(bm.qms, bm.state, adj, tol)
            pairs.append(
                {"seed": seed, "forward": pr.forward.value, "backward": pr.backward.value}
            )
            if pr.finding:
                findings.append(f"seed {seed}: {pr.finding}")
        report["pairs"] = pairs
        report["findings"] = findings
        _emit(report, args.format)
        return 2 if findings else 0

    try:
        bm = _resolve(args.model, tol)
    except (ValueError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    report["model"] = {
        "descriptor": bm.name,
        "description": bm.description,
        "kind": bm.qms.kind,
        "dim": bm.qms.dim,
    }
    horizon = getattr(args, "horizon", None)
    csv_dir = getattr(args, "csv_dir", None)
    report["gates"] = _gate_section(bm, tol)
    if not report["gates"]["cp_unital_ok"]:
        findings.append("CP/unital gate failed")
    cmd = args.command
    if cmd in ("analyze", "invariant"):
        report["invariant"] = _invariant_section(bm, tol)
    if cmd in ("analyze", "fixed-points"):
        report["fixed_points"] = _fixed_point_section(bm, tol, findings)
    if cmd in ("analyze", "adjoint"):
        report["adjoint"] = _adjoint_section(bm, tol, findings)
    if cmd in ("analyze", "mixing"):
        report["mixing"] = _mixing_section(bm, tol, findings, horizon)
        if csv_dir:
            d = bm.qms.dim
            x = np.zeros((d, d), dtype=complex)
            x[0, 0] = 1.0
            times = default_sample_times(bm.qms.kind)
            rows = decay_table(bm.qms, bm.state, x, x, times)
            path = os.path.join(csv_dir, "correlation_decay.csv")
            _write_csv(path, rows)
            report["mixing"]["csv"] = path
    if cmd in ("analyze", "dilation"):
        report["dilation"] = _dilation_section(
            bm, tol, findings,
            grid_points=getattr(args, "grid", None),
            tails=getattr(args, "tails", None),
            cap=args.cap, csv_dir=csv_dir,
        )
    if cmd in ("analyze", "minimal-check"):
        report["minimal_semigroup"] = _minimal_section(bm, tol, findings)
    report["findings"] = findings
    _emit(report, args.format)
    return 2 if findings else 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
