"""Command-line interface: config-driven batch analysis with CSV/JSON output.

Subcommands::

    patchpop validate  config.json   structure conditions H-report
    patchpop simulate  config.json   newborn + total-population time series (CSV)
    patchpop analyze   config.json   reproductive rate, bounds, maximal solution
    patchpop periodic  config.json   periodic rate and maximal periodic profile
    patchpop envelope  config.json   envelope certificate for irregular rates

Exit codes: 0 success, 1 analysis/validation failure, 2 input error. All
numeric output is printed with 17 significant digits so that golden-file
regressions are meaningful; identical configs produce byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import periodic as periodic_mod
from . import renewal, spectral, steady
from .config import RunConfig, load_config
from .errors import (
    ConfigError,
    ConvergenceError,
    PatchPopError,
    PreconditionError,
    ReducibleMatrixError,
)
from .grids import resolve_age_step
from .model import validate
from .scenarios import _isolated_sigmas

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INPUT = 2


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _vec(v) -> str:
    return "[" + ", ".join(_fmt(x) for x in np.atleast_1d(v)) + "]"


def _out_dir(cfg: RunConfig, override: str | None) -> Path:
    d = Path(override) if override else Path(cfg.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    updates = {}
    if args.da is not None:
        updates["age_step"] = args.da
    if args.tol is not None:
        updates["tol"] = args.tol
    if args.tend is not None:
        updates["t_end"] = args.tend
    if args.phase_nodes is not None:
        updates["phase_nodes"] = args.phase_nodes
    if not updates:
        return cfg
    from dataclasses import replace

    return replace(cfg, **updates)


def cmd_validate(cfg: RunConfig, out: Path) -> int:
    report = validate(cfg.model)
    for entry in report.entries:
        status = "pass" if entry.passed else "FAIL"
        print(f"{entry.name}: {status}  {entry.detail}")
    payload = {
        "passed": report.passed,
        "conditions": {
            e.name: {"passed": e.passed, "detail": e.detail, "witness": e.witness}
            for e in report.entries
        },
    }
    (out / "validation.json").write_text(json.dumps(payload, indent=2, default=str) + "\n")
    print(f"overall: {'pass' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    model = cfg.model
    report = validate(model)
    if not report.passed:
        print("model failed validation; run `patchpop validate` for details",
              file=sys.stderr)
        return EXIT_FAIL
    try:
        rho = renewal.solve_renewal(model, cfg.resolved_t_end(), tol=cfg.tol,
                                    step=cfg.age_step)
    except ConvergenceError as err:
        print(f"simulation did not converge: {err}", file=sys.stderr)
        return EXIT_FAIL
    field = renewal.reconstruct_density(model, rho)
    totals = np.trapezoid(field.values, dx=field.step, axis=1)
    path = out / "simulation.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        n = model.n_patches
        writer.writerow(
            ["t"] + [f"rho_{k + 1}" for k in range(n)] + [f"P_{k + 1}" for k in range(n)]
        )
        for j, t in enumerate(rho.times):
            writer.writerow(
                [_fmt(t)] + [_fmt(x) for x in rho.values[j]] + [_fmt(x) for x in totals[j]]
            )
    diag = rho.diagnostics
    print(f"wrote {path} ({len(rho.times)} rows)")
    print(f"iterations: {diag.iterations} (certificate bound {diag.certificate_bound})")
    print(f"final newborn levels: {_vec(rho.values[-1])}")
    return EXIT_OK


def cmd_analyze(cfg: RunConfig, out: Path) -> int:
    model = cfg.model
    report = validate(model)
    if not report.passed:
        print("model failed validation; run `patchpop validate` for details",
              file=sys.stderr)
        return EXIT_FAIL
    payload: dict = {}
    try:
        state = steady.classify(model, tol=cfg.tol, step=cfg.age_step)
    except ReducibleMatrixError:
        sigmas = _isolated_sigmas(model, cfg.age_step)
        print("dispersal topology is reducible; per-patch rates instead:")
        for k, s in enumerate(sigmas):
            print(f"  patch {k + 1}: sigma = {_fmt(s)}")
        payload = {"reducible": True, "per_patch_sigma": [float(s) for s in sigmas]}
        (out / "analysis.json").write_text(json.dumps(payload, indent=2) + "\n")
        return EXIT_OK
    repro = spectral.assemble_R0(model, cfg.age_step)
    print(f"net reproductive rate sigma = {_fmt(state.sigma)}")
    print(f"perron vector: {_vec(repro.perron_vector)}")
    print(f"classification: {state.classification.value}")
    print(f"maximal solution theta: {_vec(state.theta)}")
    print(f"asymptotic totals: {_vec(state.asymptotic_total)}")
    payload = {
        "sigma": float(state.sigma),
        "perron_vector": [float(x) for x in repro.perron_vector],
        "classification": state.classification.value,
        "theta": [float(x) for x in state.theta],
        "asymptotic_total": [float(x) for x in state.asymptotic_total],
    }
    if model.dispersal.column_sum_nonpositive:
        bounds = spectral.sigma_bounds(model, cfg.age_step)
        ok = bounds.lower - 1e-9 <= state.sigma <= bounds.upper + 1e-9
        print(f"rate sandwich: {_fmt(bounds.lower)} <= sigma <= {_fmt(bounds.upper)}"
              f" ({'consistent' if ok else 'VIOLATED'})")
        payload["sigma_bounds"] = {"lower": bounds.lower, "upper": bounds.upper,
                                   "consistent": bool(ok)}
        upper = spectral.theta_upper_bound(model, cfg.age_step)
        if upper is not None:
            total = float(state.theta.sum())
            print(f"newborn-sum bound: sum(theta) = {_fmt(total)} <= {_fmt(upper)}")
            payload["theta_upper_bound"] = upper
            payload["theta_sum_ok"] = bool(total <= upper + 1e-6)
        lowers = {}
        for k in range(model.n_patches):
            low = spectral.theta_lower_bound(model, k, step=cfg.age_step)
            if low is not None:
                lowers[k] = low
                print(f"patch {k + 1} lower bound: {_fmt(low)} <= theta_{k + 1} = "
                      f"{_fmt(state.theta[k])}")
        payload["theta_lower_bounds"] = {str(k): v for k, v in lowers.items()}
    else:
        print("rate sandwich: not applicable (dispersal column sums not declared nonpositive)")
        payload["sigma_bounds"] = None
    (out / "analysis.json").write_text(json.dumps(payload, indent=2) + "\n")
    return EXIT_OK


def cmd_periodic(cfg: RunConfig, out: Path) -> int:
    model = cfg.model
    report = validate(model)
    if not report.passed:
        print("model failed validation", file=sys.stderr)
        return EXIT_FAIL
    _, sigma = periodic_mod.assemble_periodic_R0(model, cfg.phase_nodes, cfg.age_step)
    print(f"periodic net reproductive rate sigma = {_fmt(sigma)} "
          f"({cfg.phase_nodes} phase nodes)")
    theta = periodic_mod.periodic_maximal_solution(
        model, cfg.phase_nodes, tol=cfg.tol, step=cfg.age_step
    )
    path = out / "periodic_theta.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["phase"] + [f"theta_{k + 1}" for k in range(model.n_patches)])
        for phase, row in zip(theta.phases(), theta.samples):
            writer.writerow([_fmt(phase)] + [_fmt(x) for x in row])
    print(f"wrote {path}")
    print(f"max periodic newborn level: {_fmt(theta.samples.max())}")
    payload = {"sigma": float(sigma), "phase_nodes": cfg.phase_nodes,
               "theta_max": float(theta.samples.max()),
               "period": float(theta.period)}
    (out / "periodic.json").write_text(json.dumps(payload, indent=2) + "\n")
    return EXIT_OK


def cmd_envelope(cfg: RunConfig, out: Path) -> int:
    if cfg.envelope is None:
        print("config has no envelope section", file=sys.stderr)
        return EXIT_INPUT
    model = cfg.model
    try:
        result = periodic_mod.envelope_bounds(
            cfg.envelope, model, cfg.resolved_t_end(),
            phase_nodes=cfg.phase_nodes, solver_tol=cfg.tol, step=cfg.age_step,
        )
    except PreconditionError as err:
        print(f"envelope check failed: {err}", file=sys.stderr)
        return EXIT_FAIL
    print(f"case: {result.case}")
    payload: dict = {"case": result.case}
    if result.case == "decay":
        print(f"upper-envelope rate: {_fmt(result.sigma_plus)}")
        print(f"final-window newborn norm: {_fmt(result.final_norm)}")
        payload.update(sigma_plus=result.sigma_plus, final_norm=result.final_norm)
    elif result.case == "sandwich":
        print(f"envelope rates: lower {_fmt(result.sigma_minus)}, "
              f"upper {_fmt(result.sigma_plus)}")
        if result.t2 is not None:
            print(f"witness: T2 = {_fmt(result.t2)}, eps = {_fmt(result.eps)}")
        print(f"violations: {len(result.violations)}")
        payload.update(
            sigma_minus=result.sigma_minus, sigma_plus=result.sigma_plus,
            t2=result.t2, eps=result.eps, violations=result.violations,
        )
    else:
        print("inconclusive: neither envelope case's precondition holds")
        payload.update(sigma_minus=result.sigma_minus, sigma_plus=result.sigma_plus)
    (out / "envelope.json").write_text(json.dumps(payload, indent=2) + "\n")
    if result.case == "sandwich" and result.violations:
        return EXIT_FAIL
    return EXIT_OK


_COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "periodic": cmd_periodic,
    "envelope": cmd_envelope,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchpop",
        description="Age-structured multi-patch population analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="path to the JSON run configuration")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--da", type=float, default=None, help="age/time grid step")
        p.add_argument("--tol", type=float, default=None, help="solver tolerance")
        p.add_argument("--tend", type=float, default=None, help="simulation horizon")
        p.add_argument("--phase-nodes", type=int, default=None,
                       help="phase nodes for periodic analysis")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_INPUT
    cfg = _apply_overrides(cfg, args)
    try:
        out = _out_dir(cfg, args.out)
        return _COMMANDS[args.command](cfg, out)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except PatchPopError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
