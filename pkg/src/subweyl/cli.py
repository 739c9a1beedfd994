"""Command-line front end: thin wrappers over the library pipeline.

Subcommands: audit, assemble, spectrum, trace, ball, fit, verify, list.
Exit codes: 0 success / all checks passed, 1 failed checks or failed
computation, 2 invalid configuration or arguments.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import asymptotics, ccball, filtration, spectral
from .assembly import assemble_operator, export_pencil
from .harness import ConfigError, RunConfig, list_scenarios, run_scenario


def _base_config(args) -> RunConfig:
    if getattr(args, "config", None):
        cfg = RunConfig.from_file(args.config)
    else:
        if not getattr(args, "scenario", None):
            raise ConfigError("give a scenario id or --config PATH")
        cfg = RunConfig(scenario=args.scenario)
    over = {}
    if getattr(args, "scenario", None) and cfg.scenario != args.scenario:
        over["scenario"] = args.scenario
    if args.seed is not None:
        over["seed"] = args.seed
    if args.workers is not None:
        over["workers"] = args.workers
    if args.out is not None:
        over["out"] = args.out
    return dataclasses.replace(cfg, **over) if over else cfg


def _outdir(args) -> Path:
    out = Path(args.out or "runs")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_audit(args) -> int:
    cfg = _base_config(args)
    entry = cfg.entry()
    grid = entry.grid(cfg.resolution)
    report = filtration.hormander_audit(entry.fields(), grid.lengths,
                                        entry.audit_samples,
                                        keep_points=bool(args.out))
    print(report.to_json())
    if args.out:
        out = _outdir(args)
        (out / f"{entry.id}-audit.json").write_text(report.to_json() + "\n")
        filtration.audit_points_csv(report.points,
                                    str(out / f"{entry.id}-audit-points.csv"))
    return 0 if not report.failures else 1


def cmd_assemble(args) -> int:
    cfg = _base_config(args)
    entry = cfg.entry()
    pencil = assemble_operator(entry.scenario(), entry.grid(cfg.resolution))
    print(json.dumps({
        "scenario": entry.id, "dim": pencil.dim,
        "nnz": int(pencil.S.nnz), "nnz_per_row": pencil.S.nnz / pencil.dim,
        "symmetric": pencil.symmetric, "asymmetry": pencil.asymmetry,
        "scheme": pencil.scheme}, indent=2, sort_keys=True))
    if args.out:
        export_pencil(pencil, str(_outdir(args) / f"{entry.id}-pencil"))
    return 0


def cmd_spectrum(args) -> int:
    cfg = _base_config(args)
    entry = cfg.entry()
    pencil = assemble_operator(entry.scenario(), entry.grid(cfg.resolution))
    if args.k:
        spec = spectral.lowest_eigs(pencil, args.k)
        for lam, r in zip(spec.eigenvalues, spec.residual_norms):
            print(f"{lam:.12g}  (residual {r:.2e})")
        return 0
    lams = ([args.below] if args.below is not None
            else entry.lam_values(cfg.resolution))
    curve = spectral.count_curve(pencil, lams, workers=cfg.workers)
    for lam, c in curve:
        print(f"lambda={lam:.6g}  count={c}")
    if args.out:
        spectral.export_count_csv(curve,
                                  str(_outdir(args) / f"{entry.id}-counts.csv"))
    return 0


def cmd_trace(args) -> int:
    cfg = _base_config(args)
    entry = cfg.entry()
    pencil = assemble_operator(entry.scenario(), entry.grid(cfg.resolution))
    ts = entry.t_values(cfg.resolution)
    ests = spectral.heat_trace_curve(pencil, ts,
                                     method=args.method or entry.trace_method,
                                     n_probes=entry.n_trace_probes,
                                     seed=cfg.seed)
    for e in ests:
        print(f"t={e.t:.6g}  trace={e.value:.8g}  stderr={e.stderr:.3g}  "
              f"[{e.method}]")
    if args.out:
        spectral.export_trace_csv(ests,
                                  str(_outdir(args) / f"{entry.id}-trace.csv"))
    return 0


def cmd_ball(args) -> int:
    cfg = _base_config(args)
    entry = cfg.entry()
    fields = entry.fields()
    x0 = np.zeros(len(entry.coords))
    fit = ccball.doubling_exponent(x0, fields, kind=args.kind,
                                   delta_range=(args.delta_lo, args.delta_hi),
                                   samples=args.samples, seed=cfg.seed)
    lo, hi = fit.ci95
    print(f"doubling exponent at {x0.tolist()}: {fit.exponent:.4f} "
          f"(95% ci [{lo:.4f}, {hi:.4f}])")
    cmp = ccball.lambda_compare(x0, fields, seed=cfg.seed,
                                delta_range=(args.delta_lo, args.delta_hi),
                                samples=max(args.samples // 2, 1000))
    print(f"Lambda/volume ratio spread over window: {cmp['spread']:.3f} "
          f"(max/min {cmp['max']:.3g}/{cmp['min']:.3g})")
    return 0


def cmd_fit(args) -> int:
    pairs = []
    with open(args.data) as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            row = line.strip().split(",")
            if len(row) >= 2:
                pairs.append((float(row[0]), float(row[1])))
    if header[0] == "t":   # trace: fit Tr ~ C t^-p via 1/Tr
        pairs = [(u, 1.0 / v) for u, v in pairs]
    window = tuple(args.window) if args.window else None
    fit = asymptotics.fit_power_law(pairs, window=window)
    if header[0] == "t":
        fit = dataclasses.replace(
            fit, coefficient=1.0 / fit.coefficient,
            coeff_stderr=fit.coeff_stderr / fit.coefficient**2)
    print(json.dumps(fit.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_verify(args) -> int:
    return run_scenario(_base_config(args))


def cmd_list(args) -> int:
    return list_scenarios()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="subweyl",
        description="Spectral asymptotics for degenerate sum-of-squares "
                    "operators: audits, assembly, spectra, and verdicts.")
    ap.add_argument("--config", help="run config JSON")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--out", default=None, help="artifact directory")
    sub = ap.add_subparsers(dest="command", required=True)

    def scen(p):
        p.add_argument("scenario", nargs="?", help="registry scenario id")
        return p

    scen(sub.add_parser("audit", help="filtration audit")).set_defaults(
        fn=cmd_audit)
    scen(sub.add_parser("assemble", help="build the operator pencil")
         ).set_defaults(fn=cmd_assemble)
    p = scen(sub.add_parser("spectrum", help="counting / lowest eigenvalues"))
    p.add_argument("--k", type=int, default=0, help="lowest k eigenvalues")
    p.add_argument("--below", type=float, default=None,
                   help="count eigenvalues below this value")
    p.set_defaults(fn=cmd_spectrum)
    p = scen(sub.add_parser("trace", help="heat trace curve"))
    p.add_argument("--method", choices=("auto", "eigsum", "stochastic"),
                   default=None)
    p.set_defaults(fn=cmd_trace)
    p = scen(sub.add_parser("ball", help="CC-ball volume scaling"))
    p.add_argument("--kind", choices=ccball.CONTROL_KINDS, default="C2")
    p.add_argument("--delta-lo", type=float, default=0.1)
    p.add_argument("--delta-hi", type=float, default=0.4)
    p.add_argument("--samples", type=int, default=100_000)
    p.set_defaults(fn=cmd_ball)
    p = sub.add_parser("fit", help="power-law fit of an exported CSV")
    p.add_argument("data", help="counts.csv or trace.csv")
    p.add_argument("--window", type=float, nargs=2, default=None)
    p.set_defaults(fn=cmd_fit)
    scen(sub.add_parser("verify", help="full pipeline verdict")).set_defaults(
        fn=cmd_verify)
    sub.add_parser("list", help="registry scenarios").set_defaults(fn=cmd_list)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (KeyError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
