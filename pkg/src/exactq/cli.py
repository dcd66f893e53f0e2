"""Command line entry point: ``exactq sample|solve-params|lindley|audit``.

Exit status: 0 on success, 2 when the parameters are infeasible, 1 when a
runtime assertion (an acceptance ratio above one) fires.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import oracles
from .experiment import (
    ScenarioConfig,
    load_preset,
    preset_names,
    run_experiment,
    run_lindley,
    summary_table,
    traffic_intensity,
    write_lindley_csv,
)
from .params import InfeasibleParams, check_feasibility
from .sampler import AcceptanceRatioError, EvaluationBudgetExceeded

EXIT_OK, EXIT_RUNTIME, EXIT_INFEASIBLE = 0, 1, 2

log = logging.getLogger("exactq")


def _load(spec: str) -> ScenarioConfig:
    """A path to a JSON config, or the name of a shipped preset."""
    p = Path(spec)
    if p.exists():
        return ScenarioConfig.load(p)
    if spec in preset_names():
        return load_preset(spec)
    raise SystemExit(f"no such config file or preset: {spec} (presets: {', '.join(preset_names())})")


def _dump(obj):
    print(json.dumps(obj, indent=2, default=str))


def cmd_sample(args) -> int:
    cfg = _load(args.config)
    raw = cfg.to_dict()
    if args.replicas is not None:
        raw["replicas"] = args.replicas
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.threads is not None:
        raw["threads"] = args.threads
    if args.out is not None:
        raw["output_dir"] = args.out
    if raw.get("output_dir") is None:
        raw["output_dir"] = f"runs/{cfg.name}"
    if args.no_strict:
        raw["strict"] = False
    cfg = ScenarioConfig.from_dict(raw)
    summary = run_experiment(cfg, write=True, lindley=not args.no_lindley, audit=args.audit)
    sys.stdout.write(summary_table([summary]))
    log.info("wrote %s", cfg.output_dir)
    if summary.ratio_violations:
        print(f"{summary.ratio_violations} acceptance ratios above one (max {summary.max_violation_ratio:.4g})")
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = _load(args.config)
    raw = cfg.to_dict()
    raw["params"] = "solve"
    if args.alpha is not None or args.delta is not None or args.gamma is not None:
        solve = dict(raw.get("solve") or {})
        for key in ("alpha", "delta", "gamma"):
            if getattr(args, key) is not None:
                solve[key] = getattr(args, key)
        raw["solve"] = solve
    elif not raw.get("solve") and isinstance(cfg.params, dict):
        raw["solve"] = {k: cfg.params[k] for k in ("alpha", "delta", "gamma") if k in cfg.params}
    cfg = ScenarioConfig.from_dict(raw)
    params = cfg.algorithm_params()
    law, _, _ = cfg.simulated_law()
    rep = check_feasibility(params, law)
    _dump({"params": params.to_dict(), "feasibility": rep.to_dict(), "rho": traffic_intensity(cfg)})
    return EXIT_OK


def cmd_lindley(args) -> int:
    cfg = _load(args.config)
    res, means, secs = run_lindley(cfg, args.length, args.batch)
    out = dict(res.to_dict(), seconds=secs)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        write_lindley_csv(means, args.out)
        out["csv"] = args.out
    _dump(out)
    return EXIT_OK


def cmd_audit(args) -> int:
    cfg = _load(args.config)
    params = cfg.algorithm_params()
    law, _, _ = cfg.simulated_law()
    rep = check_feasibility(params, law)
    audit = oracles.ratio_bound_audit(params, law, args.kmax)
    _dump({"name": cfg.name, "params": params.to_dict(), "feasibility": rep.to_dict(), "audit": audit.to_dict()})
    return EXIT_OK if (audit.passed and rep.feasible) else EXIT_INFEASIBLE


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="exactq", description="Exact sampling of the stationary single-server queue")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="exact replicas of M_0 plus the batch-means reference")
    s.add_argument("--config", required=True, help="JSON config file or preset name")
    s.add_argument("--replicas", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int)
    s.add_argument("--out", help="output directory (default: config output_dir or runs/<name>)")
    s.add_argument("--audit", action="store_true", help="include the ratio-bound audit in the summary")
    s.add_argument("--no-lindley", action="store_true", help="skip the batch-means chain")
    s.add_argument("--no-strict", action="store_true",
                   help="record acceptance ratios above one instead of aborting")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("solve-params", help="smallest feasible m for the config's (alpha, delta, gamma)")
    s.add_argument("--config", required=True)
    s.add_argument("--alpha", type=float)
    s.add_argument("--delta", type=float)
    s.add_argument("--gamma", type=float)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("lindley", help="forward Lindley chain with batch means")
    s.add_argument("--config", required=True)
    s.add_argument("--length", type=int)
    s.add_argument("--batch", type=int)
    s.add_argument("--out", help="CSV of batch means")
    s.set_defaults(func=cmd_lindley)

    s = sub.add_parser("audit", help="feasibility report and acceptance-ratio bound audit")
    s.add_argument("--config", required=True)
    s.add_argument("--kmax", type=int, default=30)
    s.set_defaults(func=cmd_audit)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except InfeasibleParams as exc:
        _dump({"error": "infeasible parameters", "failed": exc.report.failed(), "report": exc.report.to_dict()})
        return EXIT_INFEASIBLE
    except (AcceptanceRatioError, EvaluationBudgetExceeded) as exc:
        print(f"runtime assertion failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main_exit():  # console script wrapper
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    main_exit()
