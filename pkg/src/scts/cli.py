"""Command-line entry point: ``scts <subcommand> ...``.

Exit codes: 0 on success, 2 for configuration errors (including bad
arguments), 3 for data errors.  The output directory is taken from
``--output-dir``, then the ``SCTS_OUTPUT_DIR`` environment variable, then
the ``output_dir`` key of the config file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .bench import (BenchmarkConfig, emit_series, report_from_dir, resolve_output_dir,
                    run_benchmark, run_inference_benchmark, simulate)
from .errors import ConfigError, DataError
from .inference import RerandomizationConfig, invert_to_ci, rerandomize_test
from .policies import KINDS, ExperimentResult

log = logging.getLogger("scts")


def _load_config(args) -> BenchmarkConfig:
    cfg = BenchmarkConfig.from_file(args.config) if args.config else BenchmarkConfig()
    if getattr(args, "workers", None):
        cfg = replace(cfg, workers=args.workers)
    return cfg


def _load_history(path) -> ExperimentResult:
    p = Path(path)
    if not p.exists():
        raise DataError(f"{p}: no such experiment file")
    try:
        return ExperimentResult.load(p)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"{p}: not a valid experiment record ({exc})") from exc


def _rerand_config(args) -> RerandomizationConfig:
    grid = None
    if getattr(args, "grid", None):
        try:
            grid = tuple(float(x) for x in args.grid.split(","))
        except ValueError as exc:
            raise ConfigError(f"--grid must be lo,hi,step; got {args.grid!r}") from exc
        if len(grid) != 3:
            raise ConfigError(f"--grid must be lo,hi,step; got {args.grid!r}")
    return RerandomizationConfig(k=args.k, alpha=args.alpha, grid=grid, base_seed=args.seed,
                                 two_sided=args.two_sided)


def _emit(obj: dict, out) -> None:
    text = json.dumps(obj, indent=1, sort_keys=True)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")
    print(text)


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    res = simulate(cfg, args.design, args.tau, args.instance)
    out = Path(args.out) if args.out else (
        resolve_output_dir(cfg, args.output_dir)
        / f"experiment_{args.design}_tau{args.tau:+g}_{args.instance}.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    res.save(out)
    print(json.dumps({"path": str(out), "design": res.design, "tau_star": res.tau_star,
                      "normalized_regret": res.regret.normalized, "M_size": len(res.M),
                      "tau_hat": res.tau_hat}, sort_keys=True))
    return 0


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    out = resolve_output_dir(cfg, args.output_dir)
    report = run_benchmark(cfg, out)
    if args.series:
        emit_series(report, out)
    for row in report.rows:
        print(f"{row['design']:>10} {row['estimator']:>18} tau={row['tau_star']:+.3g} "
              f"regret={row['normalized_regret_mean']:.3f} rmse={row['rmse_relative']:.3f} "
              f"sign={row['sign_accuracy']:.2f}")
    print(f"wrote {out}")
    return 0


def cmd_infer(args) -> int:
    cfg = _load_config(args)
    out = resolve_output_dir(cfg, args.output_dir)
    report = run_inference_benchmark(cfg, out)
    for row in report.table:
        print(row["metric"], " ".join(f"{k}:{v:.3f}" for k, v in row.items() if k != "metric"))
    print(f"wrote {out}")
    return 0


def cmd_test(args) -> int:
    hist = _load_history(args.history)
    rep = rerandomize_test(hist, args.tau, _rerand_config(args))
    _emit(rep.to_dict(), args.out)
    return 0


def cmd_ci(args) -> int:
    hist = _load_history(args.history)
    cs = invert_to_ci(hist, _rerand_config(args))
    _emit(cs.to_dict(), args.out)
    return 0


def cmd_emit_plots(args) -> int:
    report = report_from_dir(args.report_dir)
    out = args.output_dir or args.report_dir
    for path in emit_series(report, out):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scts", description="Synthetically controlled Thompson sampling")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--output-dir")
        sp.add_argument("--workers", type=int)

    sp = sub.add_parser("simulate", help="run one experiment and store it as JSON")
    with_config(sp)
    sp.add_argument("--design", choices=KINDS, default="scts")
    sp.add_argument("--tau", type=float, default=1.0, help="effect in noise units")
    sp.add_argument("--instance", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("bench", help="regret / RMSE benchmark")
    with_config(sp)
    sp.add_argument("--series", action="store_true", help="also write per-design series")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("infer", help="coverage / power of the re-randomisation test")
    with_config(sp)
    sp.set_defaults(func=cmd_infer)

    for name, func, helptext in (("test", cmd_test, "re-randomisation test of H_tau"),
                                 ("ci", cmd_ci, "confidence set by test inversion")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--history", required=True, help="experiment JSON from `simulate`")
        if name == "test":
            sp.add_argument("--tau", type=float, required=True)
        else:
            sp.add_argument("--grid", help="lo,hi,step")
        sp.add_argument("--k", type=int, default=100)
        sp.add_argument("--alpha", type=float, default=0.1)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--two-sided", action="store_true")
        sp.add_argument("--out")
        sp.set_defaults(func=func)

    sp = sub.add_parser("emit-plots", help="write plot-ready CSV series from a bench output dir")
    sp.add_argument("--report-dir", required=True)
    sp.add_argument("--output-dir")
    sp.set_defaults(func=cmd_emit_plots)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
