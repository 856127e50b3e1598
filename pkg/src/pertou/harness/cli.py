"""Command line interface.

Exit codes: 0 when every check passes, 1 when a check fails, 2 on a
configuration (or input) error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from ..levy import check_nondegeneracy
from ..structure import ValidationError, check_kalman
from .config import ConfigError, load_config
from .experiments import ExperimentResult, registered_names, run_experiment
from .report import ReportError, ReportRow, emit_report, read_report, render_csv, summarize

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment configuration")
    common.add_argument("--seed", type=_u64, help="override mc.seed")
    common.add_argument("--threads", type=_positive, help="worker threads for Monte Carlo blocks")
    common.add_argument("--out", help="CSV output path (overrides outputs.path)")

    p = argparse.ArgumentParser(prog="pertou", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("analyze", parents=[common], help="structure report for the operator")
    s = sub.add_parser("solve", parents=[common], help="perturbed solve at one probe")
    s.add_argument("--probe", type=int, default=0, help="index into the config probes")
    s.add_argument("--epsilon", type=float, default=0.05)
    s.add_argument("--inner", choices=["sample", "exact"], default="sample")
    v = sub.add_parser("verify", parents=[common], help="run a registered experiment")
    v.add_argument("experiment", nargs="?",
                   help="one of: " + ", ".join(registered_names()))
    sub.add_parser("sweep", parents=[common], help="epsilon sweep on the config probes")
    r = sub.add_parser("report", parents=[common], help="re-render an existing CSV report")
    r.add_argument("input", help="CSV produced by an earlier run")
    return p


def _load(args):
    if not args.config:
        raise ConfigError("--config is required for this command")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.threads is not None:
        cfg = cfg.with_threads(args.threads)
    return cfg


def _write(rows, args, cfg=None):
    path = args.out or (cfg.outputs.path if cfg is not None else None)
    if path:
        emit_report(rows, path)
        print(f"wrote {len(rows)} rows to {path}")


def _print_result(res: ExperimentResult):
    for c in res.checks:
        print(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}")


def _analyze(args) -> int:
    cfg = _load(args)
    spec = cfg.operator
    st = check_kalman(spec)
    info = {"N": spec.N, "alpha": spec.alpha, "kalman": st.satisfied, "k": st.k,
            "dims": list(st.dims), "exponents": list(st.exponents), "kappa2": st.kappa2,
            "dilation_invariant": st.dilation_invariant}
    if spec.alpha < 2.0:
        nd = check_nondegeneracy(spec.spectral, spec.alpha)
        info["kappa_alpha"] = nd.kappa_alpha
        info["nondegenerate"] = nd.passed
    print(json.dumps(info, indent=2))
    rows = [ReportRow("analyze", {"quantity": "kappa2", "dims": list(st.dims)}, st.kappa2,
                      st.kappa2, st.kappa2, cfg.seed)]
    rows += [ReportRow("analyze", {"quantity": "exponent", "block": i}, e, e, e, cfg.seed)
             for i, e in enumerate(st.exponents)]
    _write(rows, args, cfg)
    ok = st.satisfied and info.get("nondegenerate", True)
    return EXIT_OK if ok else EXIT_FAIL


def _solve(args) -> int:
    cfg = _load(args)
    if not cfg.probes:
        raise ConfigError("probes: solve needs at least one probe")
    if not 0 <= args.probe < len(cfg.probes):
        raise ConfigError(f"--probe {args.probe}: config has {len(cfg.probes)} probes")
    st = check_kalman(cfg.operator)
    if not st.satisfied:
        raise ConfigError("operator: the Kalman rank condition fails")
    from ..perturb import solve_perturbed
    t, x = cfg.probes[args.probe]
    est = solve_perturbed(cfg.operator, st, cfg.schedule, cfg.source, args.epsilon, t, x,
                          cfg.mc, inner=args.inner)
    bound = cfg.operator.horizon_T * cfg.source.sup_abs()
    ok = abs(est.value) <= bound + 3.0 * est.std_error
    print(f"u({t:g}, {np.array2string(x, separator=', ')}) = {est.value:.10g} "
          f"+/- {est.std_error:.3g}  ({est.samples} samples)")
    print(f"[{'PASS' if ok else 'FAIL'}] max principle: |u| <= {bound:.6g} + 3 se")
    params = {"probe": args.probe, "t": t, "x": x.tolist(), "epsilon": args.epsilon,
              "inner": args.inner, "pass": bool(ok)}
    _write([ReportRow.with_se("solve", params, est.value, est.std_error, cfg.seed)], args, cfg)
    return EXIT_OK if ok else EXIT_FAIL


def _run(args, name) -> int:
    cfg = _load(args)
    if name and cfg.experiment and name != cfg.experiment and cfg.settings:
        raise ConfigError(f"experiment: config settings belong to {cfg.experiment!r}, "
                          f"not {name!r}")
    res = run_experiment(cfg, name)
    _print_result(res)
    _write(res.rows, args, cfg)
    return EXIT_OK if res.passed else EXIT_FAIL


def _report(args) -> int:
    rows = read_report(args.input)
    if args.out:
        emit_report(rows, args.out)
    else:
        sys.stdout.write(render_csv(rows))
    print(summarize(rows), file=sys.stderr if not args.out else sys.stdout)
    failed = any(r.params.get("pass") is False for r in rows)
    return EXIT_FAIL if failed else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.verb == "analyze":
            return _analyze(args)
        if args.verb == "solve":
            return _solve(args)
        if args.verb == "verify":
            return _run(args, args.experiment)
        if args.verb == "sweep":
            return _run(args, "epsilon-sweep")
        return _report(args)
    except (ConfigError, ReportError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
