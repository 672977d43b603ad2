"""Command line entry point: ``drpp {run,constants,sweep,validate,compare}``."""
from __future__ import annotations

import argparse
import math
import sys

import yaml

from .data import SYNTH_KINDS
from .errors import DrppError
from .experiment import METHOD_NAMES, ExperimentConfig, build_instance, detection_at, execute, run_experiment


class _Parser(argparse.ArgumentParser):
    """argparse with exit code 2 and usage text on any bad flag or subcommand."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _global_flags():
    p = argparse.ArgumentParser(add_help=False)
    # SUPPRESS keeps a flag given before the subcommand from being reset by the subparser
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="experiment seed (overrides config)")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output directory (overrides config)")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                   help="worker threads; never changes results")
    return p


def build_parser():
    common = _global_flags()
    parser = _Parser(prog="drpp", description=__doc__, parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_config(name, help_text):
        p = sub.add_parser(name, help=help_text, parents=[common],
                           epilog="Config overrides: --key=value, e.g. --outer_iters=5 "
                                  "--sweep.epsilon=1,10 --instance.n=200")
        p.add_argument("config", nargs="?", default=None, help="YAML config (defaults if omitted)")
        return p

    with_config("run", "run the configured sweep and write all artifacts")
    with_config("constants", "print the constants report for every epsilon")
    sw = with_config("sweep", "run the cross product of epsilon and lam_c lists")
    sw.add_argument("--epsilon", default=None, help="comma-separated epsilon list")
    sw.add_argument("--lam-c", dest="lam_c", default=None, help="comma-separated lam_c list")
    with_config("compare", "static vs PP vs DR-PP detection table on stdout")
    v = sub.add_parser("validate", help="oracle self-checks on a synthetic instance", parents=[common])
    v.add_argument("instance", choices=SYNTH_KINDS)
    return parser


def _split_overrides(parser, extras):
    out = []
    for tok in extras:
        if not (tok.startswith("--") and "=" in tok):
            parser.error(f"unrecognized arguments: {tok}")
        key, _, raw = tok[2:].partition("=")
        try:
            value = yaml.safe_load(raw) if raw else None
        except yaml.YAMLError:
            value = raw
        out.append((key, value))
    return out


def load_config(args, overrides):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    overrides = list(overrides)
    if getattr(args, "seed", None) is not None:
        overrides.append(("seed", args.seed))
    if getattr(args, "out", None) is not None:
        overrides.append(("out", args.out))
    return cfg.override_many(overrides)


def _fmt(x):
    return "nan" if isinstance(x, float) and math.isnan(x) else f"{x:.6g}"


def cmd_constants(cfg):
    from .analysis import compute_constants

    inst = build_instance(cfg)
    prob = inst.problems[cfg.lam_values[0]]
    print(f"lam_c = {cfg.lam_values[0]:g}, inner_tol = {cfg.inner_tol:g}, eta = {cfg.eta:g}")
    for e in cfg.sweep.epsilon:
        eff = cfg.epsilon_scale * e
        rep = compute_constants(prob.ledger(eff), inner_tol=cfg.inner_tol, eta=cfg.eta)
        print(f"epsilon = {e:g} (effective {eff:g})")
        for name in ("mu", "gamma", "kappa_rm", "C_rm", "kappa_gd", "C_gd", "eta_bound",
                     "subopt_param_bound", "subopt_risk_bound"):
            print(f"  {name:<20s} {_fmt(getattr(rep, name))}")
        print(f"  {'flags':<20s} {', '.join(rep.flags) or 'none'}")
    return 0


def cmd_run(cfg, threads):
    res = run_experiment(cfg, threads=threads)
    for r in res.failed:
        print(f"cell epsilon={r.epsilon:g} lam_c={r.lam_c:g} {r.algorithm} failed: {r.message}",
              file=sys.stderr)
    print(f"wrote {res.out} ({len(res.results) - len(res.failed)}/{len(res.results)} cells ok)")
    return 0 if res.ok else 1


def cmd_compare(cfg, threads):
    cfg = cfg.override("algorithms", ["static", "pp_rrm", "rrm"])
    cfg = cfg.override("sweep.lam_c", [])
    _, results = execute(cfg, threads)
    T = cfg.outer_iters
    print(f"{'epsilon':>9}  {'method':<7} {'det@1':>8} {'det@T':>8} {'acc@T':>8}  status")
    failed = False
    for r in results:
        if r.trace is None or not r.trace.records:
            failed = True
            print(f"{r.epsilon:>9g}  {METHOD_NAMES[r.algorithm]:<7} {'':>8} {'':>8} {'':>8}  {r.message}")
            continue
        failed |= r.failed
        acc = r.trace.records[min(T, len(r.trace.records)) - 1].accuracy
        print(f"{r.epsilon:>9g}  {METHOD_NAMES[r.algorithm]:<7} {detection_at(r.trace, 1):8.4f} "
              f"{detection_at(r.trace, T):8.4f} {acc:8.4f}  {r.message or r.trace.stop_reason}")
    return 1 if failed else 0


def cmd_validate(kind, seed):
    from .validate import run_validation

    checks = run_validation(kind, 0 if seed is None else seed)
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return 0 if all(ok for _, ok, _ in checks) else 1


def main(argv=None):
    parser = build_parser()
    args, extras = parser.parse_known_args(argv)
    threads = getattr(args, "threads", 1)
    if threads < 1:
        parser.error("--threads must be >= 1")
    try:
        if args.command == "validate":
            if extras:
                parser.error(f"unrecognized arguments: {' '.join(extras)}")
            return cmd_validate(args.instance, getattr(args, "seed", None))
        cfg = load_config(args, _split_overrides(parser, extras))
        if args.command == "sweep":
            if args.epsilon is not None:
                cfg = cfg.override("sweep.epsilon", args.epsilon)
            if args.lam_c is not None:
                cfg = cfg.override("sweep.lam_c", args.lam_c)
            return cmd_run(cfg, threads)
        if args.command == "run":
            return cmd_run(cfg, threads)
        if args.command == "constants":
            return cmd_constants(cfg)
        return cmd_compare(cfg, threads)
    except (DrppError, OSError) as exc:
        print(f"drpp: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
