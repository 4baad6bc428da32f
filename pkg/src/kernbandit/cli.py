"""Command-line front end.

Exit codes: 0 ok, 2 configuration error, 3 constraint violation or failed
certification, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from fractions import Fraction

import numpy as np

from .errors import ConfigError, ConstraintViolation, InvalidArgs, KernBanditError

EXIT_OK, EXIT_CONFIG, EXIT_CONSTRAINT, EXIT_NUMERICAL = 0, 2, 3, 4


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def cmd_simulate(args) -> int:
    from .config import load_config
    from .harness import run_sweep

    cfg = load_config(args.config).with_overrides(seed_base=args.seed, output_dir=args.out)
    path = run_sweep(cfg, workers=args.workers, write_traces=not args.no_traces)
    print(path)
    if args.plots:
        from .plotting import render_report

        for fig in render_report(cfg.output_dir):
            print(fig)
    return EXIT_OK


def cmd_report(args) -> int:
    from .plotting import render_report

    if not os.path.exists(os.path.join(args.dir, "summary.csv")):
        raise ConfigError(f"no summary.csv in {args.dir}")
    for fig in render_report(args.dir, max_traces=args.max_traces):
        print(fig)
    return EXIT_OK


def cmd_adversary_build(args) -> int:
    from .adversary import build_certified, export_instance, lower_bound_value

    L1 = args.L1 if args.L1 == "auto" else _positive(args.L1, "L1")
    inst = build_certified(args.m1, args.m2, L1, args.L2, args.rtilde, grid_size=args.grid)
    p = inst.params
    print(inst.report.summary())
    print(f"Delta={p.Delta:.17g} M={p.M} L1={p.L1:.17g}")
    if args.T:
        print(f"lower_bound_value(T={args.T})={lower_bound_value(p.m1, p.L1, p.R_tilde, args.T):.17g}")
    out = args.out or f"adversary_m{p.m1}{p.m2}.txt"
    export_instance(inst, out, grid_size=args.table_grid)
    print(out)
    if args.plots:
        from .plotting import instance_plot

        print(instance_plot(inst, os.path.splitext(out)[0] + ".png"))
    return EXIT_OK if inst.certified else EXIT_CONSTRAINT


def _positive(text, name):
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(f"expected a number or 'auto', got {text!r}", field=name) from None
    if not v > 0:
        raise ConfigError("must be positive", field=name)
    return v


def cmd_adversary_certify(args) -> int:
    from .adversary import certify_file

    rep = certify_file(args.file, grid_size=args.grid)
    print(rep.summary())
    if not rep.certified:
        names = ", ".join(c.name for c in rep.failures())
        print(f"certification failed: {names}", file=sys.stderr)
        return EXIT_CONSTRAINT
    return EXIT_OK


def cmd_exponents(args) -> int:
    from .metrics import theory_exponents

    nu1, nu2, nut = args.nu1, args.nu2, args.nu_tilde if args.nu_tilde is not None else args.nu2
    if nu1 > nu2:
        raise InvalidArgs(f"need nu1 <= nu2, got nu1={nu1}, nu2={nu2}")
    lower = theory_exponents("lower", nu1, nu2)
    rows = [
        (f"minimax(nu1={nu1})", theory_exponents("minimax", nu1), ""),
        (f"minimax(nu2={nu2})", theory_exponents("minimax", nu2), ""),
        (f"lower(nu1={nu1}, nu2={nu2})", lower, ""),
    ]
    corral = theory_exponents("corral", nut, nu1)
    rbbe = theory_exponents("rbbe", nu1)
    for name, val in ((f"corral(nu_tilde={nut}, nu*={nu1})", corral), (f"rbbe(nu*={nu1})", rbbe)):
        rows.append((name, val, "matches lower" if val == lower else ("above lower" if val > lower else "BELOW lower")))
    width = max(len(r[0]) for r in rows)
    print(f"{'rate':<{width}}  {'exponent':>10}  {'decimal':>9}")
    for name, val, note in rows:
        print(f"{name:<{width}}  {str(val):>10}  {float(val):9.6f}  {note}".rstrip())
    return EXIT_OK


def cmd_kernels_check(args) -> int:
    from scipy.special import gamma, kv

    from .kernels import KernelSpec, empirical_fourier_decay, fourier_decay_rate, matern_scaled

    z = np.linspace(1e-6, 20.0, 4001)
    ok = True
    print(f"{'nu':>4}  {'max|closed-bessel|':>18}  {'decay':>6}  {'expected':>8}")
    for nu in args.nu:
        spec = KernelSpec(nu)
        v = float(nu)
        bessel = 2 ** (1 - v) / gamma(v) * z**v * kv(v, z)
        err = float(np.max(np.abs(matern_scaled(spec, z) - bessel)))
        m_hat = empirical_fourier_decay(spec, args.grid)
        expected = float(fourier_decay_rate(spec))
        good = err <= 1e-10 and abs(m_hat - expected) <= 0.1
        ok &= good
        print(f"{str(nu):>4}  {err:18.3e}  {m_hat:6.3f}  {expected:8.3f}  {'ok' if good else 'FAIL'}")
    return EXIT_OK if ok else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kernbandit", description="Kernelised bandits under unknown regularity.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run an experiment sweep from a config file")
    sim.add_argument("config")
    sim.add_argument("--seed", type=int, default=None, help="override seed_base")
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--out", default=None, help="override output_dir")
    sim.add_argument("--plots", action="store_true", help="also render PNG figures next to the CSVs")
    sim.add_argument("--no-traces", action="store_true", help="write only the summary CSV")
    sim.set_defaults(func=cmd_simulate)

    rep = sub.add_parser("report", help="render PNG figures from a simulate output directory")
    rep.add_argument("dir")
    rep.add_argument("--max-traces", type=int, default=12)
    rep.set_defaults(func=cmd_report)

    adv = sub.add_parser("adversary", help="build or certify hard instances")
    adv_sub = adv.add_subparsers(dest="action", required=True)
    build = adv_sub.add_parser("build")
    build.add_argument("--m1", type=int, required=True)
    build.add_argument("--m2", type=int, required=True)
    build.add_argument("--L1", default="auto")
    build.add_argument("--L2", type=float, required=True)
    build.add_argument("--rtilde", type=float, required=True)
    build.add_argument("--grid", type=int, default=2**14)
    build.add_argument("--table-grid", type=int, default=257)
    build.add_argument("--T", type=int, default=0, help="also print the regret lower bound at this horizon")
    build.add_argument("--out", default=None)
    build.add_argument("--plots", action="store_true")
    build.add_argument("--seed", type=int, default=None, help=argparse.SUPPRESS)
    build.add_argument("--workers", type=int, default=1, help=argparse.SUPPRESS)
    build.set_defaults(func=cmd_adversary_build)
    cert = adv_sub.add_parser("certify")
    cert.add_argument("file")
    cert.add_argument("--grid", type=int, default=2**14)
    cert.set_defaults(func=cmd_adversary_certify)

    exp = sub.add_parser("exponents", help="print the regret exponents for a regularity triple")
    exp.add_argument("--nu1", type=_fraction, required=True)
    exp.add_argument("--nu2", type=_fraction, required=True)
    exp.add_argument("--nu-tilde", type=_fraction, default=None)
    exp.set_defaults(func=cmd_exponents)

    ker = sub.add_parser("kernels", help="kernel diagnostics")
    ker_sub = ker.add_subparsers(dest="action", required=True)
    chk = ker_sub.add_parser("check")
    chk.add_argument("--nu", type=_fraction, nargs="+",
                     default=[Fraction(1, 2), Fraction(3, 2), Fraction(5, 2), Fraction(7, 2)])
    chk.add_argument("--grid", type=int, default=2**16)
    chk.set_defaults(func=cmd_kernels_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConstraintViolation as exc:
        print(f"constraint violated: {exc}", file=sys.stderr)
        return exc.exit_code
    except KernBanditError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (np.linalg.LinAlgError, FloatingPointError, OverflowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
