"""Command-line entry point.

Two invocation forms:

    qrev <experiment-config.toml> [--seed N] [--out DIR] [--threads N]
    qrev povm-check --family {gaussian|dichotomous|fluorescence} [options]

Exit codes: 0 success, 2 config error, 3 physics-invariant violation,
4 I/O error.  The default output directory is taken from --out, then the
config's `out` key, then $QREV_OUT, then the working directory.
"""

from __future__ import annotations

import argparse
import sys
import time

from .errors import ConfigError, PhysicsError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PHYSICS = 3
EXIT_IO = 4


def _povm_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qrev povm-check", description="POVM completeness check")
    p.add_argument(
        "--family",
        action="append",
        choices=["gaussian", "gaussian-momentum", "dichotomous", "fluorescence"],
        help="family to check; repeatable; default: all three",
    )
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.42)
    p.add_argument("--gamma1", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=0.2)
    p.add_argument("--gauss-half-width", type=float, default=None)
    p.add_argument("--gauss-points", type=int, default=4001)
    p.add_argument("--polar-radius", type=float, default=6.0)
    p.add_argument("--polar-radial", type=int, default=400)
    p.add_argument("--polar-angular", type=int, default=400)
    p.add_argument("--out", type=str, default=None)
    return p


def _run_povm_subcommand(argv: list[str]) -> int:
    from .experiments import fmt, povm_table, resolve_outdir

    args = _povm_parser().parse_args(argv)
    families = args.family or ["gaussian", "dichotomous", "fluorescence"]
    families = ["gaussian-position" if f == "gaussian" else f for f in families]
    params = {
        "delta": args.delta,
        "k": args.k,
        "tau": args.tau,
        "gamma": args.gamma,
        "gamma1": args.gamma1,
        "dt": args.dt,
        "gauss_points": args.gauss_points,
        "polar_radius": args.polar_radius,
        "polar_radial": args.polar_radial,
        "polar_angular": args.polar_angular,
    }
    if args.gauss_half_width is not None:
        params["gauss_half_width"] = args.gauss_half_width
    rows = povm_table(families, params)
    outdir = resolve_outdir(None, args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "povm_residuals.csv"
    with open(path, "w") as fh:
        fh.write("family,residual_forward,residual_reversed\n")
        for family, fres, rres in rows:
            fh.write(f"{family},{fmt(fres)},{fmt(rres)}\n")
    print(f"{'family':<20}{'residual_fwd':>16}{'residual_rev':>16}")
    for family, fres, rres in rows:
        print(f"{family:<20}{fres:>16.3e}{rres:>16.3e}")
    print(f"wrote {path}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        if argv and argv[0] == "povm-check":
            return _run_povm_subcommand(argv[1:])

        parser = argparse.ArgumentParser(
            prog="qrev", description="run a qrev experiment config"
        )
        parser.add_argument("config", help="experiment config (TOML) or 'povm-check'")
        parser.add_argument("--seed", type=int, default=None, help="override config seed")
        parser.add_argument("--out", type=str, default=None, help="output directory")
        parser.add_argument("--threads", type=int, default=1, help="ensemble workers")
        args = parser.parse_args(argv)

        from .experiments import load_config, run

        start = time.perf_counter()
        cfg = load_config(args.config)
        summary = run(cfg, out_override=args.out, seed_override=args.seed, workers=args.threads)
        print(f"{cfg.experiment}: ok ({time.perf_counter() - start:.2f}s); summary at {summary}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PhysicsError as exc:
        print(f"physics error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
