"""Run differentially private decision-support query experiments."""

__author__ = "dpds developers"

__all__ = ["parse_args", "main"]

import argparse
import sys

from .harness import ALGORITHMS, SWEEP_PARAMETERS, RunConfig, run_experiment, run_sweep
from .synth import KINDS, SynthSpec


def parse_args(argv=None):
    ap = argparse.ArgumentParser(prog="dpds", description=__doc__)
    ap.add_argument("--algorithm", choices=ALGORITHMS, default="probe")
    ap.add_argument("--query", metavar="PATH", help="JSON query configuration")
    ap.add_argument("--data", metavar="PATH", help="CSV data file")
    ap.add_argument("--synth", choices=KINDS, help="generate synthetic data instead")
    ap.add_argument("--synth-groups", type=int, default=10, metavar="N")
    ap.add_argument("--synth-days", type=int, default=5, metavar="N")
    ap.add_argument("--beta", type=float, default=0.05, metavar="R")
    ap.add_argument("--alpha", type=float, default=0.1, metavar="R")
    ap.add_argument("--eps-max", type=float, default=5.0, metavar="R")
    ap.add_argument("--u-frac", type=float, default=0.12, metavar="R",
                    help="shift fraction of the naive baseline")
    ap.add_argument("--phase1-u-frac", type=float, default=0.3, metavar="R")
    ap.add_argument("--phase-split", type=float, default=0.5, metavar="R")
    ap.add_argument("--u0-frac", type=float, default=0.3, metavar="R")
    ap.add_argument("--m", type=int, default=4, metavar="N")
    ap.add_argument("--mf", type=int, default=3, metavar="N")
    ap.add_argument("--trials", type=int, default=100, metavar="N")
    ap.add_argument("--seed", type=int, default=0, metavar="N")
    ap.add_argument("--z", type=float, metavar="R",
                    help="z-score thresholds computed from the data (not private)")
    ap.add_argument("--no-skip", action="store_true",
                    help="execute both sides of empty conjunctions")
    ap.add_argument("--minimize", choices=("sop", "pos", "auto"), default="sop")
    ap.add_argument("--jobs", type=int, default=1, metavar="N")
    ap.add_argument("--sweep", choices=SWEEP_PARAMETERS, metavar="PARAM",
                    help="sweep one parameter over --values")
    ap.add_argument("--values", type=float, nargs="+", metavar="R")
    ap.add_argument("--out", metavar="PATH", help="results CSV")
    ap.add_argument("--quiet", action="store_true", help="do not print the summary")
    return ap.parse_args(argv)


def _config(args):
    synth = None
    if args.synth is not None:
        synth = SynthSpec(args.synth, groups=args.synth_groups, days=args.synth_days)
    return RunConfig(
        algorithm=args.algorithm,
        beta=args.beta,
        alpha=args.alpha,
        epsilon_max=args.eps_max,
        u_fraction=args.u_frac,
        phase1_u_fraction=args.phase1_u_frac,
        phase_split=args.phase_split,
        m=args.m,
        m_f=args.mf,
        u0_fraction=args.u0_frac,
        trials=args.trials,
        seed=args.seed,
        query=args.query,
        data=args.data,
        out=args.out,
        z=args.z,
        synth=synth,
        skip_conjunctions=not args.no_skip,
        minimize=args.minimize,
        n_jobs=args.jobs,
        summary=not args.quiet and args.sweep is None,
    )


def main(argv=None):
    args = parse_args(argv)
    try:
        config = _config(args)
        if args.sweep is not None:
            if not args.values:
                raise ValueError("--sweep needs --values.")
            values = args.values
            if args.sweep in ("m", "m_f"):
                values = [int(v) for v in values]
            sweep = run_sweep(config, args.sweep, values)
            if not args.quiet:
                print(sweep.to_string(index=False))
        else:
            run_experiment(config)
    except (ValueError, OSError) as e:
        print("dpds: error: %s" % e, file=sys.stderr)
        return 2
    if args.out:
        print("results written to %s" % args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
