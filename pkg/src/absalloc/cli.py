"""Command-line entry point.

Subcommands::

    absalloc generate   --I 40 --J 4 --seed 0 --out scenario.json
    absalloc solve      --scenario scenario.json --scheme los
    absalloc baseline   --scenario scenario.json --scheme generalized
    absalloc sweep      --config sweep.json --out results.csv
    absalloc complexity --I 80 --J 5 --M 2 --L 80

Results go to stdout as JSON (or CSV for ``sweep``). Failures print a
JSON object ``{"error": ..., "message": ...}`` to stderr and exit with
status 1. A sweep that records failed rows exits with status 3.

Sweep config files are JSON objects whose keys are ``SweepSpec`` field
names (``J_values``, ``I``, ``mods``, ``schemes``, ``seeds``,
``first_seed``, ``tau``, ``L``, ``subcarrier_mode``, ``T``, ``sigma``,
``G``, ``multistart``, ``timing``, ``workers``, ``output``). Command-line
flags override file values.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields

from .experiments import (
    SweepSpec,
    assignment_to_list,
    generate_scenario,
    placement_to_list,
    rows_to_csv,
    run_sweep,
    scenario_from_dict,
    scenario_to_dict,
)
from .model import GLOBAL, LOS, SCHEMES, SUBCARRIER_MODES, ModelError
from .optimizer import AlternatingConfig, complexity_estimate, fixed_abs_baseline, run_alternating

EXIT_ERROR = 1
EXIT_SWEEP_FAILURES = 3


def _add_scenario_args(p: argparse.ArgumentParser, required_seed: bool) -> None:
    p.add_argument("--scenario", help="scenario JSON written by 'generate'")
    p.add_argument("--I", type=int, default=40, help="number of users")
    p.add_argument("--J", type=int, default=1, help="number of ABSs")
    p.add_argument("--M", type=int, default=2, help="modulation set {1..M}")
    p.add_argument("--L", type=int, default=None, help="subcarriers (default I)")
    p.add_argument("--tau", type=float, default=500e3, help="rate threshold in bit/s")
    p.add_argument("--mode", choices=SUBCARRIER_MODES, default=GLOBAL, help="subcarrier reuse mode")
    p.add_argument("--seed", type=int, required=required_seed, default=None,
                   help="user-layout seed (required unless --scenario is given)")


def _scenario(args):
    if args.scenario:
        with open(args.scenario, encoding="utf-8") as fh:
            return scenario_from_dict(json.load(fh))
    if args.seed is None:
        raise ModelError("either --scenario or --seed is required")
    return generate_scenario(args.I, args.seed, J=args.J, M=args.M, L=args.L, tau=args.tau,
                             subcarrier_mode=args.mode)


def _emit(obj, out=None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_generate(args) -> int:
    _emit(scenario_to_dict(_scenario(args)), args.out)
    return 0


def cmd_solve(args) -> int:
    sc = _scenario(args)
    cfg = AlternatingConfig(scheme=args.scheme, T=args.T, sigma=args.sigma, G=args.G,
                            seed=args.run_seed, multistart=args.multistart)
    res = run_alternating(sc, cfg)
    _emit({
        "scheme": args.scheme,
        "objective_w": res.objective,
        "placement": placement_to_list(res.placement),
        "assignment": assignment_to_list(res.assignment),
        "status": res.trace.status,
        "iterations": res.trace.iterations,
        "accepted_objectives": res.trace.accepted_objectives(),
    }, args.out)
    return 0


def cmd_baseline(args) -> int:
    sc = _scenario(args)
    res = fixed_abs_baseline(sc, args.scheme, altitude=args.altitude)
    _emit({
        "scheme": res.scheme,
        "feasible": res.feasible,
        "objective_w": res.objective,
        "placement": placement_to_list(res.placement),
        "assignment": assignment_to_list(res.assignment),
    }, args.out)
    return 0


def cmd_sweep(args) -> int:
    conf = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            conf = json.load(fh)
        known = {f.name for f in fields(SweepSpec)}
        unknown = sorted(set(conf) - known)
        if unknown:
            raise ModelError(f"unknown sweep config keys: {unknown}")
    for key in ("J_values", "I", "mods", "schemes", "seeds", "first_seed", "tau", "L", "T",
                "G", "multistart", "workers"):
        v = getattr(args, key)
        if v is not None:
            conf[key] = v
    if args.mode is not None:
        conf["subcarrier_mode"] = args.mode
    if args.timing:
        conf["timing"] = True
    if args.out is not None:
        conf["output"] = args.out
    spec = SweepSpec(**conf)
    progress = None
    if args.verbose:
        def progress(r):
            print(f"J={r.J} {r.scheme} mods={r.mods} seed={r.seed}: {r.status}", file=sys.stderr)
    rows = run_sweep(spec, progress)
    if not spec.output:
        sys.stdout.write(rows_to_csv(rows))
    failed = [r for r in rows if not r.ok]
    if failed:
        json.dump({"error": "SweepFailures", "failed_rows": len(failed), "rows": len(rows),
                   "first": failed[0].status}, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_SWEEP_FAILURES
    return 0


def cmd_complexity(args) -> int:
    rep = complexity_estimate(args.I, args.J, args.M, args.L, mu=args.mu, t=args.t, xi=args.xi)
    _emit({"inputs": {"I": args.I, "J": args.J, "M": args.M, "L": args.L, "mu": args.mu,
                      "t": args.t, "xi": args.xi}, "estimates": rep}, None)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="absalloc", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw a random scenario and write it as JSON")
    _add_scenario_args(p, required_seed=False)
    p.add_argument("--out", help="output file (default stdout)")
    p.set_defaults(func=cmd_generate)

    for name, func, helptext in (("solve", cmd_solve, "run the alternating optimizer"),
                                 ("baseline", cmd_baseline, "evaluate the fixed-grid baseline")):
        p = sub.add_parser(name, help=helptext)
        _add_scenario_args(p, required_seed=False)
        p.add_argument("--scheme", choices=SCHEMES, default=LOS)
        p.add_argument("--out", help="output file (default stdout)")
        if name == "solve":
            p.add_argument("--T", type=int, default=30, help="max outer iterations")
            p.add_argument("--sigma", type=float, default=1e-9, help="convergence threshold in W")
            p.add_argument("--G", type=int, default=100, help="Gaussian randomization samples")
            p.add_argument("--multistart", type=int, default=4, help="random starts for the NLP check")
            p.add_argument("--run-seed", type=int, default=0, help="seed of the randomized steps")
        else:
            p.add_argument("--altitude", type=float, default=550.0, help="grid altitude in m")
        p.set_defaults(func=func)

    p = sub.add_parser("sweep", help="run a parameter sweep and write CSV")
    p.add_argument("--config", help="JSON file with SweepSpec fields")
    p.add_argument("--J-values", dest="J_values", type=int, nargs="+")
    p.add_argument("--I", type=int)
    p.add_argument("--mods", type=int, nargs="+", help="M values; M means modulation set {1..M}")
    p.add_argument("--schemes", nargs="+", choices=SCHEMES)
    p.add_argument("--seeds", type=int, help="number of seeds")
    p.add_argument("--first-seed", dest="first_seed", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--L", type=int)
    p.add_argument("--mode", choices=SUBCARRIER_MODES)
    p.add_argument("--T", type=int)
    p.add_argument("--G", type=int)
    p.add_argument("--multistart", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--timing", action="store_true", help="record wall time (breaks byte-reproducibility)")
    p.add_argument("--out", help="CSV output file (default stdout)")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("complexity", help="iteration-count estimates of the subproblem solvers")
    p.add_argument("--I", type=int, required=True)
    p.add_argument("--J", type=int, required=True)
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--mu", type=float, default=1e-3, help="interior-point accuracy")
    p.add_argument("--t", type=float, default=1e-3, help="initial barrier parameter")
    p.add_argument("--xi", type=float, default=10.0, help="barrier growth factor")
    p.set_defaults(func=cmd_complexity)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ModelError, OSError, json.JSONDecodeError, RuntimeError, ArithmeticError) as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
