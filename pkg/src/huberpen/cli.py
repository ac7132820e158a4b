"""Command line harness: ``huberpen {gen,solve,oracle,sweep,check}``.

Exit codes: 0 success, 1 failed check, 2 usage or validation error,
3 numerical failure (divergence, oracle breakdown).
"""

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__, checks
from .errors import DivergenceError, DomainError, NumericalError
from .oracle import MAX_ENUMERATION_M, load_solution, rate_fit, save_solution, solve_constrained_exact
from .penalty import Halfspace, h_delta
from .problem import GeneratorSpec, dumps_problem, generate_problem, problem_from_dict
from .schedule import Schedule, validate
from .solver import SolverConfig, run, run_ensemble

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
FIGURE1_DELTAS = (0.25, 0.5, 1.0)


class UsageError(Exception):
    pass


def _sha256(data):
    return hashlib.sha256(data).hexdigest()


def _read_problem(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    return problem_from_dict(json.loads(raw.decode("utf-8"))), _sha256(raw)


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")


def _threads():
    env = os.environ.get("HUBER_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"HUBER_THREADS must be an integer, got {env!r}")
    return os.cpu_count() or 1


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return v


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _add_schedule_flags(ap):
    ap.add_argument("--g", type=float, default=0.25, help="gamma exponent")
    ap.add_argument("--d", type=float, default=0.75, help="delta exponent")
    ap.add_argument("--s", type=float, default=1.0, help="step exponent")
    ap.add_argument("--gamma0", type=float, default=1.0)
    ap.add_argument("--delta0", type=float, default=1.0)
    ap.add_argument("--step0", default="auto", help="initial step size, or 'auto' for 1/(2 L_f)")


def _schedule(args, p):
    step0 = 1.0 / (2.0 * p.L_f) if args.step0 == "auto" else float(args.step0)
    sch = Schedule(args.g, args.d, args.s, args.gamma0, args.delta0, step0)
    diags = validate(sch)
    errors = [d.message for d in diags if d.level == "error"]
    if errors:
        raise UsageError("invalid schedule: " + "; ".join(errors))
    for d in diags:
        if d.level == "warning":
            print(f"warning: {d.message}", file=sys.stderr)
    return sch


def _add_run_flags(ap):
    ap.add_argument("--iters", type=_positive_int, default=100_000)
    ap.add_argument("--seed", type=_seed, default=0)
    ap.add_argument("--grid", choices=("geometric", "arithmetic"), default="geometric")
    ap.add_argument("--record-every", type=_positive_int, default=1)
    ap.add_argument("--checkpoints", default="", help="comma-separated extra snapshot iterations")
    ap.add_argument("--init", default="witness", help="'witness', 'zeros' or comma-separated coordinates")


def _config(args, sch):
    init = args.init
    if init not in ("witness", "zeros"):
        init = np.array([float(v) for v in init.split(",")])
    ckpts = tuple(int(v) for v in args.checkpoints.split(",") if v.strip())
    return SolverConfig(
        schedule=sch, iterations=args.iters, seed=args.seed, record_every=args.record_every,
        grid=args.grid, checkpoints=ckpts, initial_point=init,
        store_iterates=getattr(args, "store_iterates", False),
    )


# -- gen ----------------------------------------------------------------------


def cmd_gen(args):
    if args.figure1:
        lines = ["x,delta,h"]
        hs = Halfspace(np.array([1.0]), 1.0)
        for delta in FIGURE1_DELTAS:
            for x in np.linspace(-0.5, 2.0, args.samples):
                lines.append(f"{float(x)!r},{delta!r},{h_delta(np.array([x]), hs, delta)!r}")
        _emit(args.out, "\n".join(lines) + "\n")
        return EXIT_OK
    if args.n is None or args.m is None:
        raise UsageError("gen needs --n and --m (or --figure1)")
    spec = GeneratorSpec(mu_min=args.mu_min, L_max=args.L_max, active_optimum=args.active_optimum,
                         violation=args.violation)
    p = generate_problem(args.n, args.m, args.seed, spec)
    _emit(args.out, dumps_problem(p))
    return EXIT_OK


def _emit(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


# -- solve --------------------------------------------------------------------


def _manifest(argv, problem_path, digest, sch, cfg, seeds, elapsed, extra=None):
    return {
        "command": list(argv),
        "problem": {"path": problem_path, "sha256": digest},
        "schedule": sch.to_dict(),
        "config": cfg.to_dict(),
        "seeds": list(seeds),
        "version": __version__,
        "wall_clock_seconds": elapsed,
        **(extra or {}),
    }


def _solve_args_from_manifest(path, args):
    with open(path, encoding="utf-8") as fh:
        man = json.load(fh)
    problem_path = args.problem or man["problem"]["path"]
    p, digest = _read_problem(problem_path)
    if digest != man["problem"]["sha256"]:
        raise UsageError(f"problem file {problem_path} does not match the manifest hash")
    c = man["config"]
    init = c["initial_point"]
    cfg = SolverConfig(
        schedule=Schedule(**man["schedule"]), iterations=c["iterations"], seed=c["seed"],
        record_every=c["record_every"], grid=c["grid"], ratio=c["ratio"],
        checkpoints=tuple(c["checkpoints"]), initial_point=init if isinstance(init, str) else np.array(init),
        store_iterates=c["store_iterates"], full_gradient=c["full_gradient"],
    )
    oracle = args.oracle or man.get("oracle")
    return p, problem_path, digest, cfg, oracle


def cmd_solve(args, argv):
    if args.from_manifest:
        p, problem_path, digest, cfg, oracle = _solve_args_from_manifest(args.from_manifest, args)
        sch = cfg.schedule
    else:
        if not args.problem:
            raise UsageError("solve needs --problem (or --from-manifest)")
        problem_path = args.problem
        p, digest = _read_problem(problem_path)
        sch = _schedule(args, p)
        cfg = _config(args, sch)
        oracle = args.oracle
    x_star = load_solution(oracle).x_star if oracle else None

    t0 = time.perf_counter()
    status = EXIT_OK
    try:
        trace = run(p, cfg, x_star)
    except DivergenceError as err:
        trace = err.trace
        status = EXIT_NUMERIC
        print(f"error: {err}", file=sys.stderr)
    elapsed = time.perf_counter() - t0

    trace.to_csv(args.out)
    if trace.iterates is not None:
        with open(args.out + ".iterates.csv", "w", encoding="utf-8") as fh:
            fh.write("k," + ",".join(f"x{j}" for j in range(p.n)) + "\n")
            for k, x in zip(trace.k, trace.iterates):
                fh.write(f"{int(k)}," + ",".join(repr(float(v)) for v in x) + "\n")
    man = _manifest(argv, problem_path, digest, sch, cfg, [cfg.seed], elapsed,
                    {"oracle": oracle, "trace": args.out, "failed_at": trace.failed_at})
    _write_json(args.manifest or args.out + ".manifest.json", man)
    if status == EXIT_OK and len(trace):
        print(f"k={int(trace.k[-1])} f={trace.f_value[-1]:.10g} dist_feasible={trace.dist_feasible[-1]:.3e}"
              f" (first snapshot {trace.dist_feasible[0]:.3e})")
    return status


# -- oracle -------------------------------------------------------------------


def cmd_oracle(args):
    p, _ = _read_problem(args.problem)
    if p.m > MAX_ENUMERATION_M:
        raise UsageError(f"oracle enumeration is limited to m <= {MAX_ENUMERATION_M}; problem has m={p.m}")
    sol = solve_constrained_exact(p, tol=args.tol)
    if args.out in (None, "-"):
        print(json.dumps(sol.to_dict(), indent=1))
    else:
        save_solution(sol, args.out)
    print(f"f*={sol.f_star:.12g} active={list(sol.active_set)} kkt={sol.kkt}", file=sys.stderr)
    return EXIT_OK


# -- sweep --------------------------------------------------------------------


def cmd_sweep(args, argv):
    p, digest = _read_problem(args.problem)
    if args.oracle:
        x_star = load_solution(args.oracle).x_star
    else:
        x_star = solve_constrained_exact(p).x_star
    sch = _schedule(args, p)
    cfg = _config(args, sch)
    workers = min(_threads(), args.seeds)
    t0 = time.perf_counter()
    try:
        ens = run_ensemble(p, cfg, args.seeds, x_star, workers=workers)
    except DivergenceError as err:
        print(f"error: every seed diverged ({err})", file=sys.stderr)
        return EXIT_NUMERIC
    elapsed = time.perf_counter() - t0
    if ens.failed_seeds:
        print(f"warning: seeds {ens.failed_seeds} diverged; aggregate uses the remaining "
              f"{args.seeds - len(ens.failed_seeds)}", file=sys.stderr)
    _emit(args.out, ens.to_csv())
    fit = rate_fit(ens.k, ens.mean_sq_err, args.k_min, args.k_max)
    print(f"slope {fit.slope:.4f} +- {fit.slope_stderr:.4f}  r^2 {fit.r_squared:.4f}  "
          f"points {fit.n_points}  k in [{args.k_min:g}, {args.k_max:g}]")
    if args.manifest:
        _write_json(args.manifest, _manifest(
            argv, args.problem, digest, sch, cfg, [cfg.seed + j for j in range(args.seeds)], elapsed,
            {"failed_seeds": ens.failed_seeds,
             "rate_fit": {"slope": fit.slope, "slope_stderr": fit.slope_stderr, "r_squared": fit.r_squared}},
        ))
    return EXIT_OK


# -- check --------------------------------------------------------------------

SUITES = ("penalty", "perturbation", "drift", "level", "gap")


def cmd_check(args):
    only = set(args.only.split(",")) if args.only else set(SUITES)
    unknown = only - set(SUITES)
    if unknown:
        raise UsageError(f"unknown suites {sorted(unknown)}; choose from {SUITES}")
    reports = []
    if "penalty" in only:
        reports.append(checks.penalty_suite(samples=args.samples))
    if "perturbation" in only:
        reports.append(checks.perturbation_suite())
    if only & {"drift", "level"}:
        drift, level = checks.drift_suite()
        reports += [r for name, r in (("drift", drift), ("level", level)) if name in only]
    if "gap" in only:
        reports.append(checks.gap_suite())
    out = {"passed": all(r.passed for r in reports), "suites": [r.to_dict() for r in reports]}
    if args.out:
        _write_json(args.out, out)
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}  ({len(r.rows)} rows)")
        for row in r.rows:
            if row["ok"] is False:
                print("   ", json.dumps(row))
    return EXIT_OK if out["passed"] else EXIT_CHECK


# -- entry point --------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="huberpen", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random problem file")
    g.add_argument("--n", type=_positive_int)
    g.add_argument("--m", type=_positive_int)
    g.add_argument("--seed", type=_seed, default=0)
    g.add_argument("--active-optimum", action="store_true",
                   help="make the unconstrained minimizer infeasible")
    g.add_argument("--mu-min", type=float, default=GeneratorSpec.mu_min)
    g.add_argument("--L-max", type=float, default=GeneratorSpec.L_max)
    g.add_argument("--violation", type=float, default=GeneratorSpec.violation)
    g.add_argument("--figure1", action="store_true", help="emit (x, delta, h) samples of the 1-d penalty")
    g.add_argument("--samples", type=_positive_int, default=101)
    g.add_argument("--out", default="-")

    s = sub.add_parser("solve", help="run the incremental method and write a trace CSV")
    s.add_argument("--problem")
    s.add_argument("--oracle", help="oracle JSON for squared error to x*")
    s.add_argument("--out", required=True)
    s.add_argument("--manifest", help="manifest path (default: OUT.manifest.json)")
    s.add_argument("--from-manifest", help="rerun exactly as recorded in a manifest")
    s.add_argument("--store-iterates", action="store_true")
    _add_schedule_flags(s)
    _add_run_flags(s)

    o = sub.add_parser("oracle", help="exact solution by active-set enumeration")
    o.add_argument("--problem", required=True)
    o.add_argument("--out", default="-")
    o.add_argument("--tol", type=float, default=1e-10)

    w = sub.add_parser("sweep", help="seed ensemble, aggregate CSV and rate fit")
    w.add_argument("--problem", required=True)
    w.add_argument("--oracle")
    w.add_argument("--seeds", type=_positive_int, default=30)
    w.add_argument("--k-min", type=float, default=1e3)
    w.add_argument("--k-max", type=float, default=1e5)
    w.add_argument("--out", default="-")
    w.add_argument("--manifest")
    _add_schedule_flags(w)
    _add_run_flags(w)

    c = sub.add_parser("check", help="run the lemma check suites")
    c.add_argument("--only", help=f"comma-separated subset of {','.join(SUITES)}")
    c.add_argument("--samples", type=_positive_int, default=10_000)
    c.add_argument("--out", help="JSON report path")
    return ap


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        if args.command == "gen":
            return cmd_gen(args)
        if args.command == "solve":
            return cmd_solve(args, argv)
        if args.command == "oracle":
            return cmd_oracle(args)
        if args.command == "sweep":
            return cmd_sweep(args, argv)
        return cmd_check(args)
    except (UsageError, DomainError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
