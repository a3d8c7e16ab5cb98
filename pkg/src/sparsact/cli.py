"""Command-line front end.

Commands: ``gen``, ``actuator``, ``complete``, ``sensor``, ``greedy`` and
``bench``. Results are CSV/JSON files in ``--out`` (default ``.``).

Exit codes: 0 success, 1 input error, 2 solver did not converge,
3 internal error. ``SPARSACT_LOG`` (error, info, debug) sets the log level.
"""

from __future__ import annotations

import argparse
import logging
import os
import statistics
import sys
import time

import numpy as np

from . import io as sio
from .exceptions import InputError, NotObservable, SingularOperator, SparsactError
from .mm import OUTER_CSV_COLUMNS, MmOptions, mm_solve
from .pg import ITERATION_CSV_COLUMNS, PgOptions, Status, pg_solve
from .problems import ShParams, random_stable_model, swift_hohenberg, synthetic_completion
from .selection import (
    GREEDY_CSV_COLUMNS,
    SWEEP_CSV_COLUMNS,
    gamma_sweep,
    greedy_select,
    observer_from_dual,
    sensor_dual,
)

log = logging.getLogger("sparsact")

EXIT_OK, EXIT_INPUT, EXIT_NOCONV, EXIT_INTERNAL = 0, 1, 2, 3

SINGULAR_HINT = (
    "the Lyapunov operator of A is singular (A has eigenvalues l, m with "
    "l + conj(m) = 0). Re-centre the problem around a stabilizing gain K0: "
    "replace A by A - B K0 and keep K0 as an always-active part of the design."
)


def parse_gamma_grid(text: str) -> np.ndarray:
    """``LO:HI:COUNT`` -> ``COUNT`` log-spaced values from ``LO`` to ``HI``."""
    try:
        lo, hi, count = text.split(":")
        lo, hi, count = float(lo), float(hi), int(count)
    except ValueError:
        raise InputError(f"--gamma-grid: expected LO:HI:COUNT, got {text!r}") from None
    if not (0 < lo <= hi) or count < 1:
        raise InputError("--gamma-grid: need 0 < LO <= HI and COUNT >= 1")
    return np.logspace(np.log10(lo), np.log10(hi), count)


def _gammas(args) -> np.ndarray:
    if args.gamma_grid is not None and args.gamma is not None:
        raise InputError("use either --gamma or --gamma-grid, not both")
    if args.gamma_grid is not None:
        return parse_gamma_grid(args.gamma_grid)
    g = 0.0 if args.gamma is None else args.gamma
    if g < 0:
        raise InputError("--gamma must be nonnegative")
    return np.array([g])


def _out(args, name: str) -> str:
    return os.path.join(args.out, name)


def _pg_options(args) -> PgOptions:
    try:
        return PgOptions(eps=args.eps, max_iters=args.max_iters)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _load(args, kind: str):
    prob = sio.load_problem(args.problem)
    if prob.kind != kind:
        raise InputError(f"field 'kind': expected {kind!r}, got {prob.kind!r}")
    return prob


def _run_sweep(model, args, tag: str = ""):
    results = gamma_sweep(
        model, _gammas(args), _pg_options(args), reweight_steps=args.reweight, jobs=args.jobs
    )
    sio.write_csv(_out(args, f"{tag}sweep.csv"), SWEEP_CSV_COLUMNS, [r.csv_row() for r in results])
    for i, r in enumerate(results):
        sio.write_csv(_out(args, f"{tag}iterations_{i:03d}.csv"), ITERATION_CSV_COLUMNS, r.history)
    ok = all(r.status == Status.CONVERGED.value for r in results)
    for r in results:
        print(f"gamma={r.gamma:.6g} actuators={r.nnz_rows} degradation={r.degradation_pct:.4f}% "
              f"status={r.status}")
    return results, ok


def cmd_gen(args) -> int:
    kind = args.kind
    if kind == "swift-hohenberg":
        model = swift_hohenberg(ShParams(n=args.n, c=args.c, alpha=args.alpha, omega=args.omega,
                                         r_scale=args.r_scale))
        mats = dict(A=model.A, B=model.B, C=model.C, V=model.V, Q=model.Q, R=model.R)
        doc_kind = "actuator"
    elif kind == "random":
        model = random_stable_model(args.seed, args.n, args.m or args.n, args.p)
        mats = dict(A=model.A, B=model.B, C=model.C, V=model.V, Q=model.Q, R=model.R)
        doc_kind = "actuator"
    elif kind == "completion":
        inst = synthetic_completion(args.seed, args.n, args.mask, p=args.p)
        mdl = inst.model
        mats = dict(A=mdl.A, B=mdl.B, C=mdl.C, V=mdl.V, Q=mdl.Q, R=mdl.R,
                    E=inst.data.E, G=inst.data.G)
        doc_kind = "completion"
    else:  # sensor
        base = random_stable_model(args.seed, args.n, 1, args.p)
        p = base.p
        mats = dict(A=base.A, C=base.C, V=np.eye(args.n), R=np.eye(p))
        doc_kind = "sensor"
    text = sio.canonical_dumps(sio.problem_to_doc(doc_kind, mats))
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        sio.write_atomic(args.output, text)
    return EXIT_OK


def cmd_actuator(args) -> int:
    prob = _load(args, "actuator")
    _, ok = _run_sweep(prob.model, args)
    return EXIT_OK if ok else EXIT_NOCONV


def cmd_sensor(args) -> int:
    prob = _load(args, "sensor")
    M = prob.matrices
    try:
        model = sensor_dual(M["A"], M["C"], M["V"], M["R"])
    except NotObservable as exc:
        raise InputError(str(exc)) from exc
    results, ok = _run_sweep(model, args)
    gains = []
    for r in results:
        X, L = observer_from_dual(r.X, r.K)
        gains.append({"gamma": r.gamma, "sensors": list(r.support), "L": sio.encode_matrix(L)
                      if np.all(np.isfinite(L)) else None})
    sio.write_atomic(_out(args, "observer_gains.json"), sio.canonical_dumps({"results": gains}))
    return EXIT_OK if ok else EXIT_NOCONV


def cmd_complete(args) -> int:
    prob = _load(args, "completion")
    model, data = prob.model, prob.data
    gamma = _gammas(args)
    if gamma.size != 1:
        raise InputError("complete takes a single --gamma")
    gamma = float(gamma[0])
    if not np.any(data.E):
        log.warning("mask E is empty: solving the unconstrained problem by proximal gradient")
        rep = pg_solve(model, PgOptions(gamma=gamma, eps=args.eps_d, max_iters=args.max_iters))
        sio.write_csv(_out(args, "iterations.csv"), ITERATION_CSV_COLUMNS, rep.history)
        dpn = 0.0
    else:
        try:
            opts = MmOptions(gamma=gamma, eps_p=args.eps_p, eps_d=args.eps_d,
                             max_outer=args.max_outer,
                             inner=PgOptions(max_iters=args.max_iters))
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        rep = mm_solve(model, data, opts)
        sio.write_csv(_out(args, "outer_history.csv"), OUTER_CSV_COLUMNS, rep.history)
        dpn = rep.extra["delta_p_normalized"]
    sol = {
        "status": rep.status.value,
        "gamma": gamma,
        "delta_p_normalized": float(dpn),
        "X": sio.encode_matrix(rep.X),
        "Y": sio.encode_matrix(rep.Y),
        "K": sio.encode_matrix(rep.K),
    }
    sio.write_atomic(_out(args, "solution.json"), sio.canonical_dumps(sol))
    print(f"status={rep.status.value} delta_p/||G||={dpn:.3e} iterations={rep.iterations}")
    return EXIT_OK if rep.converged else EXIT_NOCONV


def cmd_greedy(args) -> int:
    prob = _load(args, "actuator")
    tr = greedy_select(prob.model, jobs=args.jobs)
    sio.write_csv(_out(args, "greedy.csv"), GREEDY_CSV_COLUMNS, tr.csv_rows())
    print(f"initial cost {tr.initial_cost:.10g}; removed {len(tr.removed)} of {tr.m}")
    return EXIT_OK


def cmd_bench(args) -> int:
    rows = []
    for n in args.sizes:
        model = random_stable_model(args.seed, n, n)
        model.lyap
        rep = pg_solve(model, PgOptions(gamma=args.gamma or 0.0, eps=args.eps,
                                        max_iters=args.max_iters), Y0=np.zeros((n, n)))
        per_iter = statistics.median(h["time"] for h in rep.history)
        rows.append({"n": n, "iters": rep.iterations, "median_iter_seconds": per_iter})
        print(f"n={n} iters={rep.iterations} median per-iteration {per_iter * 1e3:.3f} ms")
    sio.write_csv(_out(args, "bench.csv"), ("n", "iters", "median_iter_seconds"), rows)
    return EXIT_OK


def _common(p: argparse.ArgumentParser, completion: bool = False) -> None:
    p.add_argument("problem", help="problem JSON file")
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--gamma-grid", default=None, metavar="LO:HI:COUNT")
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--max-iters", type=int, default=10000)
    p.add_argument("--reweight", type=int, default=3, help="solves per gamma (reweighting rounds)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")
    if completion:
        p.add_argument("--eps-p", type=float, default=1e-2)
        p.add_argument("--eps-d", type=float, default=1e-2)
        p.add_argument("--max-outer", type=int, default=100)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsact", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a problem file")
    g.add_argument("kind", choices=["swift-hohenberg", "random", "completion", "sensor"])
    g.add_argument("--n", type=int, default=32)
    g.add_argument("--m", type=int, default=None)
    g.add_argument("--p", type=int, default=None)
    g.add_argument("--c", type=float, default=ShParams.c)
    g.add_argument("--alpha", type=float, default=ShParams.alpha)
    g.add_argument("--omega", type=float, default=ShParams.omega)
    g.add_argument("--r-scale", type=float, default=ShParams.r_scale)
    g.add_argument("--mask", choices=["diagonal", "full", "random_sym"], default="diagonal")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", dest="output", default=None, help="output file (default stdout)")
    g.set_defaults(func=cmd_gen)

    for name, func, help_ in (
        ("actuator", cmd_actuator, "sparsity-promoting actuator selection"),
        ("sensor", cmd_sensor, "sensor selection through the dual problem"),
        ("greedy", cmd_greedy, "greedy actuator removal baseline"),
    ):
        p = sub.add_parser(name, help=help_)
        _common(p)
        p.set_defaults(func=func)
    p = sub.add_parser("complete", help="covariance completion by the method of multipliers")
    _common(p, completion=True)
    p.set_defaults(func=cmd_complete)

    b = sub.add_parser("bench", help="per-iteration timing on random instances")
    b.add_argument("--sizes", type=lambda s: [int(v) for v in s.split(",")], default=[32, 64, 128])
    b.add_argument("--gamma", type=float, default=None)
    b.add_argument("--eps", type=float, default=1e-4)
    b.add_argument("--max-iters", type=int, default=50)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default=".")
    b.set_defaults(func=cmd_bench)
    return parser


def _configure_logging() -> None:
    level = os.environ.get("SPARSACT_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if hasattr(args, "out") and args.command != "gen":
            os.makedirs(args.out, exist_ok=True)
        return args.func(args)
    except SingularOperator as exc:
        print(f"error: {exc}\nhint: {SINGULAR_HINT}", file=sys.stderr)
        return EXIT_INPUT
    except (InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SparsactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
