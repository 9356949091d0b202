"""Command-line entry point: ``matchtu {generate,factorize,solve,evaluate,bench}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io
from .bench import BenchConfig, BenchRefused, bench_sweep, emit_report
from .evaluation import ComparisonConfig, PolicyKind, run_comparison
from .ipfp import NonFiniteKernelError, solve_batch, solve_minibatch
from .market import DensePreferences, FactorizedPreferences, MarketShape, SolverConfig, uniform_mass
from .preferences import (
    GENERATOR_NAME,
    CrowdingConfig,
    FactorizeConfig,
    factorize_implicit,
    generate_preferences,
    sample_observations,
)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_REFUSED = 2
EXIT_INVALID = 3


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(float(tok)) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _policies(text: str) -> list[PolicyKind]:
    try:
        return [PolicyKind(tok.strip()) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"{exc}; choose from {[p.value for p in PolicyKind]}") from None


def cmd_generate(args) -> int:
    shape = MarketShape(args.candidates, args.employers)
    prefs = generate_preferences(CrowdingConfig(args.lam, args.seed, shape))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_mtu(out / "P.mtu", prefs.P)
    io.write_mtu(out / "Q.mtu", prefs.Q)
    io.save_mass(out / "mass.json", uniform_mass(shape, args.mass_total))
    manifest = {
        "seed": args.seed,
        "lambda": args.lam,
        "shape": [shape.num_candidates, shape.num_employers],
        "generator": GENERATOR_NAME,
        "mass_total": args.mass_total,
    }
    if args.obs_seed is not None:
        obs = sample_observations(prefs, args.obs_seed)
        io.write_mtu(out / "O_p.mtu", obs.O_p)
        io.write_mtu(out / "O_q.mtu", obs.O_q)
        manifest["obs_seed"] = args.obs_seed
    io.write_json(out / "manifest.json", manifest)
    return EXIT_OK


def cmd_factorize(args) -> int:
    cfg = FactorizeConfig(args.dim, args.reg, args.alpha, args.iters, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    F, G = factorize_implicit(io.read_matrix(args.obs), cfg)
    io.write_mtu(out / "F.mtu", F)
    io.write_mtu(out / "G.mtu", G)
    if args.obs_q:
        K, L = factorize_implicit(io.read_matrix(args.obs_q), FactorizeConfig(args.dim, args.reg, args.alpha, args.iters, args.seed + 1))
        io.write_mtu(out / "K.mtu", K)
        io.write_mtu(out / "L.mtu", L)
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = SolverConfig(beta=args.beta, max_iters=args.iters, residual_tol=args.tol, batch_size=args.batch_size)
    if args.factors:
        d = Path(args.factors)
        prefs = FactorizedPreferences(*(io.read_matrix(d / f"{name}.mtu") for name in "FKGL"))
    elif args.P and args.Q:
        prefs = DensePreferences(io.read_matrix(args.P), io.read_matrix(args.Q))
    else:
        print("solve: give --factors DIR or both --P and --Q", file=sys.stderr)
        return EXIT_INVALID
    mass = io.load_mass(args.mass) if args.mass else uniform_mass(prefs.shape, 1.0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.mode == "minibatch":
        if not isinstance(prefs, FactorizedPreferences):
            print("solve: minibatch mode needs --factors", file=sys.stderr)
            return EXIT_INVALID
        pattern, state, diag = solve_minibatch(prefs, mass, cfg)
        io.save_factorized_mu(out, pattern)
    else:
        pattern, state, diag = solve_batch(prefs, mass, cfg)
        io.save_dense_mu(out, pattern)
    io.save_state(out / "state.json", state)
    print(json.dumps({"iters": diag.iters_run, "residual": state.final_residual, "converged": diag.converged}))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = ComparisonConfig(
        num_candidates=args.candidates,
        num_employers=args.employers,
        lam=args.lam,
        beta=args.beta,
        exam=args.exam,
        seed=args.seed,
        solver_iters=args.iters,
        batch_size=args.batch_size,
        factorize=FactorizeConfig(dim=args.dim),
    )
    report = run_comparison(cfg, args.policies, args.reps)
    doc = report.to_dict()
    if args.out:
        io.write_json(args.out, doc)
    for name, r in doc["policies"].items():
        err = "n/a" if r["stderr"] is None else f"{r['stderr']:.4f}"
        print(f"{name:>14}: {r['mean']:.4f} +/- {err}")
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        cfg = BenchConfig(
            sizes=args.sizes,
            batch_sizes=args.batch_size,
            factor_dims=args.dim,
            iters=args.iters,
            beta=args.beta,
            seed=args.seed,
            mode=args.mode,
            warmup=args.warmup,
            memory_budget=int(args.memory_budget_gib * 1024**3),
            allow_large=args.allow_large,
        )
    except ValueError as exc:
        print(f"bench: invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        records = bench_sweep(cfg)
    except BenchRefused as exc:
        print(f"bench: refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    emit_report(records, args.out, args.format)
    for r in records:
        mem = "unmeasured" if r.peak_solver_bytes is None else f"{r.peak_solver_bytes} B"
        print(f"{r.mode} size={r.size} B={r.batch_size} D={r.factor_dim}: {r.mean_time_per_iter:.5f} s/iter, peak {mem}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="matchtu", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthetic crowded market")
    g.add_argument("--candidates", type=int, default=1000)
    g.add_argument("--employers", type=int, default=500)
    g.add_argument("--lambda", dest="lam", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--mass-total", type=float, default=1.0)
    g.add_argument("--obs-seed", type=int, default=None, help="also sample Bernoulli observations O_p, O_q")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("factorize", help="implicit ALS on an observation matrix")
    f.add_argument("--obs", required=True, help="candidate-side observations (MTU1 or CSV)")
    f.add_argument("--obs-q", help="employer-side observations, candidate-major")
    f.add_argument("--dim", type=int, default=8)
    f.add_argument("--reg", type=float, default=0.1)
    f.add_argument("--alpha", type=float, default=1.0)
    f.add_argument("--iters", type=int, default=10)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_factorize)

    s = sub.add_parser("solve", help="batch or mini-batch IPFP")
    s.add_argument("--mode", choices=["batch", "minibatch"], default="batch")
    s.add_argument("--P")
    s.add_argument("--Q")
    s.add_argument("--factors", help="directory holding F.mtu K.mtu G.mtu L.mtu")
    s.add_argument("--mass", help="mass.json; uniform with C=1 when omitted")
    s.add_argument("--beta", type=float, default=1.0)
    s.add_argument("--iters", type=int, default=100)
    s.add_argument("--tol", type=float, default=0.0)
    s.add_argument("--batch-size", type=int, default=100)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("evaluate", help="expected-match comparison of policies")
    e.add_argument("--policies", type=_policies, default=_policies("naive,reciprocal,cross_ratio,tu_batch,tu_minibatch"))
    e.add_argument("--lambda", dest="lam", type=float, default=0.0)
    e.add_argument("--candidates", type=int, default=1000)
    e.add_argument("--employers", type=int, default=500)
    e.add_argument("--reps", type=int, default=10)
    e.add_argument("--beta", type=float, default=1.0)
    e.add_argument("--exam", default="exp")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--dim", type=int, default=8, help="iALS factor dimension")
    e.add_argument("--iters", type=int, default=100, help="IPFP iterations")
    e.add_argument("--batch-size", type=int, default=100)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("bench", help="time/memory scaling sweep")
    b.add_argument("--mode", choices=["batch", "minibatch"], default="minibatch")
    b.add_argument("--sizes", type=_int_list, required=True)
    b.add_argument("--batch-size", type=_int_list, default=(100,))
    b.add_argument("--dim", type=_int_list, default=(50,))
    b.add_argument("--beta", type=float, default=1.0)
    b.add_argument("--iters", type=int, default=100)
    b.add_argument("--warmup", type=int, default=3)
    b.add_argument("--seed", type=int, default=42)
    b.add_argument("--memory-budget-gib", type=float, default=8.0)
    b.add_argument("--allow-large", action="store_true")
    b.add_argument("--format", choices=["json", "csv"], default="json")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, TypeError, NonFiniteKernelError) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (MemoryError, OSError, RuntimeError) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
