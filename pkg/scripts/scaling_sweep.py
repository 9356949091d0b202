"""Time and memory scaling of both solver modes, with fitted log-log slopes.

    python3 scripts/scaling_sweep.py --sizes 1000 10000 --dims 25 50 100 --out-dir results/
"""

import argparse
from pathlib import Path

from matchtu.bench import BenchConfig, BenchRefused, bench_sweep, emit_report, loglog_slope


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 1000, 10000])
    ap.add_argument("--dims", type=int, nargs="+", default=[50])
    ap.add_argument("--batch-size", type=int, default=100)
    ap.add_argument("--iters", type=int, default=5)
    ap.add_argument("--warmup", type=int, default=1)
    ap.add_argument("--modes", nargs="+", default=["minibatch", "batch"], choices=["minibatch", "batch"])
    ap.add_argument("--out-dir", type=Path)
    args = ap.parse_args()

    for mode in args.modes:
        cfg = BenchConfig(
            sizes=tuple(args.sizes),
            batch_sizes=(args.batch_size,),
            factor_dims=tuple(args.dims),
            iters=args.iters,
            warmup=args.warmup,
            mode=mode,
        )
        try:
            records = bench_sweep(cfg)
        except BenchRefused as exc:
            print(f"{mode}: refused: {exc}")
            continue
        for r in records:
            print(f"{mode:>9} size={r.size:>6} D={r.factor_dim:>3}: {r.mean_time_per_iter:9.5f} s/iter  {r.peak_solver_bytes} B", flush=True)
        for d in args.dims:
            rows = [r for r in records if r.factor_dim == d]
            if len(rows) > 1:
                sizes = [r.size for r in rows]
                print(
                    f"{mode:>9} D={d}: time slope {loglog_slope(sizes, [r.mean_time_per_iter for r in rows]):.2f}, "
                    f"memory slope {loglog_slope(sizes, [r.peak_solver_bytes for r in rows]):.2f}"
                )
        if args.out_dir:
            args.out_dir.mkdir(parents=True, exist_ok=True)
            emit_report(records, args.out_dir / f"{mode}.json")


if __name__ == "__main__":
    main()
