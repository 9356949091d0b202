"""Expected matches of every policy across crowding levels.

    python3 scripts/welfare_sweep.py --beta 1.0 --reps 10 --out welfare.json
"""

import argparse
import json

from matchtu.evaluation import ComparisonConfig, PolicyKind, run_comparison
from matchtu.preferences import FactorizeConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--lambdas", type=float, nargs="+", default=[0.0, 0.25, 0.5, 0.75])
    ap.add_argument("--beta", type=float, default=1.0)
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--candidates", type=int, default=1000)
    ap.add_argument("--employers", type=int, default=500)
    ap.add_argument("--dim", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out")
    args = ap.parse_args()

    policies = list(PolicyKind)
    print(f"{'lambda':>6} " + " ".join(f"{p.value:>22}" for p in policies))
    docs = []
    for lam in args.lambdas:
        cfg = ComparisonConfig(
            num_candidates=args.candidates,
            num_employers=args.employers,
            lam=lam,
            beta=args.beta,
            seed=args.seed,
            factorize=FactorizeConfig(dim=args.dim),
        )
        report = run_comparison(cfg, policies, args.reps)
        cells = []
        for p in policies:
            r = report.per_policy[p.value]
            err = f"{r.stderr:.2f}" if r.stderr is not None else "n/a"
            cells.append(f"{r.mean:>14.2f} +/- {err:>5}")
        print(f"{lam:>6.2f} " + " ".join(cells), flush=True)
        docs.append(report.to_dict())
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(docs, fh, indent=2)


if __name__ == "__main__":
    main()
