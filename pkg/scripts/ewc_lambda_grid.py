"""One-off EWC lambda sweep on the reference benchmark.

The empirical Fisher of a converged model is small, so useful lambdas are
large; too large a lambda makes plain SGD on the quadratic penalty diverge.
Prints seed-averaged experience-0 retention per lambda.

    python scripts/ewc_lambda_grid.py --grid 0.1 1 10 100 1000 10000 100000
"""
import argparse

from clengine.experiments import reference_config, seed_average


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--grid", type=float, nargs="+", default=[0.1, 1, 10, 100, 1000, 10000, 100000])
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()

    naive = seed_average(reference_config("naive"), range(args.seeds))
    print(f"naive       retention={naive['retention_exp0']:.4f}")
    best = None
    for lam in args.grid:
        r = seed_average(reference_config("ewc", lam=lam), range(args.seeds))
        if r["diverged"]:
            print(f"lam={lam:<9g} diverged")
            continue
        print(f"lam={lam:<9g} retention={r['retention_exp0']:.4f}  final={r['final_stream_accuracy']:.4f}")
        if best is None or r["retention_exp0"] > best[1]:
            best = (lam, r["retention_exp0"])
    if best:
        print(f"best lambda {best[0]:g} (retention {best[1]:.4f})")


if __name__ == "__main__":
    main()
