"""Seed-averaged forgetting comparison of the built-in strategies.

Runs every strategy on the reference split-blob benchmark over five seeds
and writes the summary that the acceptance suite treats as its golden
expectation.

    python scripts/forgetting_ordering.py --out tests/golden/forgetting_ordering.json
"""
import argparse
import json
import time
from pathlib import Path

from clengine.experiments import forgetting_ordering


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--out", type=Path, default=Path("tests/golden/forgetting_ordering.json"))
    args = ap.parse_args()

    t0 = time.perf_counter()
    res = forgetting_ordering(seeds=range(args.seeds))
    secs = time.perf_counter() - t0
    for name, r in res.items():
        print(f"{name:<11} retention(exp0)={r['retention_exp0']:.4f}  final stream acc={r['final_stream_accuracy']:.4f}")
    print(f"{secs:.1f}s")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps({"seeds": list(range(args.seeds)), "results": res}, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
