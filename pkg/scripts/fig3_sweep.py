#!/usr/bin/env python3
"""Modeled strong scaling of the stationary and general parallel algorithms
against a matmul baseline, for a 3-way cubical tensor with I = 2^45 and R = 2^15.

Writes the sweep CSV and prints where the two algorithms part ways, the
matmul/stationary ratio at P = 2^17 and the number of kinks in the matmul curve.
"""
import argparse
import sys

from mttkrp_comm.planner import MM_MODELS, count_kinks, fig3_spec, scaling_sweep, sweep_csv


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="fig3.csv")
    ap.add_argument("--mm-model", choices=sorted(MM_MODELS), default="carma")
    args = ap.parse_args(argv)

    spec = fig3_spec(args.out, args.mm_model)
    rows = scaling_sweep(spec)
    with open(args.out, "w") as fh:
        fh.write(sweep_csv(rows))

    print(f"{'log2 P':>6} {'alg3':>12} {'alg4':>12} {'matmul':>14} {'mm/alg3':>8}  grid4")
    for r in rows:
        ratio = r.mm_words / r.alg3_words if r.alg3_words else float("nan")
        print(f"{r.P.bit_length() - 1:>6} {r.alg3_words:>12} {r.alg4_words:>12} {r.mm_words:>14.0f} {ratio:>8.2f}  {r.grid4}")

    split = [r.P for r in rows if r.alg4_words < r.alg3_words]
    r17 = next(r for r in rows if r.P == 2**17)
    print()
    print(f"general beats stationary from P = 2^{split[0].bit_length() - 1}" if split else "curves never split")
    print(f"matmul / stationary at P = 2^17: {r17.mm_words / r17.alg3_words:.2f}")
    print(f"kinks in matmul curve: {count_kinks([r.P for r in rows], [r.mm_words for r in rows])}")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
