#!/usr/bin/env python3
"""Solve the sequence game with loss on the first coordinate only (k=1), then
tabulate the first-coordinate estimate as a function of the observed first
coordinate and the norm of the remaining coordinates. The estimate shrinks
more as the nuisance norm grows, which a coordinate-wise rule cannot do.

Usage:
    python3 scripts/coordinate_loss_contour.py --dim 5 --iters 300 --out out/contour
"""

import argparse
import math
import os
import subprocess
import sys


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dim", type=int, default=5)
    ap.add_argument("--iters", type=int, default=300)
    ap.add_argument("--n1", type=int, default=1000)
    ap.add_argument("--n2", type=int, default=1000)
    ap.add_argument("--eval-mc", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=str, default="out/contour")
    args = ap.parse_args()

    solve_dir = os.path.join(args.out, "solve")
    cli = [sys.executable, "-m", "minimax_forge.cli"]
    subprocess.run(cli + [
        "solve", "gsm-k", "--dim", str(args.dim), "--k", "1",
        "--radius", "sqrt_d", "--iters", str(args.iters),
        "--n1", str(args.n1), "--n2", str(args.n2),
        "--eval-mc", str(args.eval_mc),
        "--seed", str(args.seed), "--out", solve_dir,
    ], check=True)
    span = 2 * math.sqrt(args.dim)
    subprocess.run(cli + [
        "contour", "--report", os.path.join(solve_dir, "report.json"),
        f"--x1=-{span}:{span}:41", f"--x2=0:{span}:21", "--out", args.out,
    ], check=True)
    print(f"contour data in {os.path.join(args.out, 'contour.csv')}")


if __name__ == "__main__":
    main()
