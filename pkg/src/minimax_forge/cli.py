"""Command-line surface: solve games, evaluate estimators and baselines, and
emit contour data for external plotting."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import re
import sys
from dataclasses import asdict, dataclass

import numpy as np

from . import gsm as gsm_mod
from . import regression as reg_mod
from .ftpl import GameConfig, IterateLog
from .gsm import GsmGame, GsmProblem
from .regression import RegressionGame, RegressionProblem, spot_check_fb
from .riskeval import (
    certify,
    lfp_export,
    scan_risks,
    solve,
    worst_case_scan,
)
from .rng import substream
from .special import NumericalError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


@dataclass(frozen=True)
class RunConfig:
    problem: str
    d: int
    n: int | None
    k: int | None
    B: float
    iters: int
    eta: float
    grid_width: float
    n1: int
    n2: int
    eval_grid_width: float
    eval_mc: int
    seed: int
    fast_fb: bool
    out_dir: str


def parse_radius(text: str, d: int) -> float:
    """Radius flags accept plain floats or symbolic multiples of sqrt(d),
    e.g. 'sqrt_d', '1.5_sqrt_d', '0.5_sqrt_d'."""
    text = text.strip()
    if text == "sqrt_d":
        return math.sqrt(d)
    m = re.fullmatch(r"([0-9]*\.?[0-9]+)_sqrt_d", text)
    if m:
        return float(m.group(1)) * math.sqrt(d)
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"cannot parse radius {text!r}") from None


def _threads(args) -> int | None:
    env = os.environ.get("MINIMAX_FORGE_THREADS")
    if env is not None:
        return int(env)
    return args.threads


def _build_problem(args):
    d = args.dim
    B = parse_radius(args.radius, d)
    if args.problem == "gsm":
        return GsmProblem(d, B)
    if args.problem == "gsm-k":
        return GsmProblem(d, B, k=args.k)
    if args.problem == "regression":
        if args.n is None:
            raise ValueError("regression requires --n")
        return RegressionProblem(args.n, d, B)
    raise ValueError(f"unknown problem {args.problem!r}")


def _build_game(problem, fast_fb: bool):
    if isinstance(problem, GsmProblem):
        return GsmGame(problem)
    return RegressionGame(problem, fb_method="sp2" if fast_fb else "imhof")


def _run_config(args, problem) -> RunConfig:
    B = problem.B
    iters = args.iters
    if args.eta is not None:
        eta = args.eta
    elif isinstance(problem, GsmProblem):
        eta = gsm_mod.default_eta(problem, iters)
    else:
        eta = reg_mod.default_eta(problem, iters)
    grid_width = args.grid_width if args.grid_width is not None else 0.05 * B
    eval_w = args.eval_grid_width if args.eval_grid_width is not None else 0.05 * B
    return RunConfig(
        problem=args.problem,
        d=problem.d,
        n=getattr(problem, "n", None),
        k=getattr(problem, "k", None),
        B=B,
        iters=iters,
        eta=eta,
        grid_width=grid_width,
        n1=args.n1,
        n2=args.n2,
        eval_grid_width=eval_w,
        eval_mc=args.eval_mc,
        seed=args.seed,
        fast_fb=bool(getattr(args, "fast", False)),
        out_dir=args.out,
    )


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in row])


def _write_report(path, rc: RunConfig, report) -> None:
    payload = {"run_config": asdict(rc), **report.to_dict()}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_solve(args) -> int:
    problem = _build_problem(args)
    rc = _run_config(args, problem)
    game = _build_game(problem, rc.fast_fb)
    cfg = GameConfig(
        dim_reduced=problem.reduced_dim,
        radius=rc.B,
        iters=rc.iters,
        eta=rc.eta,
        grid_width=rc.grid_width,
        n_risk=rc.n1,
        n_prior=rc.n2,
        seed=rc.seed,
    )
    report, log = solve(
        game, cfg,
        eval_grid_width=rc.eval_grid_width,
        eval_mc=rc.eval_mc,
        threads=_threads(args),
    )
    if rc.problem == "regression" and rc.fast_fb:
        # certify the fast path on a sample of the constants it produced
        theta = np.zeros(problem.d)
        theta[0] = rc.B
        Xs, Ys = reg_mod.generate_datasets(
            theta, problem.n, 100, substream(rc.seed, "fb-spot-datasets")
        )
        med = spot_check_fb(Xs, Ys, log.grid[:, 0], seed=rc.seed, fraction=0.01)
        print(f"saddlepoint spot-check: median relative log-constant error {med:.2e}")

    os.makedirs(rc.out_dir, exist_ok=True)
    _write_report(os.path.join(rc.out_dir, "report.json"), rc, report)
    mass = log.averaged_prior_mass()
    if problem.reduced_dim == 1:
        lfp = lfp_export(log.grid, mass, problem)
        _write_csv(
            os.path.join(rc.out_dir, "prior.csv"), ["radius", "mass"],
            [(float(r), float(m)) for r, m in zip(lfp.radii, lfp.masses)],
        )
    else:
        _write_csv(
            os.path.join(rc.out_dir, "prior.csv"), ["b1", "b2", "mass"],
            [(float(p[0]), float(p[1]), float(m)) for p, m in zip(log.grid, mass)],
        )
    with open(os.path.join(rc.out_dir, "iterates.jsonl"), "w") as fh:
        for t in range(log.iters):
            fh.write(json.dumps(
                {"iteration": t, "counts": log.prior_counts[t].tolist()}
            ) + "\n")
    print(
        f"worst-case risk {report.worst_case_risk:.4f} "
        f"(stderr {report.worst_case_stderr:.4f}) at {report.worst_case_argmax}; "
        f"duality gap {report.duality_gap:.4f}"
    )
    return EXIT_OK


_BASELINE_ALIASES = {
    "james-stein": "james_stein",
    "boundary-bayes": "boundary_bayes",
    "best-linear": "best_linear",
    "ridge-best": "ridge_best",
}


def _load_averaged(report_path):
    with open(report_path) as fh:
        payload = json.load(fh)
    rc = payload["run_config"]
    if rc["problem"] in ("gsm", "gsm-k"):
        problem = GsmProblem(rc["d"], rc["B"], k=rc["k"])
        game = GsmGame(problem)
    else:
        problem = RegressionProblem(rc["n"], rc["d"], rc["B"])
        game = RegressionGame(problem, fb_method="sp2" if rc["fast_fb"] else "imhof")
    grid = np.asarray(payload["grid"], dtype=float)
    counts = np.asarray(payload["prior_counts"], dtype=float)
    log = IterateLog(grid, counts, [], np.zeros((0, grid.shape[0])))
    return payload, problem, game.averaged(log)


def cmd_eval(args) -> int:
    if (args.baseline is None) == (args.report is None):
        raise ValueError("pass exactly one of --baseline or --report")
    if args.report is not None:
        payload, problem, estimator = _load_averaged(args.report)
        eval_w = args.eval_grid_width or payload["eval_grid_width"]
    else:
        problem = _build_problem(args)
        eval_w = args.eval_grid_width if args.eval_grid_width is not None else 0.05 * problem.B
        name = _BASELINE_ALIASES.get(args.baseline, args.baseline)
        if isinstance(problem, GsmProblem):
            estimator = gsm_mod.make_baseline(name, problem)
        else:
            estimator = reg_mod.make_baseline(name, problem, seed=args.seed)

    const = getattr(estimator, "constant_risk", None)
    if const is not None:
        grid, risks, errs = scan_risks(estimator, problem, eval_w, 2, args.seed)
        risks = np.full_like(risks, const)
        errs = np.zeros_like(errs)
    else:
        grid, risks, errs = scan_risks(
            estimator, problem, eval_w, args.eval_mc, args.seed, _threads(args)
        )
    j = int(np.argmax(risks))

    os.makedirs(args.out, exist_ok=True)
    cols = ["b1", "b2"] if grid.shape[1] == 2 else ["radius"]
    _write_csv(
        os.path.join(args.out, "eval.csv"),
        cols + ["risk", "stderr"],
        [tuple(float(v) for v in grid[i]) + (float(risks[i]), float(errs[i]))
         for i in range(grid.shape[0])],
    )
    print(
        f"worst-case risk {risks[j]:.4f} (stderr {errs[j]:.4f}) "
        f"at {grid[j].tolist()}"
    )
    return EXIT_OK


def _parse_axis(spec: str) -> np.ndarray:
    lo, hi, count = spec.split(":")
    count = int(count)
    if count < 1:
        raise ValueError("axis count must be >= 1")
    return np.linspace(float(lo), float(hi), count)


def cmd_contour(args) -> int:
    payload, problem, estimator = _load_averaged(args.report)
    if not isinstance(problem, GsmProblem) or problem.k != 1:
        raise ValueError("contours require a solve of the k=1 sequence game")
    d = problem.d
    span = problem.B + math.sqrt(d)
    x1 = _parse_axis(args.x1) if args.x1 else np.linspace(-span, span, 41)
    x2 = _parse_axis(args.x2) if args.x2 else np.linspace(0.0, span, 21)
    X = np.zeros((x1.size * x2.size, d))
    grid1, grid2 = np.meshgrid(x1, x2, indexing="ij")
    X[:, 0] = grid1.ravel()
    X[:, 1] = grid2.ravel()
    pred1 = estimator.predict(X)[:, 0].reshape(x1.size, x2.size)

    # soft shrinkage check: |theta_hat(1)| should not grow with the nuisance norm
    j = int(np.argmax(np.abs(x1)))
    slice_vals = np.abs(pred1[j])
    if np.any(np.diff(slice_vals) > 1e-6):
        print("warning: shrinkage is not monotone in the nuisance norm "
              f"at X(1)={x1[j]:.3g}", file=sys.stderr)

    os.makedirs(args.out, exist_ok=True)
    rows = []
    for i, a in enumerate(x1):
        for jj, b in enumerate(x2):
            rows.append((float(a), float(b), float(pred1[i, jj])))
    _write_csv(os.path.join(args.out, "contour.csv"),
               ["x1", "nuisance_norm", "estimate1"], rows)
    print(f"wrote {len(rows)} contour rows")
    return EXIT_OK


def _add_problem_flags(p, require_dim=True):
    p.add_argument("--dim", type=int, required=require_dim, help="ambient dimension d")
    p.add_argument("--n", type=int, default=None, help="regression sample size")
    p.add_argument("--k", type=int, default=None, help="loss coordinates (gsm-k)")
    p.add_argument("--radius", type=str, default="sqrt_d",
                   help="ball radius: float or sqrt_d / 1.5_sqrt_d forms")


def _add_common_flags(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", type=str, default="out")
    p.add_argument("--eval-grid-width", type=float, default=None)
    p.add_argument("--eval-mc", type=int, default=10_000)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minimax-forge",
        description="Solve min-max statistical games with perturbed-leader dynamics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="run the repeated game and certify the result")
    ps.add_argument("problem", choices=["gsm", "gsm-k", "regression"])
    _add_problem_flags(ps)
    ps.add_argument("--iters", type=int, default=500)
    ps.add_argument("--eta", type=float, default=None)
    ps.add_argument("--grid-width", type=float, default=None)
    ps.add_argument("--n1", type=int, default=1000)
    ps.add_argument("--n2", type=int, default=1000)
    ps.add_argument("--fast", action="store_true",
                    help="saddlepoint fast path for regression constants")
    _add_common_flags(ps)
    ps.set_defaults(fn=cmd_solve)

    pe = sub.add_parser("eval", help="worst-case scan of a baseline or stored solve")
    pe.add_argument("--baseline", type=str, default=None)
    pe.add_argument("--report", type=str, default=None)
    pe.add_argument("--problem", type=str, default="gsm",
                    choices=["gsm", "gsm-k", "regression"])
    _add_problem_flags(pe, require_dim=False)
    _add_common_flags(pe)
    pe.set_defaults(fn=cmd_eval)

    pc = sub.add_parser("contour", help="emit contour data from a k=1 solve")
    pc.add_argument("--report", type=str, required=True)
    pc.add_argument("--x1", type=str, default=None, help="axis spec lo:hi:count")
    pc.add_argument("--x2", type=str, default=None, help="axis spec lo:hi:count")
    pc.add_argument("--out", type=str, default="out")
    pc.set_defaults(fn=cmd_contour)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
