"""Certification layer: worst-case risk scans, duality gaps, and the
least-favorable-prior export built from a finished solve."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .ftpl import GameConfig, IterateLog, run_ftpl
from .gsm import GsmGame, GsmProblem, gsm_risk_mc, make_grid_1d, make_grid_2d
from .regression import RegressionProblem, reg_risk_mc
from .rng import substream


def parallel_map(fn, items, threads: int | None = None) -> list:
    """Map with optional thread workers; results always in input order, so
    reductions are independent of the thread count."""
    items = list(items)
    if not threads or threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _risk_fn(problem):
    if isinstance(problem, GsmProblem):
        return lambda est, point, n, gen: gsm_risk_mc(est, point, problem, n, gen)
    if isinstance(problem, RegressionProblem):
        return lambda est, point, n, gen: reg_risk_mc(est, point, problem, n, gen)
    raise TypeError(f"unsupported problem type {type(problem).__name__}")


def eval_grid_for(problem, eval_grid_width: float) -> np.ndarray:
    if isinstance(problem, GsmProblem) and problem.reduced_dim == 2:
        return make_grid_2d(problem.B, eval_grid_width)
    return make_grid_1d(problem.B, eval_grid_width)


def scan_risks(estimator, problem, eval_grid_width: float, n_mc: int, seed: int,
               threads: int | None = None):
    """(grid, risks, stderrs) of the estimator at every evaluation grid point,
    each point on its own substream."""
    grid = eval_grid_for(problem, eval_grid_width)
    risk = _risk_fn(problem)

    def one(j):
        return risk(estimator, grid[j], n_mc, substream(seed, "eval-risk", j))

    pairs = parallel_map(one, range(grid.shape[0]), threads)
    risks = np.array([p[0] for p in pairs])
    errs = np.array([p[1] for p in pairs])
    return grid, risks, errs


def worst_case_scan(estimator, problem, eval_grid_width: float, n_mc: int, seed: int,
                    threads: int | None = None):
    """Max of the gridded MC risk: (risk, argmax point, stderr at the argmax).

    Estimators whose risk is constant in theta (attribute constant_risk) skip
    the Monte Carlo entirely and report the analytic value.
    """
    const = getattr(estimator, "constant_risk", None)
    if const is not None:
        grid = eval_grid_for(problem, eval_grid_width)
        return float(const), grid[0], 0.0
    grid, risks, errs = scan_risks(estimator, problem, eval_grid_width, n_mc, seed, threads)
    j = int(np.argmax(risks))
    return float(risks[j]), grid[j], float(errs[j])


def bayes_risk_of_prior(estimator, problem, grid, mass, n_mc: int, seed: int,
                        threads: int | None = None):
    """Integrated risk of the estimator under a grid prior: sum of per-point MC
    risks weighted by the prior masses. Returns (risk, stderr)."""
    mass = np.asarray(mass, dtype=float)
    risk = _risk_fn(problem)
    support = [j for j in range(grid.shape[0]) if mass[j] > 0]

    def one(j):
        return risk(estimator, grid[j], n_mc, substream(seed, "bayes-risk", j))

    pairs = parallel_map(one, support, threads)
    value = sum(mass[j] * p[0] for j, p in zip(support, pairs))
    var = sum((mass[j] * p[1]) ** 2 for j, p in zip(support, pairs))
    return float(value), float(math.sqrt(var))


@dataclass
class SolveReport:
    problem: dict
    config: dict
    grid: list
    prior_counts: list
    averaged_prior_mass: list
    worst_case_risk: float
    worst_case_stderr: float
    worst_case_argmax: list
    bayes_risk_avg_prior: float
    bayes_risk_stderr: float
    duality_gap: float
    eval_grid_width: float
    eval_mc: int
    eval_seed: int
    wall_time: float = field(default=0.0)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LfpRadial:
    """Radial least-favorable prior: masses over radii, summing to 1.

    As a density on the ambient space, p(theta) is proportional to
    ||theta||^(1-d) * mass(||theta||): the Jacobian factor spreads each radial
    atom uniformly over its sphere, leaving the radial marginal unchanged.
    """

    radii: np.ndarray
    masses: np.ndarray
    density_note: str = "p(theta) ∝ ||theta||^(1-d) · mass(||theta||)"

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        m = np.asarray(self.masses, dtype=float)
        if r.shape != m.shape:
            raise ValueError("radii and masses must have matching shapes")
        if np.any(m < -1e-15) or abs(m.sum() - 1.0) > 1e-9:
            raise ValueError("masses must be non-negative and sum to 1")
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "masses", m)


def lfp_export(grid, averaged_mass, problem) -> LfpRadial:
    if getattr(problem, "reduced_dim", 1) != 1:
        raise ValueError("radial LFP export applies to 1-D reduced games")
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    mass = np.asarray(averaged_mass, dtype=float)
    return LfpRadial(grid[:, 0], mass / mass.sum())


def averaged_estimator(game, log: IterateLog):
    return game.averaged(log)


def certify(game, log: IterateLog, cfg: GameConfig, eval_grid_width: float,
            eval_mc: int, eval_seed: int, threads: int | None = None) -> SolveReport:
    """Worst-case scan of the averaged estimator plus the Bayes risk of the
    best response to the pooled averaged prior; their difference is the
    duality gap certificate."""
    avg_est = game.averaged(log)
    wc, argmax, wc_err = worst_case_scan(
        avg_est, game.problem, eval_grid_width, eval_mc, eval_seed, threads
    )
    pooled = log.prior_counts.sum(axis=0)
    responder = game.min_oracle(log.grid, pooled)
    mass = log.averaged_prior_mass()
    bayes, bayes_err = bayes_risk_of_prior(
        responder, game.problem, log.grid, mass, eval_mc, eval_seed, threads
    )
    return SolveReport(
        problem={k: v for k, v in vars(game.problem).items()},
        config=asdict(cfg),
        grid=log.grid.tolist(),
        prior_counts=log.prior_counts.tolist(),
        averaged_prior_mass=mass.tolist(),
        worst_case_risk=wc,
        worst_case_stderr=wc_err,
        worst_case_argmax=np.atleast_1d(argmax).tolist(),
        bayes_risk_avg_prior=bayes,
        bayes_risk_stderr=bayes_err,
        duality_gap=wc - bayes,
        eval_grid_width=eval_grid_width,
        eval_mc=eval_mc,
        eval_seed=eval_seed,
    )


def solve(game, cfg: GameConfig, eval_grid_width: float | None = None,
          eval_mc: int = 10_000, eval_seed: int | None = None,
          threads: int | None = None) -> tuple[SolveReport, IterateLog]:
    """Run the repeated game and certify the averaged estimator."""
    t0 = time.perf_counter()
    log = run_ftpl(game, cfg)
    report = certify(
        game, log, cfg,
        eval_grid_width=cfg.grid_width if eval_grid_width is None else eval_grid_width,
        eval_mc=eval_mc,
        eval_seed=cfg.seed if eval_seed is None else eval_seed,
        threads=threads,
    )
    report.wall_time = time.perf_counter() - t0
    return report, log
