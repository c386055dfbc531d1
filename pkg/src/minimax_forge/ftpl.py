"""Follow-the-perturbed-leader engine for reduced statistical games.

The adversary plays FTPL over a finite grid covering the reduced parameter
domain; the estimator player best-responds with the game's Bayes oracle.
Risk estimates are cached in a matrix indexed by (iterate, grid point), so the
per-iteration cost of approximating the adversary's mixed strategy with
n_prior samples is one perturbation draw plus one argmax per sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import sample_exponential, substream
from .special import NumericalError


@dataclass(frozen=True)
class GameConfig:
    dim_reduced: int
    radius: float
    iters: int
    eta: float
    grid_width: float
    n_risk: int = 1000
    n_prior: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.dim_reduced not in (1, 2):
            raise ValueError("dim_reduced must be 1 or 2")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if not (0 < self.grid_width <= self.radius):
            raise ValueError("grid_width must lie in (0, radius]")
        if self.n_risk < 1 or self.n_prior < 1:
            raise ValueError("sample counts must be positive")


@dataclass
class IterateLog:
    """Per-iteration record of the repeated game.

    prior_counts[t] are the multiplicities of grid points among the n_prior
    samples approximating the adversary's distribution at iteration t;
    estimators[t] is the Bayes responder to that empirical prior.
    risk_matrix[i] caches the Monte Carlo risks of estimators[i] on the grid
    (rows exist for iterates 0..T-2; the last iterate is never maximized over).
    """

    grid: np.ndarray
    prior_counts: np.ndarray
    estimators: list = field(repr=False)
    risk_matrix: np.ndarray = field(repr=False)

    @property
    def iters(self) -> int:
        return self.prior_counts.shape[0]

    @property
    def n_prior(self) -> int:
        return int(self.prior_counts[0].sum())

    def averaged_prior_mass(self) -> np.ndarray:
        total = self.prior_counts.sum(axis=0).astype(float)
        return total / total.sum()

    def truncated(self, t: int) -> "IterateLog":
        """The log as it stood after the first t iterations."""
        if not (1 <= t <= self.iters):
            raise ValueError(f"t must be in [1, {self.iters}]")
        return IterateLog(
            self.grid,
            self.prior_counts[:t],
            self.estimators[:t],
            self.risk_matrix[: max(t - 1, 0)],
        )


def adversary_step(risk_matrix: np.ndarray, grid: np.ndarray, sigma: np.ndarray) -> int:
    """Argmax over grid of cumulative risk plus <sigma, b>; ties go to the
    smallest index."""
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[0] == 0:
        raise ValueError("grid is empty")
    cum = np.asarray(risk_matrix, dtype=float).sum(axis=0) if len(risk_matrix) else 0.0
    scores = cum + grid @ np.asarray(sigma, dtype=float)
    return int(np.argmax(scores))


def run_ftpl(game, cfg: GameConfig) -> IterateLog:
    """Algorithm loop: adversary samples n_prior perturbed leaders per round,
    estimator best-responds to the resulting empirical prior."""
    grid = game.grid(cfg)  # (G, dim_reduced)
    n_grid = grid.shape[0]
    counts = np.zeros((cfg.iters, n_grid), dtype=np.int64)
    estimators: list = []
    risk_rows: list[np.ndarray] = []
    cum_risk = np.zeros(n_grid)

    for t in range(cfg.iters):
        if t > 0:
            row = np.asarray(game.risk_row(estimators[-1], t - 1, grid, cfg), dtype=float)
            bad = ~np.isfinite(row)
            if np.any(bad):
                j = int(np.argmax(bad))
                raise NumericalError(
                    f"non-finite risk estimate for iterate {t - 1} at grid point "
                    f"{j} ({grid[j]})"
                )
            risk_rows.append(row)
            cum_risk = cum_risk + row

        gen = substream(cfg.seed, "ftpl-perturbation", t)
        sigma = sample_exponential(cfg.eta, gen, size=(cfg.n_prior, cfg.dim_reduced))
        scores = cum_risk[None, :] + sigma @ grid.T
        idx = np.argmax(scores, axis=1)  # ties resolve to the smallest index
        counts[t] = np.bincount(idx, minlength=n_grid)
        estimators.append(game.min_oracle(grid, counts[t]))

    risk_matrix = np.array(risk_rows) if risk_rows else np.zeros((0, n_grid))
    return IterateLog(grid, counts, estimators, risk_matrix)
