"""Gaussian sequence model: X ~ N(theta, I_d) with ||theta|| <= B.

Rotation invariance reduces the adversary's move to the radius ||theta||
(or to the pair of block radii when the loss only charges the first k
coordinates), so priors live on a 1-D or 2-D grid. The Bayes responder to a
grid prior has a closed form through Bessel-ratio shrinkage toward the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import substream
from .special import bessel_ratio, log_bessel_i_over_xpow

_PREDICT_CHUNK = 10_000


@dataclass(frozen=True)
class GsmProblem:
    d: int
    B: float
    k: int | None = None

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be at least 2")
        if self.B <= 0:
            raise ValueError("B must be positive")
        k = self.d if self.k is None else self.k
        if not (1 <= k <= self.d):
            raise ValueError("k must lie in [1, d]")
        if k < self.d and self.d - k < 1:
            raise ValueError("invalid block split")
        object.__setattr__(self, "k", k)

    @property
    def reduced_dim(self) -> int:
        return 1 if self.k == self.d else 2

    def theta_from_point(self, point) -> np.ndarray:
        """Embed a reduced grid point as a canonical mean vector."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        theta = np.zeros(self.d)
        if self.reduced_dim == 1:
            theta[0] = point[0]
        else:
            theta[0] = point[0]
            theta[self.k] = point[1]
        return theta


def make_grid_1d(radius: float, width: float) -> np.ndarray:
    """Radii j*width on [0, radius], endpoints included. Shape (G, 1)."""
    n = int(math.floor(radius / width + 1e-9))
    pts = np.arange(n + 1) * width
    if pts[-1] < radius - 1e-9 * radius:
        pts = np.append(pts, radius)
    else:
        pts[-1] = min(pts[-1], radius)
    return pts[:, None]


def make_grid_2d(radius: float, width: float) -> np.ndarray:
    """Lattice (i*width, j*width) inside the quarter disc of the given radius,
    with the pure-axis extremes (radius, 0) and (0, radius) always present."""
    n = int(math.floor(radius / width + 1e-9))
    ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    pts = np.stack([ii.ravel(), jj.ravel()], axis=1) * width
    keep = np.einsum("ij,ij->i", pts, pts) <= radius**2 * (1 + 1e-12)
    pts = pts[keep]
    for extreme in ((radius, 0.0), (0.0, radius)):
        if not np.any(np.all(np.isclose(pts, extreme, atol=1e-9), axis=1)):
            pts = np.vstack([pts, extreme])
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    return pts[order]


def _ratio_with_fallback(num, den, log_w, counts, profile_at):
    """num/den columnwise, replacing 0/0 columns by the dominant-term limit.

    When every weight in a column underflows against the row maximum, the
    posterior is effectively a point mass at the supported grid index with the
    largest log weight; profile_at(row, j) supplies that limit.
    """
    bad = den == 0
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=~bad)
    if np.any(bad):
        rows, cols = np.nonzero(bad)
        for r, c in zip(rows, cols):
            supp = np.nonzero(counts[c] if counts.ndim == 2 else counts)[0]
            j = supp[np.argmax(log_w[r, supp])]
            out[r, c] = profile_at(r, j)
    return out


class GsmBayesEstimator:
    """Bayes estimator for a discrete prior on the reduced grid.

    Predictions shrink X toward 0 along its direction (full loss) or shrink
    the first block of X along its block direction (partial loss), with the
    shrinkage profile given by posterior-weighted Bessel ratios.
    """

    def __init__(self, grid: np.ndarray, counts: np.ndarray, problem: GsmProblem):
        grid = np.atleast_2d(np.asarray(grid, dtype=float))
        counts = np.asarray(counts, dtype=float)
        if grid.shape[0] != counts.shape[0]:
            raise ValueError("grid and counts must have matching lengths")
        if np.any(counts < 0) or counts.sum() <= 0:
            raise ValueError("counts must be non-negative with positive total")
        keep = counts > 0
        self.grid = grid[keep]
        self.counts = counts[keep]
        self.problem = problem

    def _log_weights_1d(self, r: np.ndarray) -> np.ndarray:
        # posterior weight of radius b given ||X|| = r, up to r-only factors:
        # exp(-b^2/2) * I_nu(b r) / (b r)^nu with nu = d/2 - 1
        b = self.grid[:, 0]
        nu = self.problem.d / 2.0 - 1.0
        z = r[:, None] * b[None, :]
        return -0.5 * b * b + log_bessel_i_over_xpow(nu, z)

    def _log_weights_2d(self, r1: np.ndarray, r2: np.ndarray) -> np.ndarray:
        k, d = self.problem.k, self.problem.d
        b1, b2 = self.grid[:, 0], self.grid[:, 1]
        z1 = r1[:, None] * b1[None, :]
        z2 = r2[:, None] * b2[None, :]
        return (
            -0.5 * (b1 * b1 + b2 * b2)
            + log_bessel_i_over_xpow(k / 2.0 - 1.0, z1)
            + log_bessel_i_over_xpow((d - k) / 2.0 - 1.0, z2)
        )

    def shrink_profile(self, r: np.ndarray, r2: np.ndarray | None = None) -> np.ndarray:
        """Posterior mean of b*A(b r) / posterior mean of 1, per sample."""
        problem = self.problem
        if problem.reduced_dim == 1:
            log_w = self._log_weights_1d(r)
            b = self.grid[:, 0]
            b_ratio = b[None, :] * bessel_ratio(problem.d / 2.0, r[:, None] * b[None, :])
        else:
            log_w = self._log_weights_2d(r, r2)
            b = self.grid[:, 0]
            b_ratio = b[None, :] * bessel_ratio(problem.k / 2.0, r[:, None] * b[None, :])
        log_w = log_w - log_w.max(axis=1, keepdims=True)
        w = np.exp(log_w)
        num = (w * b_ratio) @ self.counts
        den = w @ self.counts
        return _ratio_with_fallback(
            num[:, None], den[:, None], log_w, self.counts[None, :],
            lambda i, j: b_ratio[i, j],
        )[:, 0]

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        problem = self.problem
        out = np.zeros_like(X)
        if problem.reduced_dim == 1:
            r = np.linalg.norm(X, axis=1)
            h = self.shrink_profile(r)
            nz = r > 0
            out[nz] = (h[nz] / r[nz])[:, None] * X[nz]
        else:
            k = problem.k
            r1 = np.linalg.norm(X[:, :k], axis=1)
            r2 = np.linalg.norm(X[:, k:], axis=1)
            h = self.shrink_profile(r1, r2)
            nz = r1 > 0
            out[nz, :k] = (h[nz] / r1[nz])[:, None] * X[nz, :k]
        return out


class GsmIterateEnsemble:
    """Uniform average of the Bayes responders across all game iterations.

    All iterations share one grid, so the averaged prediction only needs the
    per-sample weight matrix once, followed by one matrix product against the
    (iteration x grid) count matrix.
    """

    def __init__(self, grid: np.ndarray, counts_matrix: np.ndarray, problem: GsmProblem):
        self.grid = np.atleast_2d(np.asarray(grid, dtype=float))
        self.counts_matrix = np.asarray(counts_matrix, dtype=float)
        self.problem = problem
        self._proto = GsmBayesEstimator(
            self.grid, np.ones(self.grid.shape[0]), problem
        )

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty_like(X)
        for lo in range(0, X.shape[0], _PREDICT_CHUNK):
            out[lo : lo + _PREDICT_CHUNK] = self._predict_chunk(X[lo : lo + _PREDICT_CHUNK])
        return out

    def _predict_chunk(self, X: np.ndarray) -> np.ndarray:
        problem = self.problem
        proto = self._proto
        C = self.counts_matrix  # (T, G)
        if problem.reduced_dim == 1:
            r = np.linalg.norm(X, axis=1)
            log_w = proto._log_weights_1d(r)
            b = self.grid[:, 0]
            b_ratio = b[None, :] * bessel_ratio(problem.d / 2.0, r[:, None] * b[None, :])
        else:
            k = problem.k
            r = np.linalg.norm(X[:, :k], axis=1)
            r2 = np.linalg.norm(X[:, k:], axis=1)
            log_w = proto._log_weights_2d(r, r2)
            b = self.grid[:, 0]
            b_ratio = b[None, :] * bessel_ratio(problem.k / 2.0, r[:, None] * b[None, :])
        log_w = log_w - log_w.max(axis=1, keepdims=True)
        w = np.exp(log_w)
        num = (w * b_ratio) @ C.T  # (m, T)
        den = w @ C.T
        h_iter = _ratio_with_fallback(num, den, log_w, C, lambda i, j: b_ratio[i, j])
        h = h_iter.mean(axis=1)
        out = np.zeros_like(X)
        nz = r > 0
        if problem.reduced_dim == 1:
            out[nz] = (h[nz] / r[nz])[:, None] * X[nz]
        else:
            k = problem.k
            out[nz, :k] = (h[nz] / r[nz])[:, None] * X[nz, :k]
        return out


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------


class StandardEstimator:
    """Identity estimator; its risk is exactly the number of loss coordinates."""

    def __init__(self, problem: GsmProblem):
        self.constant_risk = float(problem.k)

    def predict(self, X):
        return np.array(X, dtype=float, copy=True)


class JamesSteinEstimator:
    def __init__(self, problem: GsmProblem):
        if problem.d < 4:
            raise ValueError("positive-part shrinkage baseline needs d >= 4")
        self.d = problem.d

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        sq = np.einsum("ij,ij->i", X, X)
        factor = np.maximum(0.0, 1.0 - (self.d - 3) / np.maximum(sq, 1e-300))
        return factor[:, None] * X


class ProjectionEstimator:
    """Projects X onto the ball of radius B (the constrained MLE)."""

    def __init__(self, problem: GsmProblem):
        self.B = problem.B

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        r = np.linalg.norm(X, axis=1)
        factor = np.where(r > self.B, self.B / np.maximum(r, 1e-300), 1.0)
        return factor[:, None] * X


class BestLinearEstimator:
    """c * X restricted to the single loss coordinate, with c chosen by a 1-D
    scan of the worst-case risk c^2 + t^2 (1-c)^2 over t in [-B, B] (whose
    maximum sits at |t| = B); the scan lands on c = B^2/(B^2+1)."""

    def __init__(self, problem: GsmProblem):
        if problem.k != 1:
            raise ValueError("linear baseline applies to the single-coordinate loss")
        c_grid = np.linspace(0.0, 1.0, 100_001)
        worst = c_grid**2 + problem.B**2 * (1.0 - c_grid) ** 2
        self.c = float(c_grid[np.argmin(worst)])

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros_like(X)
        out[:, 0] = self.c * X[:, 0]
        return out


def boundary_bayes(problem: GsmProblem) -> GsmBayesEstimator:
    """Bayes responder to the uniform prior on the boundary sphere."""
    if problem.reduced_dim != 1:
        raise ValueError("boundary prior baseline is defined for the full loss")
    return GsmBayesEstimator(np.array([[problem.B]]), np.array([1.0]), problem)


def make_baseline(name: str, problem: GsmProblem):
    factories = {
        "standard": StandardEstimator,
        "james_stein": JamesSteinEstimator,
        "projection": ProjectionEstimator,
        "boundary_bayes": boundary_bayes,
        "best_linear": BestLinearEstimator,
    }
    if name not in factories:
        raise ValueError(f"unknown baseline {name!r}; choose from {sorted(factories)}")
    return factories[name](problem)


# ---------------------------------------------------------------------------
# risk evaluation and the game adapter
# ---------------------------------------------------------------------------


def gsm_risk_mc(estimator, point, problem: GsmProblem, n_samples: int, gen) -> tuple[float, float]:
    """Monte Carlo risk E||est(X)[loss coords] - theta[loss coords]||^2 at the
    canonical mean for the given reduced point. Returns (mean, stderr)."""
    theta = problem.theta_from_point(point)
    k = problem.k
    losses = np.empty(n_samples)
    for lo in range(0, n_samples, _PREDICT_CHUNK):
        m = min(_PREDICT_CHUNK, n_samples - lo)
        X = theta[None, :] + gen.standard_normal((m, problem.d))
        pred = estimator.predict(X)
        diff = pred[:, :k] - theta[None, :k]
        losses[lo : lo + m] = np.einsum("ij,ij->i", diff, diff)
    return float(losses.mean()), float(losses.std(ddof=1) / math.sqrt(n_samples))


class GsmGame:
    """Adapter exposing the sequence model to the FTPL engine."""

    def __init__(self, problem: GsmProblem):
        self.problem = problem

    @property
    def reduced_dim(self) -> int:
        return self.problem.reduced_dim

    def grid(self, cfg) -> np.ndarray:
        if self.reduced_dim == 1:
            return make_grid_1d(cfg.radius, cfg.grid_width)
        return make_grid_2d(cfg.radius, cfg.grid_width)

    def min_oracle(self, grid, counts) -> GsmBayesEstimator:
        return GsmBayesEstimator(grid, counts, self.problem)

    def averaged(self, log) -> GsmIterateEnsemble:
        return GsmIterateEnsemble(log.grid, log.prior_counts, self.problem)

    def risk_row(self, estimator, iterate_index: int, grid, cfg) -> np.ndarray:
        """Risks of one iterate's estimator at every grid point, batched into a
        single prediction call; sample j uses its own substream so rows are
        reproducible independently of evaluation order."""
        problem = self.problem
        n1 = cfg.n_risk
        n_grid = grid.shape[0]
        X = np.empty((n_grid * n1, problem.d))
        thetas = np.empty((n_grid, problem.d))
        for j in range(n_grid):
            gen = substream(cfg.seed, "gsm-risk", iterate_index, j)
            thetas[j] = problem.theta_from_point(grid[j])
            X[j * n1 : (j + 1) * n1] = thetas[j] + gen.standard_normal((n1, problem.d))
        pred = estimator.predict(X)
        k = problem.k
        diff = pred[:, :k].reshape(n_grid, n1, k) - thetas[:, None, :k]
        return np.einsum("gij,gij->gi", diff, diff).mean(axis=1)

    def risk_mc(self, estimator, point, n_samples, gen):
        return gsm_risk_mc(estimator, point, self.problem, n_samples, gen)


def default_eta(problem: GsmProblem, iters: int) -> float:
    """Perturbation rate scaling the FTPL regret bound: 1/(B(B+1) sqrt(T))."""
    B = problem.B
    return 1.0 / (B * (B + 1.0) * math.sqrt(iters))
