"""Linear regression game: Y = X theta + eps with Gaussian rows, ||theta|| <= B.

Rotation invariance again reduces the adversary to the radius ||theta||. The
Bayes responder averages, over each prior radius b, the mean of a
Fisher-Bingham distribution on the sphere with concentration parameters
(b^2 X'X / 2, b X'Y); everything is computed in the eigenbasis of X'X, which
needs a single symmetric eigendecomposition per dataset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import substream
from .special import (
    FBParams,
    NumericalError,
    fb_log_constant_and_mean,
    fb_log_constant_and_mean_batch,
    log_fb_constant,
)

_PREDICT_CHUNK = 512


@dataclass(frozen=True)
class RegressionProblem:
    n: int
    d: int
    B: float

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be at least 2")
        if self.n < self.d:
            raise ValueError("need at least as many rows as parameters")
        if self.B <= 0:
            raise ValueError("B must be positive")

    @property
    def reduced_dim(self) -> int:
        return 1


def generate_datasets(theta: np.ndarray, n: int, count: int, gen) -> tuple[np.ndarray, np.ndarray]:
    """count iid datasets: X with N(0,1) entries, Y = X theta + N(0, I_n)."""
    theta = np.asarray(theta, dtype=float)
    X = gen.standard_normal((count, n, theta.shape[0]))
    Y = X @ theta + gen.standard_normal((count, n))
    return X, Y


def _log_sphere_area(d: int) -> float:
    return math.log(2.0) + 0.5 * d * math.log(math.pi) - math.lgamma(d / 2.0)


class RegBayesEstimator:
    """Bayes estimator for a discrete prior over radii.

    theta_hat = sum_b w_b count_b b mean_b / sum_b w_b count_b, with
    w_b = C(b^2 X'X/2, b X'Y) the Fisher-Bingham constant and mean_b the
    corresponding spherical mean; combined in shifted log space.

    fb_method selects the normalization-constant backend: "imhof" evaluates
    the exact oscillatory integral per dataset and radius, "sp2" uses the
    vectorized second-order saddlepoint with its analytic gradient.
    """

    def __init__(self, grid, counts, problem: RegressionProblem, fb_method: str = "imhof"):
        grid = np.atleast_2d(np.asarray(grid, dtype=float))
        counts = np.asarray(counts, dtype=float)
        if grid.shape[0] != counts.shape[0]:
            raise ValueError("grid and counts must have matching lengths")
        if np.any(counts < 0) or counts.sum() <= 0:
            raise ValueError("counts must be non-negative with positive total")
        if fb_method not in ("imhof", "sp2"):
            raise ValueError("fb_method must be 'imhof' or 'sp2'")
        keep = counts > 0
        self.values = grid[keep][:, 0]
        self.counts = counts[keep]
        self.problem = problem
        self.fb_method = fb_method

    def predict(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if X.ndim == 2:
            return self.predict_batch(X[None], Y[None])[0]
        return self.predict_batch(X, Y)

    def predict_batch(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        out = np.empty((X.shape[0], self.problem.d))
        for lo in range(0, X.shape[0], _PREDICT_CHUNK):
            sl = slice(lo, lo + _PREDICT_CHUNK)
            log_w, means = self._posterior_terms(X[sl], Y[sl])
            out[sl] = self._combine(log_w, means, self.counts)
        return out

    def _posterior_terms(self, X, Y):
        """Per-dataset log FB constants (m, G) and scaled means b*U*mean (m, G, d)."""
        d = self.problem.d
        b = self.values
        xtx = np.einsum("mni,mnj->mij", X, X)
        xty = np.einsum("mni,mn->mi", X, Y)
        lam, U = np.linalg.eigh(xtx)
        lam = np.maximum(lam, 1e-12)
        gam0 = np.einsum("mji,mj->mi", U, xty)  # U^T X'Y

        m, G = X.shape[0], b.shape[0]
        log_w = np.empty((m, G))
        means = np.zeros((m, G, d))
        pos = b > 0.0
        if np.any(~pos):
            # prior point at the origin: constant weight, zero mean
            log_w[:, ~pos] = _log_sphere_area(d)
        bp = b[pos]
        if self.fb_method == "sp2":
            a = 0.5 * bp[None, :, None] ** 2 * lam[:, None, :]  # (m, G+, d)
            gam = bp[None, :, None] * gam0[:, None, :]
            lc, mu = fb_log_constant_and_mean_batch(a, gam, order=2)
            log_w[:, pos] = lc
            # rotate the eigenbasis means back and scale by the radius
            means[:, pos, :] = bp[None, :, None] * np.einsum("mij,mgj->mgi", U, mu)
        else:
            for j in np.nonzero(pos)[0]:
                bj = b[j]
                a = 0.5 * bj * bj * lam
                gam = bj * gam0
                lc = np.empty(m)
                mu = np.empty((m, d))
                for i in range(m):
                    lc[i], mu[i] = fb_log_constant_and_mean(
                        FBParams(a[i], gam[i]), method="imhof"
                    )
                log_w[:, j] = lc
                means[:, j, :] = bj * np.einsum("mij,mj->mi", U, mu)
        return log_w, means

    @staticmethod
    def _combine(log_w, means, counts):
        shift = log_w.max(axis=1, keepdims=True)
        w = np.exp(log_w - shift) * counts[None, :]
        den = w.sum(axis=1)
        num = np.einsum("mg,mgd->md", w, means)
        return num / den[:, None]


class RegIterateEnsemble:
    """Uniform average of the Bayes responders across iterations: the expensive
    Fisher-Bingham terms are computed once per dataset and reused for every
    iteration's count vector."""

    def __init__(self, grid, counts_matrix, problem: RegressionProblem, fb_method: str = "sp2"):
        self.counts_matrix = np.asarray(counts_matrix, dtype=float)  # (T, G)
        self._proto = RegBayesEstimator(
            grid, np.ones(self.counts_matrix.shape[1]), problem, fb_method=fb_method
        )
        self.problem = problem

    def predict(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if X.ndim == 2:
            return self.predict_batch(X[None], Y[None])[0]
        return self.predict_batch(X, Y)

    def predict_batch(self, X, Y):
        out = np.empty((X.shape[0], self.problem.d))
        C = self.counts_matrix
        for lo in range(0, X.shape[0], _PREDICT_CHUNK):
            sl = slice(lo, lo + _PREDICT_CHUNK)
            log_w, means = self._proto._posterior_terms(X[sl], Y[sl])
            shift = log_w.max(axis=1, keepdims=True)
            w = np.exp(log_w - shift)  # (m, G)
            den = w @ C.T  # (m, T)
            num = np.einsum("mgd,tg->mtd", w[:, :, None] * means, C)
            preds = num / den[:, :, None]
            out[sl] = preds.mean(axis=1)
        return out


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------


class OlsEstimator:
    """Least squares; for Gaussian designs its risk is exactly d/(n-d-1)."""

    def __init__(self, problem: RegressionProblem):
        if problem.n < problem.d + 2:
            raise ValueError("least squares risk is infinite for n < d + 2")
        self.constant_risk = problem.d / (problem.n - problem.d - 1.0)

    def predict(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        single = X.ndim == 2
        if single:
            X, Y = X[None], Y[None]
        out = np.stack(
            [np.linalg.lstsq(X[i], Y[i], rcond=None)[0] for i in range(X.shape[0])]
        )
        return out[0] if single else out


class RidgeEstimator:
    def __init__(self, lam: float, d: int):
        if lam <= 0:
            raise ValueError("ridge penalty must be positive")
        self.lam = lam
        self.d = d

    def predict(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        single = X.ndim == 2
        if single:
            X, Y = X[None], Y[None]
        xtx = np.einsum("mni,mnj->mij", X, X) + self.lam * np.eye(self.d)
        xty = np.einsum("mni,mn->mi", X, Y)
        out = np.linalg.solve(xtx, xty[..., None])[..., 0]
        return out[0] if single else out


def best_ridge(problem: RegressionProblem, n_mc: int = 2000, seed: int = 0):
    """Ridge with penalty chosen to minimize the worst-case risk over the two
    radial extremes (0 and B), scanned on a 25-point log grid."""
    lams = np.logspace(-3, 2, 25)
    best = None
    for lam in lams:
        est = RidgeEstimator(float(lam), problem.d)
        worst = 0.0
        for j, b in enumerate((0.0, problem.B)):
            gen = substream(seed, "ridge-scan", j)
            r, _ = reg_risk_mc(est, b, problem, n_mc, gen)
            worst = max(worst, r)
        if best is None or worst < best[1]:
            best = (est, worst)
    return best[0]


def make_baseline(name: str, problem: RegressionProblem, seed: int = 0):
    if name == "ols":
        return OlsEstimator(problem)
    if name == "ridge_best":
        return best_ridge(problem, seed=seed)
    raise ValueError(f"unknown baseline {name!r}; choose from ['ols', 'ridge_best']")


# ---------------------------------------------------------------------------
# risk evaluation and the game adapter
# ---------------------------------------------------------------------------


def reg_risk_mc(estimator, point, problem: RegressionProblem, n_datasets: int, gen) -> tuple[float, float]:
    """Monte Carlo risk E||est(X,Y) - theta||^2 at theta = b e_1. (mean, stderr)."""
    b = float(np.atleast_1d(point)[0])
    theta = np.zeros(problem.d)
    theta[0] = b
    losses = np.empty(n_datasets)
    step = max(_PREDICT_CHUNK, 1)
    for lo in range(0, n_datasets, step):
        m = min(step, n_datasets - lo)
        X, Y = generate_datasets(theta, problem.n, m, gen)
        pred = estimator.predict(X, Y)
        diff = pred - theta[None, :]
        losses[lo : lo + m] = np.einsum("ij,ij->i", diff, diff)
    return float(losses.mean()), float(losses.std(ddof=1) / math.sqrt(n_datasets))


class RegressionGame:
    """Adapter exposing the regression model to the FTPL engine."""

    def __init__(self, problem: RegressionProblem, fb_method: str = "imhof"):
        self.problem = problem
        self.fb_method = fb_method

    @property
    def reduced_dim(self) -> int:
        return 1

    def grid(self, cfg) -> np.ndarray:
        from .gsm import make_grid_1d

        return make_grid_1d(cfg.radius, cfg.grid_width)

    def min_oracle(self, grid, counts) -> RegBayesEstimator:
        return RegBayesEstimator(grid, counts, self.problem, fb_method=self.fb_method)

    def averaged(self, log) -> RegIterateEnsemble:
        return RegIterateEnsemble(
            log.grid, log.prior_counts, self.problem, fb_method=self.fb_method
        )

    def risk_row(self, estimator, iterate_index: int, grid, cfg) -> np.ndarray:
        row = np.empty(grid.shape[0])
        for j in range(grid.shape[0]):
            gen = substream(cfg.seed, "reg-risk", iterate_index, j)
            row[j], _ = reg_risk_mc(estimator, grid[j], self.problem, cfg.n_risk, gen)
        return row

    def risk_mc(self, estimator, point, n_samples, gen):
        return reg_risk_mc(estimator, point, self.problem, n_samples, gen)


def default_eta(problem: RegressionProblem, iters: int) -> float:
    """Perturbation rate 1/(B(B sqrt(n)+1) sqrt(T)) matching the regression
    game's risk scale."""
    B = problem.B
    return 1.0 / (B * (B * math.sqrt(problem.n) + 1.0) * math.sqrt(iters))


def spot_check_fb(X, Y, values, seed: int = 0, fraction: float = 0.01) -> float:
    """Median relative error of the saddlepoint log-constant against the exact
    integral on a random fraction of (dataset, radius) pairs; used to certify
    the fast path after a solve."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    values = np.asarray(values, dtype=float)
    gen = substream(seed, "fb-spot-check")
    pairs = [(i, j) for i in range(X.shape[0]) for j in range(len(values)) if values[j] > 0]
    n_check = max(1, int(round(fraction * len(pairs))))
    idx = gen.choice(len(pairs), size=min(n_check, len(pairs)), replace=False)
    rel = []
    for p in idx:
        i, j = pairs[p]
        b = values[j]
        xtx = X[i].T @ X[i]
        lam, U = np.linalg.eigh(xtx)
        lam = np.maximum(lam, 1e-12)
        params = FBParams(0.5 * b * b * lam, b * (U.T @ (X[i].T @ Y[i])))
        exact = log_fb_constant(params, method="imhof")
        fast = log_fb_constant(params, method="sp2")
        rel.append(abs(fast - exact) / max(abs(exact), 1e-12))
    return float(np.median(rel))
