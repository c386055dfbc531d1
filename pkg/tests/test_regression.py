import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import ortho_group

from minimax_forge.ftpl import GameConfig, run_ftpl
from minimax_forge.gsm import make_grid_1d
from minimax_forge.regression import (
    RegBayesEstimator,
    RegIterateEnsemble,
    RegressionGame,
    RegressionProblem,
    default_eta,
    generate_datasets,
    make_baseline,
    reg_risk_mc,
    spot_check_fb,
)
from minimax_forge.rng import substream


def test_problem_validation():
    with pytest.raises(ValueError):
        RegressionProblem(3, 5, 1.0)  # n < d
    with pytest.raises(ValueError):
        RegressionProblem(5, 1, 1.0)
    with pytest.raises(ValueError):
        RegressionProblem(5, 3, -1.0)


def test_dataset_shapes_and_model():
    theta = np.array([1.0, -2.0, 0.5])
    X, Y = generate_datasets(theta, 6, 2000, substream(0, "d"))
    assert X.shape == (2000, 6, 3) and Y.shape == (2000, 6)
    resid = Y - X @ theta
    assert abs(resid.mean()) < 0.03 and abs(resid.std() - 1.0) < 0.03


# --- Bayes estimator ----------------------------------------------------------


def test_point_mass_at_zero_is_zero_estimator():
    prob = RegressionProblem(6, 3, 1.0)
    est = RegBayesEstimator(np.array([[0.0]]), np.array([1.0]), prob)
    X, Y = generate_datasets(np.array([0.5, 0, 0]), 6, 3, substream(1, "d"))
    assert np.all(est.predict(X, Y) == 0.0)


@pytest.mark.parametrize("method", ["imhof", "sp2"])
def test_prediction_matches_circle_quadrature(method):
    # d=2: brute-force posterior mean over a discrete radial prior
    rng = np.random.default_rng(5)
    n, d = 6, 2
    prob = RegressionProblem(n, d, 1.5)
    grid = np.array([[0.0], [0.5], [1.0], [1.5]])
    counts = np.array([2.0, 5.0, 1.0, 3.0])
    X = rng.normal(0, 1, (n, d))
    Y = X @ np.array([0.7, -0.4]) + rng.normal(0, 1, n)

    phi = np.linspace(0, 2 * np.pi, 20001)[:-1]
    U = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    num = np.zeros(d)
    den = 0.0
    for b, c in zip(grid[:, 0], counts):
        th = b * U
        ll = -0.5 * np.sum((Y[None, :] - th @ X.T) ** 2, axis=1)
        w = np.exp(ll - ll.max())
        scale = c * math.exp(ll.max())
        num += scale * np.sum(w[:, None] * th, axis=0)
        den += scale * np.sum(w)
    ref = num / den

    est = RegBayesEstimator(grid, counts, prob, fb_method=method)
    pred = est.predict(X, Y)
    tol = 1e-5 if method == "imhof" else 0.01
    assert np.max(np.abs(pred - ref)) < tol


def test_rotation_equivariance():
    prob = RegressionProblem(8, 4, 1.2)
    grid = make_grid_1d(1.2, 0.3)
    est = RegBayesEstimator(grid, np.arange(1.0, grid.shape[0] + 1), prob, fb_method="sp2")
    X, Y = generate_datasets(np.array([1.0, 0.2, 0, 0]), 8, 3, substream(2, "d"))
    base = est.predict(X, Y)
    for i in range(100):
        g = ortho_group.rvs(4, random_state=i)
        rotated = est.predict(X @ g.T, Y)
        assert np.max(np.abs(rotated - base @ g.T)) < 1e-10


def test_prediction_norm_bounded_by_radius():
    prob = RegressionProblem(7, 3, 0.9)
    grid = make_grid_1d(0.9, 0.15)
    est = RegBayesEstimator(grid, np.ones(grid.shape[0]), prob, fb_method="sp2")
    X, Y = generate_datasets(np.array([0.9, 0, 0]), 7, 200, substream(3, "d"))
    norms = np.linalg.norm(est.predict(X, Y), axis=1)
    assert np.all(norms <= 0.9 + 1e-9)


def test_determinism_of_predictions():
    prob = RegressionProblem(6, 3, 1.0)
    grid = make_grid_1d(1.0, 0.25)
    X, Y = generate_datasets(np.array([0.5, 0.1, 0]), 6, 4, substream(4, "d"))
    a = RegBayesEstimator(grid, np.ones(grid.shape[0]), prob, fb_method="sp2").predict(X, Y)
    b = RegBayesEstimator(grid, np.ones(grid.shape[0]), prob, fb_method="sp2").predict(X, Y)
    assert np.array_equal(a, b)


def test_fast_path_consistency_with_exact():
    # saddlepoint predictions track the exact-integral predictions closely
    rng = np.random.default_rng(7)
    n, d = 6, 3
    prob = RegressionProblem(n, d, 1.0)
    grid = np.array([[0.4], [1.0]])
    counts = np.array([1.0, 2.0])
    exact = RegBayesEstimator(grid, counts, prob, fb_method="imhof")
    fast = RegBayesEstimator(grid, counts, prob, fb_method="sp2")
    errs = []
    for _ in range(100):
        theta = rng.normal(0, 0.5, d)
        theta *= min(1.0, 1.0 / np.linalg.norm(theta))
        X, Y = generate_datasets(theta, n, 1, substream(int(rng.integers(1 << 31)), "fp"))
        pe = exact.predict(X[0], Y[0])
        pf = fast.predict(X[0], Y[0])
        errs.append(np.linalg.norm(pe - pf) / max(np.linalg.norm(pe), 1e-3))
    errs = np.array(errs)
    assert np.median(errs) < 0.01
    assert np.percentile(errs, 90) < 0.05
    assert errs.max() < 0.10


def test_spot_check_helper():
    prob = RegressionProblem(6, 3, 1.0)
    X, Y = generate_datasets(np.array([1.0, 0, 0]), 6, 20, substream(8, "d"))
    med = spot_check_fb(X, Y, np.array([0.0, 0.5, 1.0]), seed=0, fraction=0.2)
    assert med < 0.02


# --- baselines and risk --------------------------------------------------------


def test_ols_risk_matches_analytic():
    prob = RegressionProblem(10, 5, 0.5 * math.sqrt(5))
    est = make_baseline("ols", prob)
    assert est.constant_risk == pytest.approx(1.25)
    r, se = reg_risk_mc(est, prob.B, prob, 4000, substream(9, "r"))
    assert abs(r - 1.25) < 3 * se


def test_ols_requires_enough_rows():
    with pytest.raises(ValueError):
        make_baseline("ols", RegressionProblem(5, 4, 1.0))


def test_zero_estimator_risk_is_b_squared():
    prob = RegressionProblem(8, 4, 1.1)
    est = RegBayesEstimator(np.array([[0.0]]), np.array([1.0]), prob)
    r, se = reg_risk_mc(est, 1.1, prob, 500, substream(10, "r"))
    assert r == pytest.approx(1.1**2, abs=1e-12)


def test_ridge_beats_ols_at_origin():
    prob = RegressionProblem(10, 5, 1.0)
    ridge = make_baseline("ridge_best", prob)
    ols = make_baseline("ols", prob)
    r_ridge, se = reg_risk_mc(ridge, 0.0, prob, 4000, substream(11, "r"))
    assert r_ridge < ols.constant_risk - 2 * se


def test_unknown_baseline_rejected():
    with pytest.raises(ValueError):
        make_baseline("nope", RegressionProblem(6, 3, 1.0))


def test_ensemble_equals_mean_of_iterates():
    prob = RegressionProblem(6, 3, 1.0)
    grid = make_grid_1d(1.0, 0.25)
    rng = np.random.default_rng(13)
    counts = rng.multinomial(25, np.full(grid.shape[0], 1 / grid.shape[0]), size=4)
    ens = RegIterateEnsemble(grid, counts, prob, fb_method="sp2")
    X, Y = generate_datasets(np.array([0.7, 0, 0]), 6, 10, substream(14, "d"))
    ref = np.mean(
        [RegBayesEstimator(grid, c, prob, fb_method="sp2").predict(X, Y) for c in counts],
        axis=0,
    )
    assert np.max(np.abs(ens.predict(X, Y) - ref)) < 1e-10


def test_risk_lipschitz_across_grid():
    # adjacent grid risks differ by at most the game's Lipschitz bound plus noise
    n, d = 10, 5
    prob = RegressionProblem(n, d, 0.5 * math.sqrt(5))
    game = RegressionGame(prob, fb_method="sp2")
    cfg = GameConfig(1, prob.B, 10, default_eta(prob, 10), 0.05 * prob.B,
                     n_risk=400, n_prior=200, seed=15)
    log = run_ftpl(game, cfg)
    avg = game.averaged(log)
    grid = log.grid[:, 0]
    out = [reg_risk_mc(avg, b, prob, 800, substream(16, "l", j)) for j, b in enumerate(grid)]
    risks = np.array([o[0] for o in out])
    errs = np.array([o[1] for o in out])
    B, w = prob.B, 0.05 * prob.B
    lip = 4 * B * (B * math.sqrt(n) + 1) * w
    for j in range(len(grid) - 1):
        assert abs(risks[j + 1] - risks[j]) <= lip + 6 * math.hypot(errs[j], errs[j + 1])


def test_min_oracle_beats_perturbed_competitors():
    prob = RegressionProblem(6, 3, 1.0)
    grid = make_grid_1d(1.0, 0.25)
    rng = np.random.default_rng(17)
    for trial in range(3):
        counts = rng.multinomial(20, np.full(grid.shape[0], 1 / grid.shape[0]))
        if counts.sum() == 0:
            counts[-1] = 1
        est = RegBayesEstimator(grid, counts, prob, fb_method="sp2")
        mass = counts / counts.sum()
        gen = substream(300 + trial, "pairs")
        idx = gen.choice(grid.shape[0], p=mass, size=1500)
        dirs = gen.standard_normal((1500, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        thetas = grid[idx, 0][:, None] * dirs
        X = gen.standard_normal((1500, 6, 3))
        Y = np.einsum("mni,mi->mn", X, thetas) + gen.standard_normal((1500, 6))
        base = est.predict(X, Y)
        base_loss = np.sum((base - thetas) ** 2, axis=1)
        for c in range(10):
            dgen = substream(400 + trial, "delta", c)
            pert = base + dgen.normal(0, 0.03, 3)
            loss = np.sum((pert - thetas) ** 2, axis=1)
            diff = loss - base_loss
            se = diff.std(ddof=1) / math.sqrt(diff.size)
            assert diff.mean() >= -2 * se
