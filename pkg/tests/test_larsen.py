import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.linear_model import lars_path

from ssfamon.errors import NumericalError
from ssfamon.larsen import (ElasticNetProblem, Lambda1Rule, augment, feature_slowness,
                            kkt_violation, lars_en_path, select_breakpoint,
                            solve_gen_elastic_net)


def random_problem(rng, n=40, J=6, lam=None):
    X = rng.standard_normal((n, J))
    y = X @ (rng.standard_normal(J) * (rng.random(J) < 0.5)) + 0.3 * rng.standard_normal(n)
    F = rng.standard_normal((J, J)) / np.sqrt(J)
    lam = float(rng.uniform(0, 3)) if lam is None else lam
    return ElasticNetProblem(X, y, lam, F)


def test_path_matches_sklearn_lasso(rng):
    for _ in range(10):
        n, J = rng.integers(15, 40), rng.integers(2, 8)
        X = rng.standard_normal((n, J))
        y = rng.standard_normal(n)
        path = lars_en_path(X, y)
        alphas, _, coefs = lars_path(X, y, method="lasso")
        # sklearn's alpha is max|c| / n; ours is 2 max|c|
        for a, b in zip(alphas, coefs.T):
            ours = path.coef_at(2 * n * a)
            assert np.allclose(ours, b, atol=1e-8)


def test_breakpoints_decrease_and_start_empty(rng):
    path = lars_en_path(rng.standard_normal((30, 5)), rng.standard_normal(30))
    lams = path.lambdas
    assert np.all(np.diff(lams) < 0)
    assert not np.any(path.breakpoints[0].coef)
    assert lams[-1] == 0.0


def test_kkt_on_every_breakpoint(rng):
    for _ in range(20):
        X = rng.standard_normal((25, 6))
        y = rng.standard_normal(25)
        for bp in lars_en_path(X, y):
            assert kkt_violation(X, y, bp) < 1e-8


def test_orthonormal_design_is_soft_thresholding(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((30, 5)))
    y = rng.standard_normal(30)
    z = Q.T @ y
    for bp in lars_en_path(Q, y):
        soft = np.sign(z) * np.maximum(np.abs(z) - bp.lambda1 / 2, 0)
        assert np.allclose(bp.coef, soft, atol=1e-8)


def test_drop_event_path_keeps_kkt():
    # a classic design whose lasso path drops a variable
    rng = np.random.default_rng(3)
    X = rng.standard_normal((50, 3))
    X[:, 2] = X[:, 0] + X[:, 1] + 0.1 * rng.standard_normal(50)
    y = X[:, 0] + X[:, 1] - 0.5 * X[:, 2] + 0.01 * rng.standard_normal(50)
    path = lars_en_path(X, y)
    for bp in path:
        assert kkt_violation(X, y, bp) < 1e-8
    alphas, _, coefs = lars_path(X, y, method="lasso")
    for a, b in zip(alphas, coefs.T):
        assert np.allclose(path.coef_at(100 * a), b, atol=1e-8)


def test_max_active_truncates(rng):
    X = rng.standard_normal((40, 6))
    y = X @ np.ones(6)
    path = lars_en_path(X, y, max_active=2)
    assert max(bp.support.size for bp in path) <= 2
    for bp in path:
        assert kkt_violation(X, y, bp) < 1e-8


def test_all_zero_design():
    with pytest.raises(NumericalError):
        lars_en_path(np.zeros((5, 2)), np.ones(5))


def test_zero_target_path_is_trivial():
    path = lars_en_path(np.eye(4)[:, :2], np.zeros(4))
    assert len(path) == 1 and not np.any(path.breakpoints[0].coef)


def test_augment_shapes_and_scale(rng):
    p = random_problem(rng, lam=3.0)
    Xh, yh, s = augment(p)
    assert Xh.shape == (46, 6) and yh.shape == (46,)
    assert s == 2.0
    assert np.all(yh[40:] == 0)


def test_fixed_rule_solution_is_stationary(rng):
    # subgradient optimality of the original generalized elastic net
    for _ in range(20):
        p = random_problem(rng)
        lam1 = float(rng.uniform(0.1, 5))
        w, used = solve_gen_elastic_net(p, Lambda1Rule("fixed", lam1))
        assert used == lam1
        Od = p.omega_dot_factor @ p.omega_dot_factor.T
        g = -2 * p.design.T @ (p.target - p.design @ w) + 2 * p.lam * Od @ w
        on = w != 0
        assert np.allclose(g[on], -lam1 * np.sign(w[on]), atol=1e-7)
        assert np.all(np.abs(g[~on]) <= lam1 + 1e-7)


def test_infinite_lambda1_gives_zero(rng):
    w, used = solve_gen_elastic_net(random_problem(rng), Lambda1Rule("fixed", math.inf))
    assert not np.any(w) and used == math.inf


def test_best_fit_error_rule_picks_smallest_error(rng):
    p = random_problem(rng)
    Xh, yh, s = augment(p)
    path = lars_en_path(Xh, yh)
    i = select_breakpoint(path, Lambda1Rule("best-fit-error"), p, s)
    errs = [bp.fit_error for bp in path if bp.support.size]
    assert path.breakpoints[i].fit_error == min(errs)


def test_min_slowness_rule_tol_zero_is_argmin(rng):
    X = np.cumsum(rng.standard_normal((60, 4)), axis=0) * 0.1 + rng.standard_normal((60, 4))
    X = (X - X.mean(0)) / X.std(0, ddof=1)
    p = ElasticNetProblem(X, X @ rng.standard_normal(4), 1.0, np.eye(4) * 0.3, np.diff(X, axis=0))
    Xh, yh, s = augment(p)
    path = lars_en_path(Xh, yh)
    i = select_breakpoint(path, Lambda1Rule("min-slowness", tol=0.0), p, s)
    sl = [feature_slowness(X, p.design_dot, bp.coef / s) if bp.support.size else math.inf
          for bp in path]
    assert sl[i] == min(sl)


def test_min_slowness_needs_differences(rng):
    p = random_problem(rng)
    with pytest.raises(ValueError, match="design_dot"):
        solve_gen_elastic_net(p, Lambda1Rule("min-slowness"))


@pytest.mark.parametrize("text, rule", [
    ("fixed(0.5)", Lambda1Rule("fixed", 0.5)),
    ("min-slowness(0.1)", Lambda1Rule("min-slowness", tol=0.1)),
    ("min-slowness", Lambda1Rule("min-slowness")),
    ("best-fit-error", Lambda1Rule("best-fit-error")),
])
def test_rule_parse_and_str(text, rule):
    assert Lambda1Rule.parse(text) == rule
    assert Lambda1Rule.parse(str(rule)) == rule


def test_bad_rule():
    with pytest.raises(ValueError):
        Lambda1Rule.parse("smallest")
    with pytest.raises(ValueError):
        ElasticNetProblem(np.eye(2), np.ones(2), -1.0, np.eye(2))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_lasso_objective_beats_perturbations(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((20, 4))
    y = rng.standard_normal(20)
    path = lars_en_path(X, y)
    lam1 = float(rng.uniform(0, path.lambdas[0]))
    b = path.coef_at(lam1)

    def f(v):
        r = y - X @ v
        return r @ r + lam1 * np.abs(v).sum()

    base = f(b)
    for _ in range(20):
        assert f(b + 1e-3 * rng.standard_normal(4)) >= base - 1e-10
