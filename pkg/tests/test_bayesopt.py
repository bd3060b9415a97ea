import json

import numpy as np
import pytest

from vqp import bayesopt
from vqp.bayesopt import BOState, ObjectiveFailed, fit, median_lengthscale, propose, run
from vqp.exceptions import OptimizationError


def quadratic(u):
    return float(np.sum((np.asarray(u) - 0.7) ** 2))


def dense_posterior(X, y, xs, ell, sf2, noise):
    """Textbook GP posterior with explicit inverses; shares nothing with the library."""
    def k(a, b):
        d = a[:, None, :] - b[None, :, :]
        return sf2 * np.exp(-0.5 * np.sum(d * d, axis=2) / ell**2)

    m = y.mean()
    K = k(X, X) + noise * np.eye(len(X))
    ks = k(xs, X)
    mu = m + ks @ np.linalg.solve(K, y - m)
    var = sf2 - np.sum(ks * np.linalg.solve(K, ks.T).T, axis=1)
    return mu, var


class TestFit:
    def test_single_point(self):
        m = fit([[0.3, 0.3]], [0.4])
        mu, var = m.predict([[0.3, 0.3]])
        assert mu[0] == pytest.approx(0.4, abs=1e-6)
        assert np.sqrt(var[0]) <= 1e-3

    def test_far_point_reverts_to_mean(self):
        X = np.array([[0.1], [0.4], [0.5]])
        y = np.array([0.2, 0.9, 0.4])
        m = fit(X, y)
        mu, var = m.predict([[1e3]])
        assert mu[0] == pytest.approx(y.mean(), abs=1e-12)
        assert var[0] == pytest.approx(m.signal_var)

    def test_interpolates(self, rng):
        X = rng.random((8, 3))
        y = rng.random(8)
        m = fit(X, y)
        mu, _ = m.predict(X)
        np.testing.assert_allclose(mu, y, atol=10 * np.sqrt(m.noise_var))

    @pytest.mark.parametrize("seed", range(5))
    def test_dense_solve_oracle(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.random((5, 1))
        y = rng.normal(size=5)
        m = fit(X, y)
        xs = np.linspace(0, 1, 57)[:, None]  # the unit box
        mu, var = m.predict(xs)
        mu_ref, var_ref = dense_posterior(X, y, xs, m.lengthscale, m.signal_var, m.noise_var)
        np.testing.assert_allclose(mu, mu_ref, atol=1e-8, rtol=0)
        np.testing.assert_allclose(var, np.maximum(var_ref, 0), atol=1e-8, rtol=0)

    def test_hyperparameters(self):
        X = np.array([[0.0], [0.2], [0.6]])
        y = np.array([1.0, 2.0, 4.0])
        m = fit(X, y)
        assert m.lengthscale == pytest.approx(0.4)  # median of {0.2, 0.6, 0.4}
        assert m.signal_var == pytest.approx(np.var(y))
        assert m.mean == pytest.approx(7 / 3)

    def test_constant_y_uses_unit_variance(self):
        assert fit([[0.1], [0.5]], [0.3, 0.3]).signal_var == 1.0

    def test_lengthscale_fallback(self):
        assert median_lengthscale(np.zeros((1, 4))) == 1.0
        assert median_lengthscale(np.zeros((3, 4))) == 1.0
        assert median_lengthscale(np.zeros((3, 4)), floor=2.0) == 2.0

    def test_duplicate_points_jitter(self):
        # repeated x with different y: needs more than the base jitter
        m = fit([[0.5], [0.5], [0.5]], [0.0, 1.0, 0.5])
        assert m.noise_var >= bayesopt.BASE_NOISE

    def test_jitter_ladder(self, monkeypatch):
        tried = []

        def failing(a, lower):
            tried.append(a[0, 0] - 0.25)  # var([0, 1])
            raise np.linalg.LinAlgError

        monkeypatch.setattr(bayesopt, "cholesky", failing)
        with pytest.raises(OptimizationError):
            fit([[0.5], [0.6]], [0.0, 1.0], lengthscale=1.0)
        np.testing.assert_allclose(tried, [1e-6 * 10**k for k in range(5)], rtol=1e-6)

    def test_mismatched_inputs(self):
        with pytest.raises(OptimizationError):
            fit([[0.1], [0.2]], [1.0])

    def test_variance_lower_near_data(self, rng):
        X = rng.random((6, 2))
        m = fit(X, rng.random(6))
        _, v_data = m.predict(X)
        far = X + 10 * m.lengthscale
        _, v_far = m.predict(far)
        assert np.all(v_data <= v_far)


class TestPropose:
    def setup_method(self):
        self.X = np.array([[0.05], [0.3], [0.45], [0.8], [0.95]])
        self.y = np.array([0.6, 0.2, 0.35, 0.1, 0.5])
        self.model = fit(self.X, self.y)
        self.grid = np.linspace(0, 1, 101)[:, None]

    def test_kappa_zero_matches_grid_mean_argmin(self):
        x = propose(self.model, ([0.0], [1.0]), np.random.default_rng(0), kappa=0.0)
        mu, _ = self.model.predict(self.grid)
        g = self.grid[np.argmin(mu)]
        assert abs(x[0] - g[0]) <= 0.01  # grid spacing
        assert self.model.predict(x)[0][0] <= mu.min() + 1e-9

    def test_beats_grid_lcb(self):
        for seed in range(5):
            x = propose(self.model, ([0.0], [1.0]), np.random.default_rng(seed))
            assert self.model.lcb(x)[0] <= self.model.lcb(self.grid).min() + 1e-3

    def test_deterministic(self):
        a = propose(self.model, ([0.0], [1.0]), np.random.default_rng(3))
        b = propose(self.model, ([0.0], [1.0]), np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)

    def test_within_bounds(self, rng):
        X = rng.random((10, 5))
        m = fit(X, rng.random(10))
        lo, hi = np.full(5, 0.2), np.full(5, 0.6)
        for s in range(3):
            x = propose(m, (lo, hi), np.random.default_rng(s))
            assert np.all(x >= lo) and np.all(x <= hi)


class TestRun:
    @pytest.mark.parametrize("seed", range(5))
    def test_quadratic_converges(self, seed):
        state = run(quadratic, [0.2, 0.2], 19, seed=seed)
        assert len(state.y) == 25
        assert state.incumbent[1] <= 1e-2

    def test_random_search_needs_four_times_more(self):
        for seed in range(5):
            bo = run(quadratic, [0.2, 0.2], 19, seed=seed).incumbent[1]
            rs = min(quadratic(u) for u in np.random.default_rng(100 + seed).random((100, 2)))
            assert bo <= rs

    def test_constant_objective(self):
        state = run(lambda u: 0.25, [0.5, 0.5], 5)
        assert state.incumbent_trace() == [0.25] * len(state.y)

    def test_budget_single_iteration(self):
        calls = []
        state = run(lambda u: calls.append(1) or 0.0, [0.5], 1)
        assert len(calls) == bayesopt.N_PERTURB + 1 + 1
        assert state.n_init == bayesopt.N_PERTURB + 1

    def test_default_budget_is_36(self):
        state = run(quadratic, [0.5, 0.5], seed=1)
        assert len(state.y) == 36

    def test_monotone_incumbent_and_trace_file(self, tmp_path):
        path = tmp_path / "t.jsonl"
        state = run(lambda u: float(np.sin(9 * u[0]) + u[1]), [0.5, 0.5], 10, trace_path=path, seed=2)
        recs = [json.loads(line) for line in path.read_text().splitlines()]
        assert [r["iter"] for r in recs] == list(range(16))
        inc = [r["incumbent"] for r in recs]
        assert all(b <= a for a, b in zip(inc, inc[1:]))
        assert inc[-1] == min(state.y)
        assert all(0 <= v <= 1 for r in recs for v in r["x"])
        assert set(recs[0]) == {"iter", "x", "y", "incumbent"}

    def test_deterministic(self):
        a = run(quadratic, [0.2, 0.9], 6, seed=4)
        b = run(quadratic, [0.2, 0.9], 6, seed=4)
        assert a.trace == b.trace

    def test_respects_bounds(self):
        lo, hi = np.array([0.1, 0.3]), np.array([0.4, 0.5])
        state = run(quadratic, [0.2, 0.4], 8, bounds=(lo, hi))
        X = np.array(state.X)
        assert np.all(X >= lo) and np.all(X <= hi)
        # optimum of the clipped problem sits at the upper corner
        assert np.allclose(state.incumbent[0], hi, atol=0.05)

    def test_objective_failure_keeps_partial_state(self, tmp_path):
        def f(u):
            if f.calls == 7:
                raise RuntimeError("simulator exploded")
            f.calls += 1
            return quadratic(u)

        f.calls = 0
        path = tmp_path / "t.jsonl"
        with pytest.raises(ObjectiveFailed) as err:
            run(f, [0.5, 0.5], 5, trace_path=path)
        assert len(err.value.state.y) == 7
        assert len(path.read_text().splitlines()) == 7

    def test_nonfinite_objective(self):
        with pytest.raises(ObjectiveFailed):
            run(lambda u: float("nan"), [0.5], 2)

    def test_bad_inputs(self):
        with pytest.raises(OptimizationError):
            run(quadratic, [0.5], 0)
        with pytest.raises(OptimizationError):
            run(quadratic, [1.5], 3)


def test_state_incumbent_first_on_ties():
    s = BOState(X=[np.zeros(1), np.ones(1)], y=[0.1, 0.1])
    assert s.best_index == 0
