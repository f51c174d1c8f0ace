import numpy as np
import pytest

from rmcstop.emulators import ConstantFit
from rmcstop.model import ModelSpec, discounted_reward, simulate_paths
from rmcstop.policy import EvalResult, cv_adjust, european_value, forward_eval
from rmcstop.sampling import RandomStream
from rmcstop.solvers import PolicyFit, solve_ls


def put_1d(**over):
    kw = dict(dim=1, T=1.0, dt=0.04, r=0.06, strike=40.0, x0=[40.0],
              sigma=0.2, payoff="put", dynamics="gbm")
    kw.update(over)
    return ModelSpec(**kw)


def const_policy(model, value):
    fits = [None] + [ConstantFit(value, model.dim, step=k)
                     for k in range(1, model.n_steps)]
    return PolicyFit(model=model, fits=fits)


class TestForwardEval:
    def test_always_stop_matches_brute_force(self):
        m = put_1d()
        test = simulate_paths(m, 5000, RandomStream(0))
        result = forward_eval(test, const_policy(m, -1.0), m,
                              keep_paths=True)
        # brute force: stop at the first in-the-money step, else maturity
        n = test.shape[1]
        want = np.empty(n)
        for i in range(n):
            for k in range(1, m.n_steps + 1):
                h = discounted_reward(k, test[k, i][None, :], m)[0]
                if (h > 0 and k < m.n_steps) or k == m.n_steps:
                    want[i] = h
                    break
        assert result.price == pytest.approx(want.mean(), abs=1e-12)
        assert np.allclose(result.payoffs, want)

    def test_never_stop_equals_european(self):
        m = put_1d()
        test = simulate_paths(m, 5000, RandomStream(1))
        result = forward_eval(test, const_policy(m, 1.0), m, european=True)
        assert result.price == pytest.approx(european_value(test, m), abs=1e-12)
        assert result.european_estimate == pytest.approx(result.price)

    def test_repeat_evaluation_identical(self):
        m = put_1d()
        test = simulate_paths(m, 2000, RandomStream(2))
        policy = solve_ls(m, 2000, "lm", RandomStream(3), degree=3)
        a = forward_eval(test, policy, m)
        b = forward_eval(test, policy, m)
        assert a.price == b.price and a.std_error == b.std_error

    def test_price_inside_ci(self):
        m = put_1d()
        test = simulate_paths(m, 2000, RandomStream(4))
        r = forward_eval(test, const_policy(m, -1.0), m)
        assert r.ci95[0] <= r.price <= r.ci95[1]
        assert r.std_error > 0

    def test_stop_steps_in_range(self):
        m = put_1d()
        test = simulate_paths(m, 500, RandomStream(5))
        r = forward_eval(test, const_policy(m, -1.0), m, keep_paths=True)
        assert np.all((r.stop_steps >= 0) & (r.stop_steps <= m.n_steps))

    def test_immediate_exercise_flagged(self):
        # deep in-the-money put with positive rates: stopping at 0 dominates
        m = put_1d(strike=1000.0)
        test = simulate_paths(m, 1000, RandomStream(6))
        r = forward_eval(test, const_policy(m, 1.0), m)
        assert r.immediate_exercise
        assert r.price == pytest.approx(960.0)
        assert r.std_error == 0.0

    def test_missing_fit_raises(self):
        m = put_1d()
        test = simulate_paths(m, 100, RandomStream(7))
        policy = const_policy(m, -1.0)
        policy.fits[3] = None
        with pytest.raises(ValueError, match="missing"):
            forward_eval(test, policy, m)

    def test_dimension_mismatch(self):
        m = put_1d()
        bad = np.zeros((m.n_steps + 1, 10, 2))
        with pytest.raises(ValueError, match="dimension"):
            forward_eval(bad, const_policy(m, -1.0), m)

    def test_short_horizon_rejected(self):
        m = put_1d()
        with pytest.raises(ValueError, match="steps"):
            forward_eval(np.zeros((3, 10, 1)), const_policy(m, -1.0), m)


class TestEuropean:
    def test_zero_payoff_model(self):
        m = put_1d(strike=1e-12)
        test = simulate_paths(m, 1000, RandomStream(8))
        assert european_value(test, m) == 0.0

    def test_matches_black_scholes(self):
        from oracles import black_scholes_put

        m = put_1d()
        test = simulate_paths(m, 200_000, RandomStream(9))
        mc = european_value(test, m)
        bs = black_scholes_put(40.0, 40.0, 0.06, 0.2, 1.0)
        se = discounted_reward(25, test[25], m).std() / np.sqrt(200_000)
        assert abs(mc - bs) < 3 * se
        assert bs == pytest.approx(2.066, abs=0.002)


class TestControlVariate:
    def _result(self, price, eu):
        return EvalResult(price=price, std_error=0.01,
                          ci95=(price - 0.02, price + 0.02), n_paths=100,
                          european_estimate=eu)

    def test_exact_estimate_leaves_price_unchanged(self):
        r = self._result(2.30, 2.066)
        assert cv_adjust(r, 2.066) == pytest.approx(2.30)

    def test_high_estimate_lowers_price(self):
        r = self._result(2.30, 2.076)
        assert cv_adjust(r, 2.066) == pytest.approx(2.29)

    def test_missing_estimate_raises(self):
        r = EvalResult(price=1.0, std_error=0.0, ci95=(1, 1), n_paths=10)
        with pytest.raises(ValueError, match="european"):
            cv_adjust(r, 2.0)
