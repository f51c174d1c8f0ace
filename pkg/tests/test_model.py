import numpy as np
import pytest
from scipy.stats import kstest

from rmcstop.model import (
    ModelSpec,
    PathSet,
    discounted_reward,
    payoff,
    sim_step,
    simulate_paths,
)
from rmcstop.sampling import RandomStream


def gbm_1d(**over):
    kw = dict(dim=1, T=1.0, dt=0.04, r=0.06, strike=40.0, x0=[40.0],
              sigma=0.2, payoff="put", dynamics="gbm")
    kw.update(over)
    return ModelSpec(**kw)


class TestModelSpec:
    def test_grid_must_divide(self):
        with pytest.raises(ValueError, match="T/dt"):
            gbm_1d(T=1.0, dt=0.3)

    def test_n_steps(self):
        assert gbm_1d().n_steps == 25

    def test_rejects_bad_sigma(self):
        with pytest.raises(ValueError):
            gbm_1d(sigma=-0.1)

    def test_rejects_unknown_tags(self):
        with pytest.raises(ValueError, match="payoff"):
            gbm_1d(payoff="nope")
        with pytest.raises(ValueError, match="dynamics"):
            gbm_1d(dynamics="nope")

    def test_scalar_div_broadcasts(self):
        m = ModelSpec(dim=3, T=1.0, dt=0.5, r=0.05, strike=1.0,
                      x0=[1.0, 1.0, 1.0], sigma=0.2, div=0.02)
        assert np.allclose(m.div_vector(), [0.02, 0.02, 0.02])


class TestSimStep:
    def test_zero_vol_drift_cancels(self):
        # sigma -> 0 unsupported (must be positive); use tiny sigma with div=r
        m = gbm_1d(sigma=1e-12, div=0.06)
        x = np.full((8, 1), 40.0)
        out = sim_step(x, m, 0.3, RandomStream(0))
        assert np.allclose(out, 40.0, atol=1e-9)

    def test_gbm_mean_matches_closed_form(self):
        m = gbm_1d(r=0.05, div=0.0, sigma=0.2)
        x = np.full((10**6, 1), 40.0)
        out = sim_step(x, m, 0.1, RandomStream(9))
        assert out.mean() == pytest.approx(40 * np.exp(0.005), abs=0.01)

    def test_gbm_cor_perfect_correlation(self):
        m = ModelSpec(dim=2, T=1.0, dt=0.1, r=0.05, strike=40.0,
                      x0=[40.0, 40.0], sigma=[0.2, 0.2], rho=1.0,
                      payoff="put", dynamics="gbm_cor")
        x = np.full((10**5, 2), 40.0)
        out = sim_step(x, m, 0.1, RandomStream(3))
        logret = np.log(out / 40.0)
        corr = np.corrcoef(logret.T)[0, 1]
        assert corr == pytest.approx(1.0, abs=1e-6)

    def test_gbm_cor_zero_rho_matches_independent(self):
        # KS test of the marginal log-return against the exact normal law
        m = ModelSpec(dim=2, T=1.0, dt=0.1, r=0.06, strike=40.0,
                      x0=[40.0, 40.0], sigma=[0.2, 0.2], rho=0.0,
                      payoff="put", dynamics="gbm_cor")
        x = np.full((10**5, 2), 40.0)
        out = sim_step(x, m, 0.1, RandomStream(5))
        z = np.log(out[:, 0] / 40.0)
        mu = (0.06 - 0.5 * 0.04) * 0.1
        sd = 0.2 * np.sqrt(0.1)
        assert kstest(z, "norm", args=(mu, sd)).pvalue > 0.01

    def test_moving_average_shifts_lags(self):
        m = ModelSpec(dim=4, T=1.0, dt=0.1, r=0.05, strike=100.0,
                      x0=[100.0, 0.0, 0.0, 0.0], sigma=0.2, payoff="call",
                      dynamics="gbm_moving_ave")
        x = np.array([[100.0, 90.0, 80.0, 70.0]])
        out = sim_step(x, m, 0.1, RandomStream(1))
        assert np.allclose(out[0, 1:], [100.0, 90.0, 80.0])
        assert out[0, 0] > 0

    def test_sv_positive_prices(self):
        m = ModelSpec(dim=2, T=0.2, dt=0.02, r=0.0225, strike=100.0,
                      x0=[90.0, np.log(0.35)], sigma=1.0, payoff="sv_put",
                      dynamics="expou_sv",
                      sv_params=dict(svAlpha=0.015, svEpsY=1.0, svVol=3.0,
                                     svRho=-0.03, svMean=2.95,
                                     eulerDt=0.002))
        x = np.tile([90.0, np.log(0.35)], (2000, 1))
        out = sim_step(x, m, 0.02, RandomStream(2))
        assert np.all(out[:, 0] > 0)

    def test_rejects_nonpositive_gbm_state(self):
        with pytest.raises(ValueError, match="positive"):
            sim_step(np.array([[-1.0]]), gbm_1d(), 0.1, RandomStream(0))

    def test_rejects_dim_mismatch(self):
        with pytest.raises(ValueError, match="columns"):
            sim_step(np.ones((3, 2)), gbm_1d(), 0.1, RandomStream(0))


class TestPayoff:
    def test_put_hand_value(self):
        m = gbm_1d()
        assert payoff(np.array([[36.0]]), m)[0] == pytest.approx(4.0)

    def test_maxi_call(self):
        m = ModelSpec(dim=3, T=1.0, dt=0.5, r=0.05, strike=100.0,
                      x0=[100.0] * 3, sigma=0.2, payoff="maxi_call")
        assert payoff(np.array([[90.0, 110.0, 95.0]]), m)[0] == pytest.approx(10.0)

    def test_basket_put_at_strike(self):
        m = ModelSpec(dim=2, T=1.0, dt=0.5, r=0.05, strike=40.0,
                      x0=[40.0, 40.0], sigma=0.2, payoff="put")
        assert payoff(np.array([[50.0, 30.0]]), m)[0] == 0.0

    def test_geom_put_below_arith_put(self):
        # AM-GM: geometric mean <= arithmetic mean on positive states
        gen = np.random.default_rng(0)
        x = gen.uniform(5.0, 80.0, size=(500, 3))
        base = dict(dim=3, T=1.0, dt=0.5, r=0.05, strike=40.0,
                    x0=[40.0] * 3, sigma=0.2)
        arith = payoff(x, ModelSpec(payoff="put", **base))
        geom = payoff(x, ModelSpec(payoff="geom_put", **base))
        assert np.all(geom >= arith - 1e-12)

    def test_mini_put_and_digital(self):
        base = dict(dim=2, T=1.0, dt=0.5, r=0.05, strike=40.0,
                    x0=[40.0] * 2, sigma=0.2)
        x = np.array([[30.0, 50.0]])
        assert payoff(x, ModelSpec(payoff="mini_put", **base))[0] == 10.0
        geo = np.sqrt(30.0 * 50.0)
        want = 1.0 if geo < 40.0 else 0.0
        assert payoff(x, ModelSpec(payoff="digital_put", **base))[0] == want

    def test_payoffs_nonnegative(self):
        gen = np.random.default_rng(1)
        x = gen.uniform(1.0, 120.0, size=(200, 2))
        base = dict(dim=2, T=1.0, dt=0.5, r=0.05, strike=40.0,
                    x0=[40.0] * 2, sigma=0.2)
        for tag in ("put", "call", "maxi_call", "mini_put", "geom_put",
                    "digital_put", "sv_put"):
            vals = payoff(x, ModelSpec(payoff=tag, **base))
            assert np.all(vals >= 0)


class TestDiscountedReward:
    def test_k_zero_equals_payoff(self):
        m = gbm_1d()
        x = np.array([[36.0]])
        assert discounted_reward(0, x, m)[0] == payoff(x, m)[0]

    def test_toy_put_value(self):
        # 1D put, strike 40, x=35, r=0.05, dt=0.1, k=4: e^{-0.02} * 5
        m = gbm_1d(r=0.05, dt=0.1, T=0.5)
        val = discounted_reward(4, np.array([[35.0]]), m)[0]
        assert val == pytest.approx(5 * np.exp(-0.02), abs=1e-12)
        assert round(val, 2) == 4.90

    def test_zero_rate_identity(self):
        m = gbm_1d(r=0.0)
        x = np.array([[36.0]])
        for k in (0, 5, 25):
            assert discounted_reward(k, x, m)[0] == payoff(x, m)[0]

    def test_nonincreasing_in_k(self):
        m = gbm_1d()
        x = np.array([[36.0]])
        vals = [discounted_reward(k, x, m)[0] for k in range(26)]
        assert np.all(np.diff(vals) <= 0)

    def test_k_out_of_range(self):
        with pytest.raises(ValueError, match="step"):
            discounted_reward(26, np.array([[36.0]]), gbm_1d())


class TestPaths:
    def test_zero_vol_deterministic_path(self):
        m = gbm_1d(sigma=1e-14, div=0.0)
        p = simulate_paths(m, 3, RandomStream(0))
        for k in range(26):
            want = 40.0 * np.exp(0.06 * k * 0.04)
            assert np.allclose(p[k], want, rtol=1e-9)

    def test_pathset_roundtrip(self, tmp_path):
        m = gbm_1d()
        ps = PathSet(simulate_paths(m, 50, RandomStream(8)), instance="M1",
                     seed=8)
        f = tmp_path / "paths.npz"
        ps.save(f)
        back = PathSet.load(f)
        assert np.array_equal(back.states, ps.states)
        assert back.instance == "M1" and back.seed == 8

    def test_same_seed_same_paths(self):
        m = gbm_1d()
        a = simulate_paths(m, 10, RandomStream(3))
        b = simulate_paths(m, 10, RandomStream(3))
        assert np.array_equal(a, b)
