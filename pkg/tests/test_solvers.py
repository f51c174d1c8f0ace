import numpy as np
import pytest

from rmcstop.emulators import ConstantFit
from rmcstop.model import ModelSpec, discounted_reward, simulate_paths
from rmcstop.sampling import RandomStream
from rmcstop.solvers import (
    PolicyFit,
    SolverConfig,
    _window_responses,
    acquisition_smcu,
    pathwise_stop,
    solve_fixed,
    solve_ls,
    solve_piecewise_bw,
    solve_seq,
    solve_seq_batch,
    solve_tvr,
)


def put_1d(**over):
    kw = dict(dim=1, T=1.0, dt=0.04, r=0.06, strike=40.0, x0=[40.0],
              sigma=0.2, payoff="put", dynamics="gbm")
    kw.update(over)
    return ModelSpec(**kw)


def put_1d_short(**over):
    return put_1d(T=0.5, dt=0.1, **over)


class TestSolverConfig:
    def test_tvr_forces_one_step_lookahead(self):
        cfg = SolverConfig(solver="tvr", method="lm", w=7)
        assert cfg.w == 1

    def test_seq_requires_gp(self):
        with pytest.raises(ValueError, match="GP"):
            SolverConfig(solver="seq", method="lm")

    def test_unknown_solver(self):
        with pytest.raises(ValueError, match="solver"):
            SolverConfig(solver="nope")


class TestWindowResponses:
    def test_ls_and_tvr_agree_at_terminal_step(self):
        # both reduce to h(K) - h(K-1) at k = K-1, path by path
        gen = np.random.default_rng(0)
        k_steps = 5
        n = 40
        h = gen.uniform(0, 3, size=(k_steps + 1, n))
        itm = h > 1.0
        t_pred = gen.normal(size=(k_steps + 1, n))
        t_pred[k_steps] = 0.0
        ls = _window_responses(k_steps - 1, None, h, itm, t_pred, k_steps)
        tvr = _window_responses(k_steps - 1, 1, h, itm, t_pred, k_steps)
        assert np.allclose(ls, tvr)
        assert np.allclose(ls, h[k_steps] - h[k_steps - 1])

    def test_full_window_realizes_first_stop(self):
        h = np.array([[1.0], [2.0], [3.0], [0.5]])
        itm = np.ones((4, 1), dtype=bool)
        t_pred = np.array([[9.0], [9.0], [-1.0], [0.0]])
        y = _window_responses(0, None, h, itm, t_pred, 3)
        assert y[0] == pytest.approx(3.0 - 1.0)  # stops at s=2

    def test_cap_uses_clamped_plugin_value(self):
        h = np.array([[1.0], [2.0], [3.0], [0.5]])
        itm = np.ones((4, 1), dtype=bool)
        t_pred = np.array([[0.0], [-5.0], [9.0], [0.0]])
        # w=1: cap at s=1, plug-in h(1) + max(0, -5) - h(0) = 1.0
        y = _window_responses(0, 1, h, itm, t_pred, 3)
        assert y[0] == pytest.approx(1.0)


class TestPathwiseStop:
    @staticmethod
    def _const_policy(model, value):
        return [ConstantFit(value, model.dim, step=k)
                for k in range(model.n_steps)]

    def test_always_negative_stops_immediately(self):
        m = put_1d_short()
        fits = self._const_policy(m, -1.0)
        states = np.tile([[36.0]], (m.n_steps + 1, 1, 1))
        tau, reward = pathwise_stop(fits, states, 0, m)
        assert tau[0] == 1
        want = discounted_reward(1, np.array([[36.0]]), m)[0] - 4.0
        assert reward[0] == pytest.approx(want)

    def test_always_positive_runs_to_maturity(self):
        m = put_1d_short()
        fits = self._const_policy(m, 1.0)
        states = np.tile([[36.0]], (m.n_steps + 1, 1, 1))
        tau, reward = pathwise_stop(fits, states, 0, m)
        assert tau[0] == m.n_steps
        want = discounted_reward(m.n_steps, np.array([[36.0]]), m)[0] - 4.0
        assert reward[0] == pytest.approx(want)

    def test_w1_matches_tvr_response(self):
        m = put_1d_short()
        c = 0.7
        fits = self._const_policy(m, c)
        states = np.tile([[36.0]], (m.n_steps + 1, 1, 1))
        _, reward = pathwise_stop(fits, states[:2], 0, m, w=1)
        h0 = discounted_reward(0, np.array([[36.0]]), m)[0]
        h1 = discounted_reward(1, np.array([[36.0]]), m)[0]
        assert reward[0] == pytest.approx(h1 + c - h0)

    def test_out_of_money_never_stops(self):
        m = put_1d_short()
        fits = self._const_policy(m, -1.0)
        states = np.tile([[44.0]], (m.n_steps + 1, 1, 1))  # OTM everywhere
        tau, _ = pathwise_stop(fits, states, 0, m)
        assert tau[0] == m.n_steps

    def test_missing_fit_raises(self):
        m = put_1d_short()
        fits = self._const_policy(m, -1.0)
        fits[2] = None
        states = np.tile([[36.0, ]], (m.n_steps + 1, 1, 1))
        states[1] = 99.0  # keep path OTM at step 1 so the rule consults step 2
        with pytest.raises(ValueError, match="missing"):
            pathwise_stop(fits, states, 0, m)


class TestSolveLS:
    def test_structure_and_diagnostics(self):
        m = put_1d_short()
        policy = solve_ls(m, 2000, "lm", RandomStream(0), degree=2)
        assert policy.fits[0] is None
        assert all(policy.fits[k] is not None for k in range(1, m.n_steps))
        assert set(policy.diagnostics["n_k"]) == set(range(1, m.n_steps))
        assert policy.diagnostics["in_sample_price"] > 0

    def test_k1_single_decision_is_european(self):
        # one exercise date at maturity: no regression, price = E h(K)
        m = put_1d(T=0.5, dt=0.5)
        policy = solve_ls(m, 5000, "lm", RandomStream(1), degree=2)
        assert policy.fits == [None]
        paths = simulate_paths(m, 40_000, RandomStream(2))
        want = discounted_reward(1, paths[1], m).mean()
        assert policy.diagnostics["in_sample_price"] == pytest.approx(
            want, abs=0.15
        )

    def test_zero_payoff_model(self):
        m = put_1d_short(strike=1e-9)  # put far out of the money: payoff 0
        policy = solve_ls(m, 500, "lm", RandomStream(3), degree=2)
        assert policy.diagnostics["in_sample_price"] == 0.0
        assert all(isinstance(f, ConstantFit) for f in policy.fits[1:])

    def test_toy_quadratic_smoke_price(self):
        # tiny training set, quadratic basis: seed-dependent smoke value
        # (frozen seed lands near the published 2.50)
        m = put_1d_short()
        policy = solve_tvr(m, 20, "lm", RandomStream(16), degree=2,
                           itm_filter=False)
        assert policy.diagnostics["in_sample_price"] == pytest.approx(
            2.5682, abs=1e-3
        )
        assert 2.0 < policy.diagnostics["in_sample_price"] < 3.0

    def test_martingale_price_near_x0(self):
        # r = div = 0 and strike-0 call: h = mean(x) is a martingale, so the
        # timing value is ~0 and any rule prices near x0 (optional stopping)
        m = put_1d_short(r=0.0, strike=0.0, payoff="call")
        policy = solve_tvr(m, 4000, "lm", RandomStream(5), degree=2)
        assert policy.diagnostics["in_sample_price"] == pytest.approx(
            40.0, rel=0.02
        )

    def test_too_few_itm_rows_names_step(self):
        m = put_1d_short()
        with pytest.raises(ValueError, match="step"):
            solve_ls(m, 8, "lm", RandomStream(6), degree=3)

    def test_serialization_deterministic(self, tmp_path):
        m = put_1d_short()
        a = solve_ls(m, 1000, "lm", RandomStream(7), degree=2)
        b = solve_ls(m, 1000, "lm", RandomStream(7), degree=2)
        fa, fb = tmp_path / "a.bin", tmp_path / "b.bin"
        a.save(fa)
        b.save(fb)
        assert fa.read_bytes() == fb.read_bytes()

    def test_policy_roundtrip(self, tmp_path):
        m = put_1d_short()
        policy = solve_ls(m, 1000, "lm", RandomStream(8), degree=2)
        f = tmp_path / "p.bin"
        policy.save(f)
        back = PolicyFit.load(f)
        q = np.array([[35.0], [39.0]])
        for k in range(1, m.n_steps):
            assert np.allclose(back.fits[k].predict(q),
                               policy.fits[k].predict(q))


class TestSolveFixed:
    def test_lattice_gp_policy_fits_every_step(self):
        m = put_1d()
        sites = np.linspace(16, 40, 25)[:, None]
        policy = solve_fixed(m, "km", RandomStream(0), sites=sites, nrep=20,
                             km_cov=4.0, km_var=1.0)
        fitted = [k for k in range(m.n_steps) if policy.fits[k] is not None]
        assert fitted == list(range(1, m.n_steps))  # 24 fitted objects
        assert policy.diagnostics["budget"][1] == 25 * 20

    def test_degenerate_single_site_design(self):
        m = put_1d_short()
        policy = solve_fixed(m, "km", RandomStream(1),
                             sites=np.array([[36.0]]), nrep=30)
        assert all(f is not None for f in policy.fits[1:])

    def test_path_based_design_fallback(self):
        m = put_1d_short()
        policy = solve_fixed(m, "lm", RandomStream(2), n=500, nrep=1,
                             pilot_nsims=500, degree=2)
        assert policy.fits[1] is not None

    def test_pilot_box_design(self):
        m = put_1d_short()
        policy = solve_fixed(m, "kernel", RandomStream(3), pilot_quantile=0.02,
                             n=60, nrep=10, bandwidth=0.3)
        assert policy.fits[1] is not None

    def test_variable_budget_vector(self):
        m = put_1d_short()
        n_vec = [30, 30, 40, 40, 50]  # one entry per step k = 0..K-1
        policy = solve_fixed(m, "kernel", RandomStream(4), pilot_quantile=-1,
                             n=n_vec, nrep=5, bandwidth=0.5)
        n_k = policy.diagnostics["n_k"]
        assert n_k[1] <= 30 and n_k[4] <= 50


class TestBW:
    def test_returns_policy_and_prices(self):
        m = put_1d_short()
        test = simulate_paths(m, 4000, RandomStream(99))
        policy, prices = solve_piecewise_bw(m, 4000, 4, RandomStream(0),
                                            test_paths=test)
        assert "in_sample" in prices and "out_of_sample" in prices
        assert prices["in_sample"] > 0

    def test_single_bin_matches_global_linear_ls(self):
        # same paths (same stream tags), same degree-1 fit on the same rows
        from rmcstop.emulators import monomial_bases

        m = put_1d_short()
        policy_bw, _ = solve_piecewise_bw(m, 3000, 1, RandomStream(1))
        policy_lm = solve_ls(
            m, 3000, "lm", RandomStream(1),
            bases=monomial_bases([(1,)], 1),
        )
        q = np.array([[34.0], [38.0], [42.0]])
        for k in range(1, m.n_steps):
            assert np.allclose(policy_bw.fits[k].predict(q),
                               policy_lm.fits[k].predict(q), atol=1e-8)


class TestAcquisition:
    def test_zero_mean_rewards_uncertainty(self):
        assert acquisition_smcu(0.0, 2.0, 1.5) == pytest.approx(3.0)

    def test_zero_sd_never_positive(self):
        assert acquisition_smcu(2.0, 0.0, 1.0) == pytest.approx(-2.0)
        assert acquisition_smcu(0.0, 0.0, 1.0) == 0.0

    def test_hand_ranked_candidates(self):
        mean = np.array([0.0, 2.0, 0.0])
        sd = np.array([1.0, 1.0, 0.1])
        scores = acquisition_smcu(mean, sd, 1.0)
        assert int(np.argmax(scores)) == 0

    def test_duplicate_with_zero_sd_loses(self):
        mean = np.array([0.05, 0.0])
        sd = np.array([0.8, 0.0])  # second is a zero-sd duplicate site
        scores = acquisition_smcu(mean, sd, 1.0)
        assert int(np.argmax(scores)) == 0


class TestSequential:
    def test_final_equals_init_runs_zero_rounds(self):
        m = put_1d_short()
        policy = solve_seq(m, "km", RandomStream(0), init_size=10,
                           final_size=10, nrep=5, cand_len=40,
                           pilot_quantile=-1)
        assert all(v == 10 for v in policy.diagnostics["n_k"].values())

    def test_seq_grows_to_final_size(self):
        m = put_1d_short()
        policy = solve_seq(m, "km", RandomStream(1), init_size=8,
                           final_size=12, nrep=5, cand_len=40,
                           pilot_quantile=-1)
        assert all(v == 12 for v in policy.diagnostics["n_k"].values())
        assert all(v == 60 for v in policy.diagnostics["budget"].values())

    def test_final_size_cap(self):
        with pytest.raises(ValueError, match="guard"):
            solve_seq(put_1d_short(), "km", RandomStream(0), final_size=999)

    def test_fb_reproduces_seq_decisions(self):
        m = put_1d_short()
        seq = solve_seq(m, "km", RandomStream(2), init_size=8, final_size=11,
                        nrep=5, cand_len=30, pilot_quantile=-1)
        fb = solve_seq_batch(m, "km", RandomStream(2), heuristic="fb",
                             total_budget=11 * 5, r0=5, init_size=8,
                             cand_len=30, pilot_quantile=-1)
        q = np.array([[34.0], [37.0]])
        for k in range(1, m.n_steps):
            assert np.allclose(seq.fits[k].predict(q), fb.fits[k].predict(q))

    def test_adsa_budget_bookkeeping_exact(self):
        m = put_1d_short()
        policy = solve_seq_batch(m, "km", RandomStream(3), heuristic="adsa",
                                 total_budget=97, r0=10, init_size=6,
                                 cand_len=30, pilot_quantile=-1)
        for k, reps in policy.diagnostics["rep_counts"].items():
            assert reps.sum() == 97

    def test_budget_equal_to_init_runs_no_rounds(self):
        m = put_1d_short()
        policy = solve_seq_batch(m, "km", RandomStream(4), heuristic="adsa",
                                 total_budget=60, r0=10, init_size=6,
                                 cand_len=30, pilot_quantile=-1)
        assert all(v == 6 for v in policy.diagnostics["n_k"].values())

    def test_budget_below_init_rejected(self):
        with pytest.raises(ValueError, match="budget"):
            solve_seq_batch(put_1d_short(), "km", RandomStream(0),
                            total_budget=10, r0=10, init_size=6)


class TestPayoffFeatureRoundtrip:
    def test_policy_rebinds_payoff_basis(self, tmp_path):
        # fit over the full domain: the payoff hinge is a genuine feature
        # (on in-the-money rows a 1D payoff is affine in x, hence collinear)
        m = put_1d_short(payoff="call", strike=40.0)
        policy = solve_ls(m, 3000, "lm", RandomStream(9), degree=2,
                          include_payoff=True, itm_filter=False)
        f = tmp_path / "p.bin"
        policy.save(f)
        back = PolicyFit.load(f)
        q = np.array([[34.0], [41.0]])
        for k in range(1, m.n_steps):
            assert np.allclose(back.fits[k].predict(q),
                               policy.fits[k].predict(q), atol=1e-10)

    def test_unbound_payoff_fit_raises_clearly(self, tmp_path):
        from rmcstop.emulators import deserialize_fit, serialize_fit

        m = put_1d_short(payoff="call", strike=40.0)
        policy = solve_ls(m, 3000, "lm", RandomStream(9), degree=2,
                          include_payoff=True, itm_filter=False)
        bare = deserialize_fit(serialize_fit(policy.fits[3]))
        with pytest.raises(ValueError, match="payoff feature"):
            bare.predict(np.array([[35.0]]))
