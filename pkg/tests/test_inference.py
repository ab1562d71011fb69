import math

import numpy as np
import pytest
from scipy import stats

from oscselect import inference as I
from oscselect import priors as P
from oscselect.oscillators import predict_model1, predict_model2
from oscselect.signals import MagnitudeSpectrum

TRUE_THETA2 = np.array([38494.0, 0.925, 0.12, 722.0, 9.33, 0.03])


def spectrum(mags, df=0.5):
    mags = np.asarray(mags, dtype=float)
    return MagnitudeSpectrum(np.arange(mags.size) * df, mags)


def normal_1d_problem(x_obs=1.0):
    return dict(
        log_prior=lambda t: stats.norm.logpdf(t[:, 0]),
        prior_sampler=lambda n, g: g.standard_normal((n, 1)),
        log_likelihood=lambda t: stats.norm.logpdf(x_obs, t[:, 0], 1.0),
    )


class TestResidual:
    def test_exact_prediction_gives_zero(self, twin_spectra, true_one):
        aw = twin_spectra["acc_frame"]
        obs = predict_model1(true_one, aw)
        np.testing.assert_array_equal(I.residual("model1", true_one, obs, aw), np.zeros(len(aw)))

    def test_zero_input(self, twin_spectra):
        obs = twin_spectra["acc_mass"]
        zero = spectrum(np.zeros(len(obs)), obs.freqs[1])
        np.testing.assert_array_equal(I.residual("model2", TRUE_THETA2, obs, zero), obs.mags)

    def test_twin_means(self, twin_spectra):
        eta = I.residual("model2", TRUE_THETA2, twin_spectra["acc_mass"], twin_spectra["force"])
        assert np.all(np.isfinite(eta)) and np.linalg.norm(eta) > 0

    def test_grid_mismatch(self, twin_spectra):
        with pytest.raises(I.InferenceError, match="grid"):
            I.residual("model1", [38494, 0.925, 0.12], twin_spectra["acc_mass"], spectrum(np.ones(5)))


class TestLikelihood:
    obs = spectrum([0.0, 3.0, 4.0, 1.0])

    def test_noise_model_sigma2(self):
        nm = I.NoiseModel.from_observed(self.obs, 0.05)
        assert nm.sigma2 == pytest.approx(0.05**2 * 26.0)
        np.testing.assert_allclose(nm.variance, 0.05**2 * 26.0)

    def test_zero_residual(self):
        nm = I.NoiseModel.from_observed(self.obs, 0.05)
        val = I.gaussian_loglike(np.zeros(4), nm.variance)[0]
        assert val == pytest.approx(-(4 / 2) * math.log(2 * math.pi * nm.sigma2), rel=1e-14)

    def test_doubling_c(self):
        eta = np.array([0.3, -0.2, 0.1, 0.5])
        a = I.NoiseModel.from_observed(self.obs, 0.05)
        b = I.NoiseModel.from_observed(self.obs, 0.10)
        quad = lambda nm: 0.5 * np.sum(eta**2) / nm.sigma2
        norm = lambda nm: I.gaussian_loglike(np.zeros(4), nm.variance)[0]
        assert quad(a) / quad(b) == pytest.approx(4.0, rel=1e-12)
        assert norm(b) - norm(a) == pytest.approx(-4 * math.log(2), rel=1e-12)
        full = lambda nm: I.gaussian_loglike(eta, nm.variance)[0]
        assert full(a) == pytest.approx(norm(a) - quad(a), rel=1e-12)

    def test_dense_mvn_oracle(self, twin_spectra):
        obs, fh = twin_spectra["acc_mass"], twin_spectra["force"]
        nm = I.NoiseModel.from_observed(obs, 0.05)
        idx = slice(0, 120)  # keep the dense covariance small
        obs_s = MagnitudeSpectrum(obs.freqs[idx], obs.mags[idx])
        fh_s = MagnitudeSpectrum(fh.freqs[idx], fh.mags[idx])
        nm_s = I.NoiseModel(0.05, np.full(120, nm.sigma2))
        for scale in (1.0, 1.03, 0.95):
            theta = TRUE_THETA2 * scale
            eta = obs_s.mags - predict_model2(P.to_physical(theta), fh_s).mags
            oracle = stats.multivariate_normal(np.zeros(120), nm.sigma2 * np.eye(120)).logpdf(eta)
            got = I.log_likelihood("model2", theta, obs_s, fh_s, nm_s)
            assert got == pytest.approx(oracle, rel=1e-10)

    def test_per_bin_mode(self):
        nm = I.NoiseModel.from_observed(self.obs, 0.1, "per_bin")
        assert nm.variance[1] == pytest.approx(0.01 * 9)
        assert nm.variance[0] > 0  # floored

    def test_nonfinite_residual(self):
        with pytest.raises(I.InferenceError):
            I.gaussian_loglike(np.array([np.nan, 0.0]), np.ones(2))

    def test_zero_observation_rejected(self):
        with pytest.raises(I.InferenceError):
            I.NoiseModel.from_observed(spectrum(np.zeros(4)), 0.05)

    def test_vectorised_matches_scalar(self, twin_spectra):
        obs, aw = twin_spectra["acc_mass"], twin_spectra["acc_frame"]
        nm = I.NoiseModel.from_observed(obs, 0.05)
        rows = P.sample_prior(P.default_priors("model1"), 5, np.random.default_rng(0))
        f = I.make_log_likelihood("model1", obs, aw, nm)
        vec = f(rows)
        for r, v in zip(rows, vec):
            assert v == pytest.approx(I.log_likelihood("model1", r, obs, aw, nm), rel=1e-12)
        bad = rows.copy()
        bad[0, 0] = -1.0
        assert f(bad)[0] == -np.inf


class TestTMCMC:
    def test_conjugate_normal(self):
        n = 1000
        ens = I.run_tmcmc(**normal_1d_problem(), n_s=n, rng=np.random.default_rng(0))
        s = ens.samples[:, 0]
        assert abs(s.mean() - 0.5) < 3 * math.sqrt(0.5 / n)
        assert s.var() == pytest.approx(0.5, rel=0.10)
        assert ens.log_evidence == pytest.approx(stats.norm.logpdf(1.0, 0.0, math.sqrt(2.0)), abs=0.05)
        assert stats.norm.logpdf(1.0, 0.0, math.sqrt(2.0)) == pytest.approx(-1.5155, abs=1e-4)

    def test_flat_likelihood(self):
        const = -3.7
        ens = I.run_tmcmc(
            log_prior=lambda t: stats.norm.logpdf(t[:, 0]),
            prior_sampler=lambda n, g: g.standard_normal((n, 1)),
            log_likelihood=lambda t: np.full(t.shape[0], const),
            n_s=2000,
            rng=np.random.default_rng(1),
        )
        assert len(ens.stages) == 1 and ens.stages[0].beta == 1.0
        assert abs(ens.log_evidence - const) < 1e-10
        s = ens.samples[:, 0]
        assert abs(s.mean()) < 4 / math.sqrt(2000)
        assert s.var() == pytest.approx(1.0, rel=0.15)

    def test_sharp_likelihood_tempers_in_stages(self):
        ens = I.run_tmcmc(
            log_prior=lambda t: stats.norm.logpdf(t[:, 0]),
            prior_sampler=lambda n, g: g.standard_normal((n, 1)),
            log_likelihood=lambda t: stats.norm.logpdf(0.8, t[:, 0], 0.05),
            n_s=1000,
            rng=np.random.default_rng(2),
            cfg=I.TmcmcConfig(mh_steps=3),
        )
        betas = ens.betas
        assert len(betas) > 2 and betas[0] == 0.0 and betas[-1] == 1.0
        assert np.all(np.diff(betas) > 0)
        post_var = 1 / (1 + 1 / 0.05**2)
        post_mean = post_var * 0.8 / 0.05**2
        assert ens.samples[:, 0].mean() == pytest.approx(post_mean, abs=4 * math.sqrt(post_var / 200))
        for st in ens.stages:
            assert 0 < st.ess <= 1000 and 0 <= st.acceptance_rate <= 1

    def test_deterministic(self):
        a = I.run_tmcmc(**normal_1d_problem(), n_s=300, rng=np.random.default_rng(5))
        b = I.run_tmcmc(**normal_1d_problem(), n_s=300, rng=np.random.default_rng(5))
        assert a.samples.tobytes() == b.samples.tobytes() and a.log_evidence == b.log_evidence

    def test_degenerate_weights(self):
        with pytest.raises(I.InferenceError, match="degenerate"):
            I.run_tmcmc(
                log_prior=lambda t: np.zeros(t.shape[0]),
                prior_sampler=lambda n, g: g.standard_normal((n, 1)),
                log_likelihood=lambda t: np.full(t.shape[0], -np.inf),
                n_s=100,
                rng=np.random.default_rng(0),
            )

    def test_max_stages(self):
        with pytest.raises(I.InferenceError, match="stages"):
            I.run_tmcmc(
                log_prior=lambda t: stats.norm.logpdf(t[:, 0]),
                prior_sampler=lambda n, g: g.standard_normal((n, 1)),
                log_likelihood=lambda t: stats.norm.logpdf(0.0, t[:, 0], 1e-4),
                n_s=200,
                rng=np.random.default_rng(0),
                cfg=I.TmcmcConfig(max_stages=2),
            )

    def test_small_ensemble_rejected(self):
        with pytest.raises(I.InferenceError):
            I.run_tmcmc(**normal_1d_problem(), n_s=50, rng=np.random.default_rng(0))

    def test_support_respected(self):
        # prior N(0,1) truncated to x > 0 by the support check
        ens = I.run_tmcmc(
            log_prior=lambda t: stats.norm.logpdf(t[:, 0]),
            prior_sampler=lambda n, g: np.abs(g.standard_normal((n, 1))),
            log_likelihood=lambda t: stats.norm.logpdf(-0.5, t[:, 0], 0.3),
            n_s=500,
            rng=np.random.default_rng(3),
            in_support=lambda t: t[:, 0] > 0,
        )
        assert np.all(ens.samples > 0)

    def test_next_increment_hits_target(self):
        log_l = np.random.default_rng(0).normal(-50, 20, size=1000)
        d = I.next_increment(log_l, 0.0, 1.0)
        assert 0 < d < 1
        assert I._weight_cov(log_l, d) == pytest.approx(1.0, rel=1e-6)


class TestEnsembleIO:
    def test_round_trip(self, tmp_path):
        ens = I.run_tmcmc(**normal_1d_problem(), n_s=200, rng=np.random.default_rng(0))
        ens.names, ens.model_id, ens.seed = ("x",), "toy", 7
        csv_path, json_path = ens.save(tmp_path / "e.csv")
        back = I.PosteriorEnsemble.load(csv_path)
        assert back.samples.tobytes() == ens.samples.tobytes()
        assert back.stages == ens.stages and back.log_evidence == ens.log_evidence
        assert back.config == ens.config and back.seed == 7
        assert csv_path.read_text().splitlines()[0] == "x"


class TestBands:
    def test_identical_rows(self):
        rows = np.tile([1.0, 2.0], (50, 1))
        b = I.posterior_bands(rows, lambda r: r * 3.0, [0.0, 1.0])
        np.testing.assert_array_equal(b.lo95, b.mean)
        np.testing.assert_array_equal(b.hi95, b.mean)

    def test_quantiles_sort_oracle(self):
        g = np.random.default_rng(8)
        rows = g.lognormal(size=(1000, 4))
        b = I.posterior_bands(rows, lambda r: r, np.arange(4.0))

        def q(col, p):
            s = sorted(col)
            h = (len(s) - 1) * p
            lo = math.floor(h)
            return s[lo] + (h - lo) * (s[lo + 1] - s[lo])

        for j in range(4):
            assert b.lo95[j] == q(rows[:, j], 0.025)
            assert b.hi95[j] == q(rows[:, j], 0.975)
            assert b.lo95[j] <= b.mean[j] <= b.hi95[j]

    def test_csv(self, tmp_path):
        b = I.PosteriorBands(np.array([0.0, 1.0]), np.array([1.0, 2.0]), np.array([0.5, 1.0]), np.array([2.0, 3.0]))
        lines = b.to_csv(tmp_path / "b.csv").read_text().splitlines()
        assert lines[0] == "freq_hz,mean,lo95,hi95"


@pytest.fixture(scope="module")
def model2_run(twin_spectra):
    obs, fh = twin_spectra["acc_mass"], twin_spectra["force"]
    ens = I.calibrate("model2", obs, fh, n_s=1000, seed=3)
    return ens, obs, fh


@pytest.mark.slow
class TestTwinCalibration:
    def test_stages_monotone(self, model2_run):
        ens = model2_run[0]
        assert ens.betas[-1] == 1.0 and np.all(np.diff(ens.betas) > 0)
        assert ens.samples.shape == (1000, 6)
        assert np.all(P.in_support(ens.samples))

    def test_band_narrowing(self, model2_run):
        ens, obs, fh = model2_run
        pred = I.spectrum_predictor("model2", fh)
        prior_rows = P.sample_prior(P.default_priors("model2"), 1000, np.random.default_rng(0))
        prior_b = I.posterior_bands(prior_rows, pred, fh.freqs)
        post_b = I.posterior_bands(ens, pred, fh.freqs)
        assert post_b.mean_width() < prior_b.mean_width()
        assert np.all(post_b.lo95 <= post_b.mean) and np.all(post_b.mean <= post_b.hi95)
