"""Gaussian spectral discrepancy, Transitional MCMC and predictive bands."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from . import priors as pr
from ._io import atomic_write_json, atomic_write_text, csv_text
from .oscillators import ModelError, OneMassParams, TwoMassParams, predict_batch
from .signals import MagnitudeSpectrum

log = logging.getLogger(__name__)

NOISE_MODES = ("global_norm", "per_bin")
# per_bin variances are floored at (c * PER_BIN_FLOOR * max|y|)^2 to keep empty bins finite
PER_BIN_FLOOR = 1e-3


class InferenceError(RuntimeError):
    """Numerical failure inside the sampler or the likelihood."""


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean normal discrepancy with diagonal covariance.

    ``global_norm``: every bin has variance ``c^2 * ||y_obs||^2``.
    ``per_bin``: bin j has variance ``c^2 * y_obs_j^2`` (floored).
    """

    c: float
    variance: np.ndarray
    mode: str = "global_norm"

    @classmethod
    def from_observed(cls, observed: MagnitudeSpectrum, c: float = 0.05, mode: str = "global_norm") -> "NoiseModel":
        if not c > 0:
            raise InferenceError("c must be positive")
        y = observed.mags
        if mode == "global_norm":
            var = np.full(y.size, c * c * float(np.dot(y, y)))
        elif mode == "per_bin":
            floor = (c * PER_BIN_FLOOR * float(np.max(y))) ** 2
            var = np.maximum(c * c * y * y, floor)
        else:
            raise InferenceError(f"noise_mode must be one of {NOISE_MODES}")
        if not np.all(var > 0):
            raise InferenceError("observed spectrum is identically zero; noise variance undefined")
        return cls(float(c), var, mode)

    @property
    def sigma2(self) -> float:
        """The common variance (first bin's variance in per_bin mode)."""
        return float(self.variance[0])


@dataclass(frozen=True)
class TmcmcConfig:
    target_cov: float = 1.0
    scale: float = 0.2
    max_stages: int = 50
    c: float = 0.05
    noise_mode: str = "global_norm"
    mh_steps: int = 1

    def __post_init__(self):
        if not (self.target_cov > 0 and self.scale > 0 and self.c > 0):
            raise InferenceError("target_cov, scale and c must be positive")
        if self.max_stages < 1 or self.mh_steps < 1:
            raise InferenceError("max_stages and mh_steps must be >= 1")
        if self.noise_mode not in NOISE_MODES:
            raise InferenceError(f"noise_mode must be one of {NOISE_MODES}")


@dataclass(frozen=True)
class StageDiag:
    beta: float
    ess: float
    acceptance_rate: float
    log_mean_weight: float


@dataclass
class PosteriorEnsemble:
    samples: np.ndarray
    log_evidence: float
    stages: list[StageDiag]
    seed: int | None = None
    names: tuple[str, ...] = ()
    model_id: str | None = None
    config: TmcmcConfig | None = None

    @property
    def n_s(self) -> int:
        return self.samples.shape[0]

    @property
    def betas(self) -> list[float]:
        return [0.0] + [s.beta for s in self.stages]

    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    def credible_interval(self, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
        a = (1.0 - level) / 2.0
        lo, hi = np.quantile(self.samples, [a, 1.0 - a], axis=0)
        return lo, hi

    def save(self, csv_path, json_path=None) -> tuple[Path, Path]:
        csv_path = Path(csv_path)
        json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
        names = self.names or tuple(f"x{i}" for i in range(self.samples.shape[1]))
        atomic_write_text(csv_path, csv_text(names, self.samples.T))
        meta = {
            "model_id": self.model_id,
            "seed": self.seed,
            "n_s": self.n_s,
            "coordinates": list(names),
            "log_evidence": self.log_evidence,
            "config": asdict(self.config) if self.config else None,
            "stages": [asdict(s) for s in self.stages],
        }
        atomic_write_json(json_path, meta)
        return csv_path, json_path

    @classmethod
    def load(cls, csv_path, json_path=None) -> "PosteriorEnsemble":
        csv_path = Path(csv_path)
        json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
        cols = _read_csv_columns(csv_path)
        meta = json.loads(json_path.read_text(encoding="utf-8"))
        names = tuple(meta["coordinates"])
        samples = np.column_stack([cols[n] for n in names])
        cfg = TmcmcConfig(**meta["config"]) if meta.get("config") else None
        return cls(
            samples=samples,
            log_evidence=float(meta["log_evidence"]),
            stages=[StageDiag(**s) for s in meta["stages"]],
            seed=meta.get("seed"),
            names=names,
            model_id=meta.get("model_id"),
            config=cfg,
        )


def _read_csv_columns(path) -> dict[str, np.ndarray]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    data = np.array([ln.split(",") for ln in lines[1:] if ln], dtype=float).reshape(-1, len(header))
    return {h: data[:, i] for i, h in enumerate(header)}


@dataclass(frozen=True)
class PosteriorBands:
    freqs: np.ndarray
    mean: np.ndarray
    lo95: np.ndarray
    hi95: np.ndarray

    def mean_width(self) -> float:
        return float(np.mean(self.hi95 - self.lo95))

    def to_csv(self, path) -> Path:
        return atomic_write_text(
            path, csv_text(("freq_hz", "mean", "lo95", "hi95"), (self.freqs, self.mean, self.lo95, self.hi95))
        )


# --- discrepancy model -----------------------------------------------------


def _as_physical_rows(model_id: str, theta) -> np.ndarray:
    """Physical parameter rows from Params objects or sampled-coordinate arrays."""
    if isinstance(theta, (OneMassParams, TwoMassParams)):
        return theta.as_array()[None, :]
    arr = np.atleast_2d(np.asarray(theta, dtype=float))
    return pr.physical_array(model_id, arr)


def residual_batch(model_id: str, theta, observed: MagnitudeSpectrum, input_spec: MagnitudeSpectrum) -> np.ndarray:
    if not observed.same_grid(input_spec):
        raise InferenceError("observed and input spectra are on different frequency grids")
    pred = predict_batch(model_id, _as_physical_rows(model_id, theta), input_spec)
    return observed.mags[None, :] - pred


def residual(model_id: str, theta, observed: MagnitudeSpectrum, input_spec: MagnitudeSpectrum) -> np.ndarray:
    """eta = observed - predicted, for one parameter vector."""
    return residual_batch(model_id, theta, observed, input_spec)[0]


def gaussian_loglike(eta: np.ndarray, variance: np.ndarray) -> np.ndarray:
    eta = np.atleast_2d(eta)
    if not np.all(np.isfinite(eta)):
        raise InferenceError("non-finite residual")
    norm = -0.5 * float(np.sum(np.log(2.0 * np.pi * variance)))
    return norm - 0.5 * np.sum(eta * eta / variance, axis=1)


def log_likelihood(model_id: str, theta, observed, input_spec, noise: NoiseModel) -> float:
    eta = residual(model_id, theta, observed, input_spec)
    return float(gaussian_loglike(eta, noise.variance)[0])


def make_log_likelihood(model_id: str, observed, input_spec, noise: NoiseModel) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorised log-likelihood over rows of sampled coordinates."""
    if not observed.same_grid(input_spec):
        raise InferenceError("observed and input spectra are on different frequency grids")

    def loglike(theta: np.ndarray) -> np.ndarray:
        theta = np.atleast_2d(theta)
        out = np.full(theta.shape[0], -np.inf)
        ok = pr.in_support(theta)
        if np.any(ok):
            try:
                eta = residual_batch(model_id, theta[ok], observed, input_spec)
            except ModelError:
                return out
            out[ok] = gaussian_loglike(eta, noise.variance)
        return out

    return loglike


# --- TMCMC -----------------------------------------------------------------


def _weight_cov(log_l: np.ndarray, dbeta: float) -> float:
    lw = dbeta * log_l
    finite = np.isfinite(lw)
    if not np.any(finite):
        return np.inf
    w = np.where(finite, np.exp(lw - np.max(lw[finite])), 0.0)
    mu = w.mean()
    return float(w.std() / mu)


def next_increment(log_l: np.ndarray, beta: float, target_cov: float, tol: float = 1e-10) -> float:
    """Tempering increment whose plausibility-weight c.o.v. equals ``target_cov``."""
    room = 1.0 - beta
    if _weight_cov(log_l, room) <= target_cov:
        return room
    lo, hi = 0.0, room
    while hi - lo > tol * max(room, 1e-300):
        mid = 0.5 * (lo + hi)
        if _weight_cov(log_l, mid) > target_cov:
            hi = mid
        else:
            lo = mid
    # lo can only be zero if a single particle dominates even at tiny increments
    return lo if lo > 0 else hi


def _weighted_cov(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    mu = w @ x
    d = x - mu
    return np.atleast_2d((d * w[:, None]).T @ d)


def run_tmcmc(
    log_prior: Callable[[np.ndarray], np.ndarray],
    prior_sampler: Callable[[int, np.random.Generator], np.ndarray],
    log_likelihood: Callable[[np.ndarray], np.ndarray],
    n_s: int,
    rng: np.random.Generator,
    cfg: TmcmcConfig = TmcmcConfig(),
    in_support: Callable[[np.ndarray], np.ndarray] | None = None,
) -> PosteriorEnsemble:
    """Transitional MCMC from the prior to the posterior.

    ``log_prior`` and ``log_likelihood`` take an ``(n, dim)`` matrix and return
    ``n`` values; ``in_support`` flags rows inside the prior support (default:
    everywhere ``log_prior`` is finite).  Each stage picks the increment by
    bisection on the weight c.o.v., resamples multinomially, then applies
    ``cfg.mh_steps`` Metropolis moves per particle with a Gaussian proposal of
    covariance ``scale^2`` times the weighted stage covariance.
    """
    if n_s < 100:
        raise InferenceError("n_s must be >= 100")
    theta = np.atleast_2d(np.asarray(prior_sampler(n_s, rng), dtype=float))
    if theta.shape[0] != n_s:
        raise InferenceError("prior sampler returned the wrong number of rows")
    dim = theta.shape[1]
    log_l = np.asarray(log_likelihood(theta), dtype=float)
    if not np.any(np.isfinite(log_l)):
        raise InferenceError("degenerate weights: every prior sample has zero likelihood")

    beta, log_ev = 0.0, 0.0
    stages: list[StageDiag] = []
    while beta < 1.0:
        if len(stages) >= cfg.max_stages:
            raise InferenceError(f"no convergence to beta=1 within {cfg.max_stages} stages (beta={beta:.3g})")
        dbeta = next_increment(log_l, beta, cfg.target_cov)
        beta_new = 1.0 if beta + dbeta >= 1.0 - 1e-12 else beta + dbeta
        dbeta = beta_new - beta

        lw = np.where(np.isfinite(log_l), dbeta * log_l, -np.inf)
        log_mean_w = float(logsumexp(lw) - math.log(n_s))
        if not math.isfinite(log_mean_w):
            raise InferenceError("degenerate weights at stage %d" % (len(stages) + 1))
        w = np.exp(lw - logsumexp(lw))
        w /= w.sum()
        ess = float(1.0 / np.sum(w * w))
        log_ev += log_mean_w

        prop_cov = cfg.scale**2 * _weighted_cov(theta, w)
        chol = _safe_cholesky(prop_cov)

        idx = rng.choice(n_s, size=n_s, replace=True, p=w)
        theta, log_l = theta[idx], log_l[idx]
        log_p = np.asarray(log_prior(theta), dtype=float)

        accepted = 0
        for _ in range(cfg.mh_steps):
            cand = theta + rng.standard_normal((n_s, dim)) @ chol.T
            ok = in_support(cand) if in_support is not None else np.ones(n_s, dtype=bool)
            lp_c = np.full(n_s, -np.inf)
            ll_c = np.full(n_s, -np.inf)
            if np.any(ok):
                lp_c[ok] = log_prior(cand[ok])
                ok &= np.isfinite(lp_c)
            if np.any(ok):
                ll_c[ok] = log_likelihood(cand[ok])
            cur = log_p + beta_new * log_l
            new = np.where(ok, lp_c + beta_new * ll_c, -np.inf)
            log_u = np.log(rng.random(n_s))
            with np.errstate(invalid="ignore"):
                acc = ok & np.isfinite(new) & (log_u < new - cur)
            theta = np.where(acc[:, None], cand, theta)
            log_l = np.where(acc, ll_c, log_l)
            log_p = np.where(acc, lp_c, log_p)
            accepted += int(acc.sum())

        rate = accepted / (n_s * cfg.mh_steps)
        stages.append(StageDiag(beta_new, ess, rate, log_mean_w))
        log.debug("stage %d: beta=%.6g ess=%.1f acc=%.3f", len(stages), beta_new, ess, rate)
        beta = beta_new

    return PosteriorEnsemble(theta, float(log_ev), stages, config=cfg)


def _safe_cholesky(cov: np.ndarray) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    jitter = 0.0
    scale = float(np.max(np.abs(np.diag(cov)))) or 1.0
    for _ in range(10):
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            jitter = scale * 1e-12 if jitter == 0 else jitter * 100
    raise InferenceError("proposal covariance is not positive definite")


def calibrate(
    model_id: str,
    observed: MagnitudeSpectrum,
    input_spec: MagnitudeSpectrum,
    n_s: int = 1000,
    seed: int = 0,
    cfg: TmcmcConfig = TmcmcConfig(),
    prior: pr.PriorSpec | None = None,
) -> PosteriorEnsemble:
    """Posterior ensemble for one candidate model on a measured spectrum pair."""
    prior = prior or pr.default_priors(model_id)
    noise = NoiseModel.from_observed(observed, cfg.c, cfg.noise_mode)
    rng = np.random.default_rng(seed)
    ens = run_tmcmc(
        log_prior=lambda t: pr.log_prior_pdf(prior, t),
        prior_sampler=lambda n, g: pr.sample_prior(prior, n, g),
        log_likelihood=make_log_likelihood(model_id, observed, input_spec, noise),
        n_s=n_s,
        rng=rng,
        cfg=cfg,
        in_support=pr.in_support,
    )
    ens.seed, ens.names, ens.model_id = seed, prior.names, model_id
    return ens


def posterior_bands(
    ensemble: PosteriorEnsemble | np.ndarray,
    predictor: Callable[[np.ndarray], np.ndarray],
    grid: Sequence[float],
) -> PosteriorBands:
    """Per-frequency sample mean and 2.5 / 97.5 % quantiles of ``predictor(rows)``."""
    rows = ensemble.samples if isinstance(ensemble, PosteriorEnsemble) else np.atleast_2d(ensemble)
    if rows.shape[0] == 0:
        raise InferenceError("empty ensemble")
    pred = np.atleast_2d(predictor(rows))
    lo, hi = np.quantile(pred, [0.025, 0.975], axis=0)
    return PosteriorBands(np.asarray(grid, dtype=float), pred.mean(axis=0), lo, hi)


def spectrum_predictor(model_id: str, input_spec: MagnitudeSpectrum) -> Callable[[np.ndarray], np.ndarray]:
    """Predictor mapping sampled-coordinate rows to predicted magnitudes."""
    return lambda rows: predict_batch(model_id, pr.physical_array(model_id, rows), input_spec)
