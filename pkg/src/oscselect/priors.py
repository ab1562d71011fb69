"""Independent normal priors on the sampled coordinates.

Sampled coordinates are ``[k, m, D]`` for model1 and
``[k, m, D, k_f, m_f, D_f]`` for model2, with ``D`` the damping ratio.  The
physical damper constant is recovered by :func:`to_physical`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .oscillators import ModelError, OneMassParams, Params, TwoMassParams

COORDS = {
    "model1": ("k", "m", "D"),
    "model2": ("k", "m", "D", "k_f", "m_f", "D_f"),
}

# prior (mean, coefficient of variation) per coordinate
PRIOR_TABLE = {
    "k": (38494.0, 0.066),
    "m": (0.925, 0.053),
    "D": (0.12, 0.10),
    "k_f": (722.0, 0.066),
    "m_f": (9.33, 0.10),
    "D_f": (0.03, 0.15),
}

MAX_REJECTION_RATE = 0.5


class PriorError(ValueError):
    pass


@dataclass(frozen=True)
class MarginalNormal:
    name: str
    mean: float
    cov: float

    def __post_init__(self):
        if not (self.cov > 0 and math.isfinite(self.cov)):
            raise PriorError(f"{self.name}: c.o.v. must be positive")
        if not self.sd > 0:
            raise PriorError(f"{self.name}: standard deviation must be positive")

    @property
    def sd(self) -> float:
        return abs(self.mean) * self.cov


@dataclass(frozen=True)
class PriorSpec:
    model_id: str
    marginals: tuple[MarginalNormal, ...]

    def __post_init__(self):
        names = [mg.name for mg in self.marginals]
        if len(set(names)) != len(names):
            raise PriorError("duplicate coordinate names")
        if len(names) not in (3, 6):
            raise PriorError(f"expected 3 or 6 coordinates, got {len(names)}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(mg.name for mg in self.marginals)

    @property
    def dim(self) -> int:
        return len(self.marginals)

    @property
    def means(self) -> np.ndarray:
        return np.array([mg.mean for mg in self.marginals])

    @property
    def sds(self) -> np.ndarray:
        return np.array([mg.sd for mg in self.marginals])


def default_priors(model_id: str, overrides: Mapping[str, Mapping[str, float]] | None = None) -> PriorSpec:
    """Default priors, optionally with per-coordinate ``{"mean": .., "cov": ..}`` overrides."""
    if model_id not in COORDS:
        raise PriorError(f"unknown model id {model_id!r}")
    overrides = overrides or {}
    unknown = set(overrides) - set(COORDS[model_id])
    if unknown:
        raise PriorError(f"prior overrides for unknown coordinates: {sorted(unknown)}")
    marginals = []
    for name in COORDS[model_id]:
        mean, cov = PRIOR_TABLE[name]
        o = overrides.get(name, {})
        marginals.append(MarginalNormal(name, float(o.get("mean", mean)), float(o.get("cov", cov))))
    return PriorSpec(model_id, tuple(marginals))


def in_support(theta: np.ndarray) -> np.ndarray:
    """Row mask: every sampled coordinate strictly positive and finite."""
    theta = np.atleast_2d(theta)
    return np.all(np.isfinite(theta) & (theta > 0), axis=1)


def sample_prior(spec: PriorSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` rows of independent normal draws, nonpositive rows redrawn.

    Raises if more than half of the draws had to be rejected, which means the
    prior is badly misconfigured for a positive parameter.
    """
    if n < 1:
        raise PriorError("n must be >= 1")
    out = np.empty((n, spec.dim))
    filled = drawn = 0
    mu, sd = spec.means, spec.sds
    while filled < n:
        batch = rng.normal(mu, sd, size=(n - filled, spec.dim))
        drawn += batch.shape[0]
        ok = batch[in_support(batch)]
        out[filled : filled + ok.shape[0]] = ok
        filled += ok.shape[0]
        if drawn >= 20 and (drawn - filled) / drawn > MAX_REJECTION_RATE:
            raise PriorError(f"prior rejection rate {(drawn - filled) / drawn:.0%} > 50%; check means/c.o.v.")
    return out


def log_prior_pdf(spec: PriorSpec, theta) -> np.ndarray | float:
    """Sum of normal log-densities (truncation constant omitted).

    Accepts a single vector or an ``(n, dim)`` matrix.  The omitted constant
    is the same for every point, so it has no effect on tempering.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != spec.dim:
        raise PriorError(f"theta has dimension {theta.shape[-1]}, prior has {spec.dim}")
    z = (theta - spec.means) / spec.sds
    val = np.sum(-0.5 * z * z - np.log(spec.sds * math.sqrt(2 * math.pi)), axis=-1)
    return float(val) if theta.ndim == 1 else val


def damper_from_ratio(zeta, k, m):
    """Conventional damping ratio mapping b = 2 zeta sqrt(k m)."""
    return 2.0 * np.asarray(zeta) * np.sqrt(np.asarray(k) * np.asarray(m))


def ratio_from_damper(b, k, m):
    return np.asarray(b) / (2.0 * np.sqrt(np.asarray(k) * np.asarray(m)))


def physical_array(model_id: str, theta) -> np.ndarray:
    """Map sampled coordinates to physical rows ([m, b, k] or [m, b, k, m_f, b_f, k_f])."""
    theta = np.asarray(theta, dtype=float)
    k, m, d = theta[..., 0], theta[..., 1], theta[..., 2]
    cols = [m, damper_from_ratio(d, k, m), k]
    if model_id == "model2":
        kf, mf, df = theta[..., 3], theta[..., 4], theta[..., 5]
        cols += [mf, damper_from_ratio(df, kf, mf), kf]
    elif model_id != "model1":
        raise PriorError(f"unknown model id {model_id!r}")
    return np.stack(cols, axis=-1)


def to_physical(theta: Sequence[float], model_id: str | None = None) -> Params:
    theta = np.asarray(theta, dtype=float).ravel()
    if model_id is None:
        model_id = {3: "model1", 6: "model2"}.get(theta.size)
        if model_id is None:
            raise PriorError(f"cannot infer model from {theta.size} coordinates")
    if np.any(theta < 0) or np.any(np.delete(theta, [2, 5][: theta.size // 3]) <= 0):
        raise PriorError(f"sampled coordinates must be positive, got {theta.tolist()}")
    phys = physical_array(model_id, theta)
    try:
        return OneMassParams(*phys) if model_id == "model1" else TwoMassParams(*phys)
    except ModelError as exc:
        raise PriorError(str(exc)) from None


def from_physical(p: Params) -> np.ndarray:
    """Inverse of :func:`to_physical`."""
    row = [p.k, p.m, float(ratio_from_damper(p.b, p.k, p.m))]
    if isinstance(p, TwoMassParams):
        row += [p.k_f, p.m_f, float(ratio_from_damper(p.b_f, p.k_f, p.m_f))]
    return np.array(row)
