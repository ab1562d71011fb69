"""Synthetic stand-in for the frame/oscillator test rig.

The two-mass chain (oscillating mass on the frame, frame on ground, hammer
force on the frame) is simulated from rest with an exact zero-order-hold
discretisation of its 4-state model ``x = [z, w, z', w']``.  The force is
sampled at step midpoints and held over each step; the recorded force channel
carries those held values so the data are self-consistent.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.linalg import expm

from ._io import atomic_write_text, csv_text
from .oscillators import TwoMassParams, modal_frequencies
from .priors import PRIOR_TABLE, damper_from_ratio
from .signals import DATASET_COLUMNS, SignalError, TimeSeries, read_dataset_columns, uniform_dt

CHANNELS = DATASET_COLUMNS[1:]


class TwinError(ValueError):
    pass


def prior_mean_params() -> TwoMassParams:
    k, m, d = PRIOR_TABLE["k"][0], PRIOR_TABLE["m"][0], PRIOR_TABLE["D"][0]
    kf, mf, df = PRIOR_TABLE["k_f"][0], PRIOR_TABLE["m_f"][0], PRIOR_TABLE["D_f"][0]
    return TwoMassParams(
        m=m,
        b=float(damper_from_ratio(d, k, m)),
        k=k,
        m_f=mf,
        b_f=float(damper_from_ratio(df, kf, mf)),
        k_f=kf,
    )


@dataclass(frozen=True)
class HammerPulse:
    peak_force: float = 100.0
    duration: float = 2e-3
    start_time: float = 0.0

    def __post_init__(self):
        if self.peak_force < 0 or not self.duration > 0 or self.start_time < 0:
            raise TwinError("pulse needs peak_force >= 0, duration > 0, start_time >= 0")

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        s = (t - self.start_time) / self.duration
        inside = (s >= 0) & (s <= 1)
        return np.where(inside, self.peak_force * np.sin(np.pi * np.clip(s, 0, 1)), 0.0)


@dataclass(frozen=True)
class TwinConfig:
    """Twin settings.  Channels missing from ``noise_rms`` get
    ``noise_fraction`` times the clean channel RMS."""

    true_params: TwoMassParams = field(default_factory=prior_mean_params)
    fs: float = 1000.0
    n_samples: int = 8192
    pulse: HammerPulse = field(default_factory=HammerPulse)
    noise_rms: Mapping[str, float] = field(default_factory=dict)
    noise_fraction: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not self.fs > 0 or self.n_samples < 4:
            raise TwinError("fs must be positive and n_samples >= 4")
        unknown = set(self.noise_rms) - set(CHANNELS)
        if unknown:
            raise TwinError(f"noise_rms has unknown channels {sorted(unknown)}")
        if any(v < 0 for v in self.noise_rms.values()) or self.noise_fraction < 0:
            raise TwinError("noise levels must be >= 0")
        lo, hi = modal_frequencies("model2", self.true_params)
        if not self.fs > 2 * hi:
            raise TwinError(f"fs={self.fs} Hz does not exceed twice the upper mode ({hi:.2f} Hz)")
        if self.n_samples / self.fs * lo < 10:
            raise TwinError(f"record of {self.n_samples / self.fs:.3g} s holds fewer than 10 periods of the {lo:.3g} Hz mode")
        if self.pulse.start_time + self.pulse.duration >= self.n_samples / self.fs:
            raise TwinError("pulse does not fit in the record")

    @property
    def dt(self) -> float:
        return 1.0 / self.fs

    def to_dict(self) -> dict:
        d = asdict(self)
        d["noise_rms"] = dict(self.noise_rms)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "TwinConfig":
        d = dict(d)
        kw = {}
        if "true_params" in d:
            kw["true_params"] = TwoMassParams(**d.pop("true_params"))
        if "pulse" in d:
            kw["pulse"] = HammerPulse(**d.pop("pulse"))
        allowed = {"fs", "n_samples", "noise_rms", "noise_fraction", "seed"}
        unknown = set(d) - allowed
        if unknown:
            raise TwinError(f"unknown twin keys {sorted(unknown)}")
        kw.update(d)
        if "n_samples" in kw:
            kw["n_samples"] = int(kw["n_samples"])
        return cls(**kw)


def state_space(p: TwoMassParams) -> tuple[np.ndarray, np.ndarray]:
    m, b, k, mf, bf, kf = p.m, p.b, p.k, p.m_f, p.b_f, p.k_f
    a = np.array(
        [
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [-k / m, k / m, -b / m, b / m],
            [k / mf, -(k + kf) / mf, b / mf, -(b + bf) / mf],
        ]
    )
    bvec = np.array([0.0, 0.0, 0.0, 1.0 / mf])
    return a, bvec


def zoh_discretize(a: np.ndarray, b: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact ZOH pair (Ad, Bd) from the augmented matrix exponential."""
    n = a.shape[0]
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = a
    aug[:n, n] = b
    e = expm(aug * dt)
    return e[:n, :n], e[:n, n]


def simulate_clean(cfg: TwinConfig) -> dict[str, np.ndarray]:
    """Noise-free absolute accelerations and force, sampled at t_n = n / fs."""
    a, b = state_space(cfg.true_params)
    ad, bd = zoh_discretize(a, b, cfg.dt)
    n = cfg.n_samples
    u = cfg.pulse((np.arange(n) + 0.5) * cfg.dt)
    x = np.zeros(4)
    states = np.empty((n, 4))
    for i in range(n):
        states[i] = x
        x = ad @ x + bd * u[i]
    acc = states @ a[2:].T + np.outer(u, b[2:])
    return {"acc_mass": acc[:, 0], "acc_frame": acc[:, 1], "force": u}


def simulate_experiment(cfg: TwinConfig = TwinConfig()) -> dict[str, TimeSeries]:
    clean = simulate_clean(cfg)
    rng = np.random.default_rng(cfg.seed)
    out = {}
    for ch in CHANNELS:
        x = clean[ch]
        rms = cfg.noise_rms.get(ch, cfg.noise_fraction * float(np.sqrt(np.mean(x * x))))
        noisy = x + rng.normal(0.0, rms, size=x.size) if rms > 0 else x.copy()
        out[ch] = TimeSeries(noisy, cfg.dt, label=ch)
    return out


def write_dataset(channels: Mapping[str, TimeSeries], path) -> Path:
    missing = [c for c in CHANNELS if c not in channels]
    if missing:
        raise TwinError(f"missing channels {missing}")
    n = len(channels[CHANNELS[0]])
    dt = channels[CHANNELS[0]].dt
    for c in CHANNELS:
        if len(channels[c]) != n or abs(channels[c].dt - dt) > 1e-15 * dt:
            raise TwinError("channels must share length and dt")
    t = np.arange(n) * dt
    return atomic_write_text(path, csv_text(DATASET_COLUMNS, [t] + [channels[c].samples for c in CHANNELS]))


def read_dataset(path) -> dict[str, TimeSeries]:
    try:
        cols = read_dataset_columns(path)
    except SignalError as exc:
        raise TwinError(str(exc)) from None
    if tuple(cols) != DATASET_COLUMNS:
        raise TwinError(f"dataset header must be {','.join(DATASET_COLUMNS)}, got {','.join(cols)}")
    dt = uniform_dt(cols["t"])
    return {c: TimeSeries(cols[c], dt, label=c) for c in CHANNELS}
