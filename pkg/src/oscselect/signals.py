"""Time series ingestion and spectral estimation.

Spectra use the raw, unnormalised one-sided DFT magnitude ``|X_k|`` (no 1/N,
no doubling).  Every downstream quantity (residuals, nRMSE, transfer-function
products) uses the same convention on both sides, so the scale cancels.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal as sps

from ._io import atomic_write_text, csv_text

DATASET_COLUMNS = ("t", "acc_mass", "acc_frame", "force")
# relative tolerance on sample-interval jitter when reading a time column
GRID_JITTER_TOL = 1e-6
# the lightly damped frame mode outweighs the oscillator mode by ~1e3 in PSD,
# so a percent-level threshold would hide the second resonance
DEFAULT_PROMINENCE_RATIO = 1e-4


class SignalError(ValueError):
    """Invalid signal input (bad file, bad grid, bad parameters)."""


@dataclass(frozen=True)
class TimeSeries:
    samples: np.ndarray
    dt: float
    label: str = ""

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 1 or x.size == 0:
            raise SignalError("samples must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(x)):
            raise SignalError(f"{self.label or 'series'}: non-finite samples")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise SignalError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "samples", x)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def fs(self) -> float:
        return 1.0 / self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.dt


@dataclass(frozen=True)
class MagnitudeSpectrum:
    freqs: np.ndarray
    mags: np.ndarray
    source_label: str = ""

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        m = np.asarray(self.mags, dtype=float)
        if f.ndim != 1 or f.shape != m.shape:
            raise SignalError("freqs and mags must be 1-D and of equal length")
        if f.size >= 2:
            df = np.diff(f)
            if np.any(df <= 0):
                raise SignalError("frequency grid must be strictly increasing")
            if not np.allclose(df, df[0], rtol=1e-9, atol=0.0):
                raise SignalError("frequency grid must be equispaced")
        if f.size and f[0] < 0:
            raise SignalError("frequency grid must start at a nonnegative frequency")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise SignalError("magnitudes must be finite and nonnegative")
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "mags", m)

    def __len__(self) -> int:
        return self.freqs.size

    @property
    def omega(self) -> np.ndarray:
        return 2.0 * np.pi * self.freqs

    def same_grid(self, other: "MagnitudeSpectrum") -> bool:
        return self.freqs.shape == other.freqs.shape and np.allclose(
            self.freqs, other.freqs, rtol=1e-12, atol=1e-12
        )

    def to_csv(self, path) -> Path:
        return atomic_write_text(path, csv_text(("freq_hz", "value"), (self.freqs, self.mags)))


@dataclass(frozen=True)
class PsdEstimate:
    freqs: np.ndarray
    power: np.ndarray
    segment_length: int
    overlap_fraction: float
    window_name: str = "hann"

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        p = np.asarray(self.power, dtype=float)
        if f.shape != p.shape:
            raise SignalError("freqs and power must have equal length")
        if np.any(p < 0):
            raise SignalError("power must be nonnegative")
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "power", p)

    @property
    def df(self) -> float:
        return float(self.freqs[1] - self.freqs[0]) if self.freqs.size > 1 else 0.0

    def integrated_power(self) -> float:
        """Rectangle-rule integral of the PSD over its frequency grid."""
        return float(np.sum(self.power) * self.df)

    def to_csv(self, path) -> Path:
        return atomic_write_text(path, csv_text(("freq_hz", "value"), (self.freqs, self.power)))


@dataclass(frozen=True)
class PeakInfo:
    freq_hz: float
    power: float
    prominence: float


def read_dataset_columns(path) -> dict[str, np.ndarray]:
    """Parse a dataset CSV into float columns keyed by header name."""
    path = Path(path)
    if not path.is_file():
        raise SignalError(f"dataset not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SignalError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    if not header or header[0] != "t":
        raise SignalError(f"{path}: first column must be 't', got {header[:1]}")
    try:
        data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    except ValueError as exc:
        raise SignalError(f"{path}: malformed numeric data ({exc})") from None
    return {name: data[:, i].copy() for i, name in enumerate(header)}


def uniform_dt(t: np.ndarray) -> float:
    t = np.asarray(t, dtype=float)
    if t.size < 2:
        raise SignalError("need at least two time stamps to infer dt")
    steps = np.diff(t)
    dt = (t[-1] - t[0]) / (t.size - 1)
    if dt <= 0 or np.max(np.abs(steps - dt)) > GRID_JITTER_TOL * dt:
        raise SignalError("non-uniform time grid")
    return float(dt)


def load_timeseries(path, column: str) -> TimeSeries:
    cols = read_dataset_columns(path)
    if column not in cols:
        raise SignalError(f"column {column!r} not in {path} (have {sorted(cols)})")
    dt = uniform_dt(cols["t"])
    return TimeSeries(cols[column], dt, label=column)


def fft_magnitude(ts: TimeSeries, f_max: float) -> MagnitudeSpectrum:
    """One-sided |DFT| on bins 0 <= f <= f_max, spacing 1/(N dt)."""
    n = len(ts)
    if n < 4:
        raise SignalError("series too short for a spectrum (need >= 4 samples)")
    nyquist = 0.5 / ts.dt
    if f_max > nyquist * (1 + 1e-12):
        raise SignalError(f"f_max={f_max} Hz exceeds Nyquist {nyquist} Hz")
    if f_max < 0:
        raise SignalError("f_max must be nonnegative")
    df = 1.0 / (n * ts.dt)
    # small slack so f_max exactly on a bin is included despite rounding
    n_f = int(math.floor(f_max / df + 1e-9)) + 1
    mags = np.abs(np.fft.rfft(ts.samples))[:n_f]
    return MagnitudeSpectrum(np.arange(n_f) * df, mags, source_label=ts.label)


def default_segment_length(n: int) -> int:
    """n/8 rounded to the nearest power of two, at most n."""
    if n < 1:
        raise SignalError("empty series")
    target = max(n / 8.0, 1.0)
    seg = 2 ** int(round(math.log2(target)))
    while seg > n:
        seg //= 2
    return max(seg, 1)


_WINDOWS = {"hann": "hann", "rectangular": "boxcar"}


def welch_psd(
    ts: TimeSeries,
    segment_length: int | None = None,
    overlap_fraction: float = 0.5,
    window: str = "hann",
) -> PsdEstimate:
    """Welch-averaged one-sided PSD (unit^2/Hz), window-power normalised.

    No detrending is applied, so for a single rectangular segment the
    integrated PSD equals the segment's mean square.
    """
    n = len(ts)
    if segment_length is None:
        segment_length = default_segment_length(n)
    if window not in _WINDOWS:
        raise SignalError(f"unknown window {window!r}; choose from {sorted(_WINDOWS)}")
    if not 0.0 <= overlap_fraction < 1.0:
        raise SignalError("overlap_fraction must lie in [0, 1)")
    if segment_length < 2 or segment_length > n:
        raise SignalError(f"segment_length={segment_length} must be in [2, {n}]")
    noverlap = int(math.floor(overlap_fraction * segment_length))
    freqs, power = sps.welch(
        ts.samples,
        fs=ts.fs,
        window=_WINDOWS[window],
        nperseg=segment_length,
        noverlap=noverlap,
        detrend=False,
        return_onesided=True,
        scaling="density",
        average="mean",
    )
    return PsdEstimate(freqs, np.maximum(power, 0.0), int(segment_length), float(overlap_fraction), window)


def detect_peaks(
    psd: PsdEstimate | MagnitudeSpectrum,
    min_prominence_ratio: float = DEFAULT_PROMINENCE_RATIO,
    min_separation_hz: float | None = None,
) -> list[PeakInfo]:
    """Interior local maxima with prominence >= ratio * max(power).

    ``min_separation_hz`` defaults to two frequency bins.  A magnitude
    spectrum is accepted as well; its magnitudes play the role of power.
    """
    p = np.asarray(psd.mags if isinstance(psd, MagnitudeSpectrum) else psd.power, dtype=float)
    if p.size == 0:
        raise SignalError("empty PSD")
    if not 0.0 < min_prominence_ratio <= 1.0:
        raise SignalError("min_prominence_ratio must be in (0, 1]")
    top = float(np.max(p))
    if top <= 0.0:
        return []
    freqs = np.asarray(psd.freqs, dtype=float)
    df = float(freqs[1] - freqs[0]) if freqs.size > 1 else 1.0
    if min_separation_hz is None:
        min_separation_hz = 2.0 * df
    distance = max(1, int(math.ceil(min_separation_hz / df - 1e-9)))
    idx, props = sps.find_peaks(p, prominence=min_prominence_ratio * top, distance=distance)
    return [
        PeakInfo(float(freqs[i]), float(p[i]), float(pr))
        for i, pr in zip(idx, props["prominences"])
        if pr > 0 and p[i] > 0
    ]
