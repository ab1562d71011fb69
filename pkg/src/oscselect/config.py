"""Run configuration: JSON file + command-line overrides over built-in defaults."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from .decision import QOIS, AttributeWeights, RiskProfile
from .inference import InferenceError, TmcmcConfig
from .oscillators import DEFAULT_COSTS, MODEL_IDS
from .priors import default_priors
from .signals import DEFAULT_PROMINENCE_RATIO
from .twin import TwinConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class WelchSettings:
    segment_length: int | None = None
    overlap_fraction: float = 0.5
    window: str = "hann"


@dataclass(frozen=True)
class PeakSettings:
    min_prominence_ratio: float = DEFAULT_PROMINENCE_RATIO
    min_separation_hz: float | None = None


@dataclass(frozen=True)
class AdequacySettings:
    tol_hz: float = 2.0
    mode: str = "posterior_mean"
    min_fraction: float = 0.95


@dataclass(frozen=True)
class RunConfig:
    dataset: str | None = None
    out: str = "out"
    seed: int = 0
    f_max: float = 100.0
    c: float = 0.05
    noise_mode: str = "global_norm"
    n_s: int = 1000
    qoi: str = "response_amplitude"
    models: tuple[str, ...] = MODEL_IDS
    tmcmc: dict = field(default_factory=dict)
    risk: RiskProfile = RiskProfile()
    weights: AttributeWeights = AttributeWeights()
    costs: dict = field(default_factory=lambda: dict(DEFAULT_COSTS))
    priors: dict = field(default_factory=dict)
    welch: WelchSettings = WelchSettings()
    peaks: PeakSettings = PeakSettings()
    adequacy: AdequacySettings = AdequacySettings()
    twin: dict | None = None

    def __post_init__(self):
        if self.qoi not in QOIS:
            raise ConfigError(f"qoi must be one of {QOIS}")
        if self.f_max <= 0 or self.n_s < 100:
            raise ConfigError("f_max must be positive and n_s >= 100")
        for m in self.models:
            if m not in MODEL_IDS:
                raise ConfigError(f"unknown model {m!r}")
        if set(self.costs) - set(MODEL_IDS) or any(v < 0 for v in self.costs.values()):
            raise ConfigError("costs must map model ids to nonnegative numbers")
        if self.adequacy.tol_hz <= 0 or self.adequacy.mode not in ("posterior_mean", "fraction"):
            raise ConfigError("adequacy needs tol_hz > 0 and mode in {posterior_mean, fraction}")
        self.tmcmc_config()
        for mid in self.models:
            default_priors(mid, self.priors.get(mid))

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    @property
    def dataset_path(self) -> Path:
        return Path(self.dataset) if self.dataset else self.out_dir / "dataset.csv"

    def tmcmc_config(self) -> TmcmcConfig:
        try:
            return TmcmcConfig(c=self.c, noise_mode=self.noise_mode, **self.tmcmc)
        except (TypeError, InferenceError) as exc:
            raise ConfigError(f"bad tmcmc block: {exc}") from None

    def twin_config(self) -> TwinConfig:
        if self.twin is None:
            raise ConfigError('no "twin" block in the run config; add one (an empty object {} uses the defaults) to generate data')
        block = dict(self.twin)
        block.setdefault("seed", self.seed)
        return TwinConfig.from_dict(block)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["models"] = list(self.models)
        return d


_NESTED = {
    "risk": RiskProfile,
    "weights": AttributeWeights,
    "welch": WelchSettings,
    "peaks": PeakSettings,
    "adequacy": AdequacySettings,
}


def from_mapping(data: Mapping[str, Any], base: RunConfig | None = None) -> RunConfig:
    """Overlay ``data`` on ``base`` (defaults when omitted); nested blocks merge key-wise."""
    base = base or RunConfig()
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    current = asdict(base)
    kw: dict[str, Any] = {}
    for key, value in data.items():
        if key in _NESTED:
            merged = dict(current.get(key) or {})
            if not isinstance(value, Mapping):
                raise ConfigError(f"{key} must be an object")
            merged.update(value)
            kw[key] = merged
        elif key in ("tmcmc", "costs", "priors") and current.get(key):
            merged = dict(current[key])
            merged.update(value or {})
            kw[key] = merged
        else:
            kw[key] = value
    for key, value in current.items():
        kw.setdefault(key, value)
    try:
        for key, cls in _NESTED.items():
            if key in kw and isinstance(kw[key], Mapping):
                kw[key] = cls(**kw[key])
        if "models" in kw:
            kw["models"] = tuple(kw["models"])
        return RunConfig(**kw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load_config(path=None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Defaults, then the JSON file, then ``overrides`` (command-line flags)."""
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{p}: top level must be an object")
        cfg = from_mapping(data, cfg)
    if overrides:
        cfg = from_mapping({k: v for k, v in overrides.items() if v is not None}, cfg)
    return cfg

