"""Expected-utility model selection.

Precision enters through the nRMSE of a model's predicted response spectrum,
mapped to [0, 1] by a risk-profile utility curve and averaged over posterior
samples.  An optional cost attribute is combined additively.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import priors as pr
from .inference import PosteriorEnsemble
from .oscillators import MODEL_IDS, CandidateModel, Params, candidate, modal_frequencies, predict_batch
from .signals import MagnitudeSpectrum, PeakInfo

QOIS = ("response_amplitude", "frequency_content")
RISK_KINDS = ("neutral", "averse", "seeking")


class DecisionError(ValueError):
    pass


@dataclass(frozen=True)
class RiskProfile:
    kind: str = "neutral"
    gamma: float = 2.0

    def __post_init__(self):
        if self.kind not in RISK_KINDS:
            raise DecisionError(f"risk kind must be one of {RISK_KINDS}")
        if not self.gamma > 0:
            raise DecisionError("gamma must be positive")


@dataclass(frozen=True)
class AttributeWeights:
    w_precision: float = 1.0
    w_cost: float = 0.0

    def __post_init__(self):
        for w in (self.w_precision, self.w_cost):
            if not 0.0 <= w <= 1.0:
                raise DecisionError("attribute weights must lie in [0, 1]")
        if abs(self.w_precision + self.w_cost - 1.0) > 1e-12:
            raise DecisionError("attribute weights must sum to 1")


@dataclass
class ModelScore:
    expected_utility: float
    cost_utility: float
    combined: float
    mean_nrmse: float
    cost_score: float = 0.0


@dataclass
class DecisionReport:
    per_model: dict[str, ModelScore]
    chosen: str
    qoi: str = "response_amplitude"
    adequacy: dict[str, dict] = field(default_factory=dict)
    peaks_hz: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "qoi": self.qoi,
            "chosen": self.chosen,
            "per_model": {k: asdict(v) for k, v in self.per_model.items()},
            "adequacy": self.adequacy,
            "peaks_hz": list(self.peaks_hz),
        }

    def table(self) -> str:
        lines = [f"qoi: {self.qoi}"]
        if self.per_model:
            lines.append(f"{'model':<8} {'E[U]':>8} {'U_cost':>8} {'combined':>9} {'mean nRMSE':>11}")
            for mid, s in self.per_model.items():
                mark = " *" if mid == self.chosen else ""
                lines.append(
                    f"{mid:<8} {s.expected_utility:8.4f} {s.cost_utility:8.4f} {s.combined:9.4f} {s.mean_nrmse:11.4f}{mark}"
                )
        if self.adequacy:
            lines.append(f"{'model':<8} {'matched':>8} {'required':>9} {'adequate':>9}")
            for mid, a in self.adequacy.items():
                mark = " *" if mid == self.chosen else ""
                lines.append(f"{mid:<8} {a['matched']:8d} {a['required']:9d} {str(a['adequate']):>9}{mark}")
        lines.append(f"chosen: {self.chosen}")
        return "\n".join(lines)


def nrmse(predicted, observed) -> float | np.ndarray:
    """sqrt(sum (pred - obs)^2 / sum obs^2); ``predicted`` may hold one row per sample."""
    obs = observed.mags if isinstance(observed, MagnitudeSpectrum) else np.asarray(observed, dtype=float)
    if isinstance(predicted, MagnitudeSpectrum):
        if isinstance(observed, MagnitudeSpectrum) and not predicted.same_grid(observed):
            raise DecisionError("predicted and observed spectra are on different grids")
        predicted = predicted.mags
    pred = np.asarray(predicted, dtype=float)
    denom = float(np.dot(obs, obs))
    if denom <= 0:
        raise DecisionError("observed spectrum is identically zero")
    err = np.sum((pred - obs) ** 2, axis=-1)
    out = np.sqrt(err / denom)
    return float(out) if np.ndim(out) == 0 else out


def utility_precision(x, profile: RiskProfile = RiskProfile()):
    """Utility of an nRMSE value: 1 at x = 0, 0 for x >= 1, nonincreasing.

    neutral: 1 - x;  averse: (1 - x)^(1/gamma);  seeking: (1 - x)^gamma,
    with x clamped to [0, 1].
    """
    xb = np.minimum(np.maximum(np.asarray(x, dtype=float), 0.0), 1.0)
    base = 1.0 - xb
    if profile.kind == "neutral":
        u = base
    elif profile.kind == "averse":
        u = base ** (1.0 / profile.gamma)
    else:
        u = base**profile.gamma
    return float(u) if np.ndim(u) == 0 else u


def _rows(ensemble) -> np.ndarray:
    return ensemble.samples if isinstance(ensemble, PosteriorEnsemble) else np.atleast_2d(ensemble)


def sample_nrmse(ensemble, model_id: str, observed: MagnitudeSpectrum, input_spec: MagnitudeSpectrum) -> np.ndarray:
    if not observed.same_grid(input_spec):
        raise DecisionError("observed and input spectra are on different grids")
    pred = predict_batch(model_id, pr.physical_array(model_id, _rows(ensemble)), input_spec)
    return np.atleast_1d(nrmse(pred, observed))


def expected_utility(
    ensemble,
    model_id: str,
    observed: MagnitudeSpectrum,
    input_spec: MagnitudeSpectrum,
    profile: RiskProfile = RiskProfile(),
) -> float:
    """Posterior-sample average of the precision utility."""
    rows = _rows(ensemble)
    if rows.shape[0] == 0:
        raise DecisionError("empty ensemble")
    return float(np.mean(utility_precision(sample_nrmse(rows, model_id, observed, input_spec), profile)))


def cost_utility(cost_score: float, max_cost: float) -> float:
    if not max_cost > 0:
        raise DecisionError("max_cost must be positive")
    if not 0 <= cost_score <= max_cost:
        raise DecisionError(f"cost_score {cost_score} outside [0, {max_cost}]")
    return 1.0 - cost_score / max_cost


def argmax_with_tiebreak(combined: Mapping[str, float], costs: Mapping[str, float], tol: float = 1e-12) -> str:
    """Highest score; ties go to the lower cost, then to the fixed model order."""
    order = {mid: i for i, mid in enumerate(MODEL_IDS)}
    best = max(combined.values())
    tied = [mid for mid, v in combined.items() if v >= best - tol * max(1.0, abs(best))]
    return min(tied, key=lambda mid: (costs[mid], order.get(mid, len(order)), mid))


def select_model(
    candidates: Sequence[tuple[CandidateModel | str, PosteriorEnsemble | np.ndarray]],
    observed: MagnitudeSpectrum,
    inputs: Mapping[str, MagnitudeSpectrum],
    profile: RiskProfile = RiskProfile(),
    weights: AttributeWeights = AttributeWeights(),
    max_cost: float | None = None,
) -> DecisionReport:
    """Maximise w_p * E[U_precision] + w_c * U_cost over the candidates.

    ``inputs`` maps each model id to its input spectrum (frame acceleration
    for model1, hammer force for model2).  ``max_cost`` defaults to the
    largest candidate cost.
    """
    if len(candidates) < 2:
        raise DecisionError("need at least two candidates")
    cands = [(candidate(c) if isinstance(c, str) else c, e) for c, e in candidates]
    if max_cost is None:
        max_cost = max(c.cost_score for c, _ in cands) or 1.0
    per_model: dict[str, ModelScore] = {}
    for cand, ens in cands:
        nr = sample_nrmse(ens, cand.id, observed, inputs[cand.id])
        eu = float(np.mean(utility_precision(nr, profile)))
        cu = cost_utility(cand.cost_score, max_cost)
        per_model[cand.id] = ModelScore(
            expected_utility=eu,
            cost_utility=cu,
            combined=weights.w_precision * eu + weights.w_cost * cu,
            mean_nrmse=float(np.mean(nr)),
            cost_score=cand.cost_score,
        )
    chosen = argmax_with_tiebreak(
        {k: v.combined for k, v in per_model.items()}, {k: v.cost_score for k, v in per_model.items()}
    )
    return DecisionReport(per_model, chosen, "response_amplitude")


def frequency_adequacy(
    model_id: str,
    params_or_ensemble,
    peaks: Sequence[PeakInfo],
    tol_hz: float,
    mode: str = "posterior_mean",
    min_fraction: float = 0.95,
) -> dict:
    """Check that every detected spectral peak has a modal frequency within ``tol_hz``.

    ``params_or_ensemble`` is a Params object, a sampled-coordinate vector or
    an ensemble.  For ensembles, ``mode="posterior_mean"`` evaluates the modes
    at the mean coordinates; ``mode="fraction"`` requires at least
    ``min_fraction`` of the samples to be individually adequate.
    """
    if not tol_hz > 0:
        raise DecisionError("tol_hz must be positive")
    required = len(peaks)
    peak_f = np.array([p.freq_hz for p in peaks], dtype=float)

    def matched_for(params: Params) -> int:
        modes = np.asarray(modal_frequencies(model_id, params))
        if required == 0:
            return 0
        return int(np.sum(np.min(np.abs(peak_f[:, None] - modes[None, :]), axis=1) <= tol_hz))

    x = params_or_ensemble
    if isinstance(x, PosteriorEnsemble) or (isinstance(x, np.ndarray) and x.ndim == 2):
        rows = _rows(params_or_ensemble)
        if mode == "fraction":
            counts = [matched_for(pr.to_physical(r, model_id)) for r in rows]
            frac = float(np.mean([c == required for c in counts]))
            return {
                "matched": int(np.median(counts)),
                "required": required,
                "adequate": bool(frac >= min_fraction),
                "fraction_adequate": frac,
            }
        params = pr.to_physical(rows.mean(axis=0), model_id)
    elif isinstance(params_or_ensemble, (list, tuple, np.ndarray)):
        params = pr.to_physical(params_or_ensemble, model_id)
    else:
        params = params_or_ensemble
    matched = matched_for(params)
    return {"matched": matched, "required": required, "adequate": bool(matched == required)}
