"""Candidate oscillator models: parameters, transfer functions, predictions.

model1
    One mass ``m`` on a spring/damper ``(k, b)`` driven by base motion ``w``.
    Its transfer function is the absolute transmissibility ``|Z/W|``, which is
    identical for displacements and accelerations, so it is applied directly
    to the measured frame-acceleration spectrum.
model2
    Mass ``m`` attached through ``(k, b)`` to a frame ``m_f`` which is grounded
    through ``(k_f, b_f)``; the hammer force acts on the frame.  Its transfer
    function is the receptance ``|X_m / F|`` of the oscillating mass.

All transfer functions broadcast over numpy arrays so a whole particle
ensemble can be evaluated on a frequency grid in one call.
"""

from __future__ import annotations

from dataclasses import astuple, dataclass, fields
from typing import Union

import numpy as np
from scipy import linalg

from .signals import MagnitudeSpectrum

MODEL_IDS = ("model1", "model2")


class ModelError(ValueError):
    """Invalid model parameters or a singular frequency response."""


def _check_positive(name: str, value: float, allow_zero: bool = False) -> None:
    v = float(value)
    if not np.isfinite(v) or v < 0 or (v == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ModelError(f"{name} must be finite and {bound}, got {value}")


@dataclass(frozen=True)
class OneMassParams:
    m: float
    b: float
    k: float

    def __post_init__(self):
        _check_positive("m", self.m)
        _check_positive("b", self.b, allow_zero=True)
        _check_positive("k", self.k)

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)


@dataclass(frozen=True)
class TwoMassParams:
    m: float
    b: float
    k: float
    m_f: float
    b_f: float
    k_f: float

    def __post_init__(self):
        for f in fields(self):
            _check_positive(f.name, getattr(self, f.name), allow_zero=f.name.startswith("b"))

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    def mass_matrix(self) -> np.ndarray:
        return np.diag([self.m, self.m_f])

    def stiffness_matrix(self) -> np.ndarray:
        return np.array([[self.k, -self.k], [-self.k, self.k + self.k_f]])

    def damping_matrix(self) -> np.ndarray:
        return np.array([[self.b, -self.b], [-self.b, self.b + self.b_f]])


Params = Union[OneMassParams, TwoMassParams]


@dataclass(frozen=True)
class CandidateModel:
    id: str
    params_dim: int
    cost_score: float

    def __post_init__(self):
        if self.id not in MODEL_IDS:
            raise ModelError(f"unknown model id {self.id!r}")
        expected = 3 if self.id == "model1" else 6
        if self.params_dim != expected:
            raise ModelError(f"{self.id} has {expected} parameters, not {self.params_dim}")
        if not self.cost_score >= 0:
            raise ModelError("cost_score must be >= 0")


DEFAULT_COSTS = {"model1": 1.0, "model2": 2.0}


def candidate(model_id: str, cost_score: float | None = None) -> CandidateModel:
    if model_id not in MODEL_IDS:
        raise ModelError(f"unknown model id {model_id!r}")
    cost = DEFAULT_COSTS[model_id] if cost_score is None else float(cost_score)
    return CandidateModel(model_id, 3 if model_id == "model1" else 6, cost)


def _omega(f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ModelError("frequencies must be nonnegative")
    return 2.0 * np.pi * f


def v1_transmissibility(f, m, b, k):
    """|Z/W| = sqrt((k^2 + (b w)^2) / ((k - m w^2)^2 + (b w)^2)), broadcasting."""
    w = _omega(f)
    m, b, k = (np.asarray(x, dtype=float) for x in (m, b, k))
    bw2 = (b * w) ** 2
    den = (k - m * w * w) ** 2 + bw2
    if np.any(den == 0):
        raise ModelError("undamped resonance: V1 is singular (b = 0 and k = m w^2)")
    return np.sqrt((k * k + bw2) / den)


def v2_receptance(f, m, b, k, m_f, b_f, k_f):
    """|X_m / F| of the frame-excited two-mass chain, broadcasting.

    Solves ``(K + i w C - w^2 M) X = [0, 1]^T`` by Cramer's rule and returns
    the modulus of the oscillating-mass coordinate.
    """
    w = _omega(f)
    m, b, k, m_f, b_f, k_f = (np.asarray(x, dtype=float) for x in (m, b, k, m_f, b_f, k_f))
    coupling = k + 1j * w * b
    a11 = coupling - m * w * w
    a22 = coupling + k_f + 1j * w * b_f - m_f * w * w
    det = a11 * a22 - coupling * coupling
    if np.any(det == 0):
        raise ModelError("singular dynamic stiffness: undamped eigenfrequency hit exactly")
    # x1 = -a12 * 1 / det with a12 = -coupling
    return np.abs(coupling / det)


def transfer(model_id: str, f, theta_phys: np.ndarray):
    """Evaluate the model's transfer function for rows of physical parameters.

    ``theta_phys`` has shape ``(..., 3)`` = [m, b, k] or ``(..., 6)`` =
    [m, b, k, m_f, b_f, k_f]; ``f`` broadcasts against the leading axes.
    """
    p = np.asarray(theta_phys, dtype=float)
    cols = [p[..., i, None] if p.ndim > 1 else p[i] for i in range(p.shape[-1])]
    if model_id == "model1":
        return v1_transmissibility(f, *cols)
    if model_id == "model2":
        return v2_receptance(f, *cols)
    raise ModelError(f"unknown model id {model_id!r}")


def predict_model1(p: OneMassParams, base_acc_spec: MagnitudeSpectrum) -> MagnitudeSpectrum:
    mags = v1_transmissibility(base_acc_spec.freqs, p.m, p.b, p.k) * base_acc_spec.mags
    return MagnitudeSpectrum(base_acc_spec.freqs, mags, source_label="model1")


def predict_model2(p: TwoMassParams, force_spec: MagnitudeSpectrum) -> MagnitudeSpectrum:
    w = force_spec.omega
    mags = v2_receptance(force_spec.freqs, p.m, p.b, p.k, p.m_f, p.b_f, p.k_f) * w * w * force_spec.mags
    return MagnitudeSpectrum(force_spec.freqs, mags, source_label="model2")


def predict(model_id: str, p: Params, input_spec: MagnitudeSpectrum) -> MagnitudeSpectrum:
    if model_id == "model1":
        if not isinstance(p, OneMassParams):
            raise ModelError("model1 needs OneMassParams")
        return predict_model1(p, input_spec)
    if model_id == "model2":
        if not isinstance(p, TwoMassParams):
            raise ModelError("model2 needs TwoMassParams")
        return predict_model2(p, input_spec)
    raise ModelError(f"unknown model id {model_id!r}")


def predict_batch(model_id: str, theta_phys: np.ndarray, input_spec: MagnitudeSpectrum) -> np.ndarray:
    """Predicted magnitudes for each parameter row, shape ``(n_rows, n_f)``."""
    theta_phys = np.atleast_2d(np.asarray(theta_phys, dtype=float))
    f = input_spec.freqs[None, :]
    tf = transfer(model_id, f, theta_phys)
    if model_id == "model2":
        w = input_spec.omega
        return tf * (w * w * input_spec.mags)[None, :]
    return tf * input_spec.mags[None, :]


def modal_frequencies(model: CandidateModel | str, params: Params) -> list[float]:
    """Undamped natural frequencies in Hz, ascending."""
    model_id = model.id if isinstance(model, CandidateModel) else model
    if model_id == "model1":
        return [float(np.sqrt(params.k / params.m) / (2 * np.pi))]
    if model_id == "model2":
        if not isinstance(params, TwoMassParams):
            raise ModelError("model2 needs TwoMassParams")
        lam = linalg.eigh(params.stiffness_matrix(), params.mass_matrix(), eigvals_only=True)
        return sorted(float(np.sqrt(x) / (2 * np.pi)) for x in lam)
    raise ModelError(f"unknown model id {model_id!r}")


def params_from_array(model_id: str, values) -> Params:
    v = [float(x) for x in np.asarray(values, dtype=float).ravel()]
    if model_id == "model1":
        return OneMassParams(*v)
    if model_id == "model2":
        return TwoMassParams(*v)
    raise ModelError(f"unknown model id {model_id!r}")
