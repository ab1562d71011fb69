"""Expected-utility selection between candidate oscillator models.

Candidate models are calibrated on measured response spectra with
Transitional MCMC; the posterior samples then score each model by the
expected utility of its prediction error, optionally traded against cost.
"""

from .decision import (
    AttributeWeights,
    DecisionReport,
    RiskProfile,
    cost_utility,
    expected_utility,
    frequency_adequacy,
    nrmse,
    select_model,
    utility_precision,
)
from .inference import (
    NoiseModel,
    PosteriorBands,
    PosteriorEnsemble,
    TmcmcConfig,
    calibrate,
    log_likelihood,
    posterior_bands,
    residual,
    run_tmcmc,
)
from .oscillators import (
    CandidateModel,
    OneMassParams,
    TwoMassParams,
    modal_frequencies,
    predict_model1,
    predict_model2,
    v1_transmissibility,
    v2_receptance,
)
from .priors import default_priors, log_prior_pdf, sample_prior, to_physical
from .signals import (
    MagnitudeSpectrum,
    PeakInfo,
    PsdEstimate,
    TimeSeries,
    detect_peaks,
    fft_magnitude,
    load_timeseries,
    welch_psd,
)
from .twin import HammerPulse, TwinConfig, read_dataset, simulate_experiment, write_dataset

__version__ = "0.1.0"
