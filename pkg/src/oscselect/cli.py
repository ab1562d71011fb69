"""Command-line pipeline: generate -> spectra/psd -> calibrate -> select -> report.

Exit codes: 0 success, 2 configuration/input error, 3 numerical failure.
Log verbosity comes from ``OSCSELECT_LOG`` (DEBUG, INFO, WARNING, ...).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import priors as pr
from ._io import atomic_write_json
from .config import ConfigError, RunConfig, load_config
from .decision import DecisionError, DecisionReport, ModelScore, frequency_adequacy, select_model
from .inference import InferenceError, PosteriorEnsemble, calibrate, posterior_bands, spectrum_predictor
from .oscillators import MODEL_IDS, ModelError, candidate, modal_frequencies
from .signals import SignalError, detect_peaks, fft_magnitude, welch_psd
from .twin import TwinError, read_dataset, simulate_experiment, write_dataset

log = logging.getLogger("oscselect")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

# which measured channel feeds each model's transfer function
MODEL_INPUT = {"model1": "acc_frame", "model2": "force"}
OBSERVED = "acc_mass"


def model_seed(seed: int, model_id: str) -> int:
    """Independent, reproducible sampler seed per (run seed, model)."""
    return int(np.random.SeedSequence([seed, MODEL_IDS.index(model_id)]).generate_state(1)[0])


def load_spectra(cfg: RunConfig):
    path = cfg.dataset_path
    if not path.is_file():
        raise ConfigError(f"dataset {path} not found; run `oscselect generate` or set \"dataset\" in the config")
    channels = read_dataset(path)
    return channels, {name: fft_magnitude(ts, cfg.f_max) for name, ts in channels.items()}


def cmd_generate(cfg: RunConfig) -> Path:
    twin_cfg = cfg.twin_config()
    channels = simulate_experiment(twin_cfg)
    path = write_dataset(channels, cfg.dataset_path)
    atomic_write_json(path.with_suffix(".truth.json"), twin_cfg.to_dict())
    log.info("wrote %s (%d rows)", path, len(channels[OBSERVED]))
    return path


def cmd_spectra(cfg: RunConfig) -> list[Path]:
    _, spectra = load_spectra(cfg)
    out = []
    for name, sp in spectra.items():
        out.append(sp.to_csv(cfg.out_dir / "spectra" / f"{name}.csv"))
    return out


def cmd_psd(cfg: RunConfig) -> Path:
    channels = read_dataset(_require_dataset(cfg))
    psd = welch_psd(channels[OBSERVED], cfg.welch.segment_length, cfg.welch.overlap_fraction, cfg.welch.window)
    path = psd.to_csv(cfg.out_dir / f"psd_{OBSERVED}.csv")
    peaks = detect_peaks(psd, cfg.peaks.min_prominence_ratio, cfg.peaks.min_separation_hz)
    atomic_write_json(cfg.out_dir / f"peaks_{OBSERVED}.json", [asdict(p) for p in peaks])
    return path


def _require_dataset(cfg: RunConfig) -> Path:
    if not cfg.dataset_path.is_file():
        raise ConfigError(f"dataset {cfg.dataset_path} not found; run `oscselect generate` first")
    return cfg.dataset_path


def ensemble_paths(cfg: RunConfig, model_id: str) -> tuple[Path, Path]:
    base = cfg.out_dir / f"ensemble_{model_id}"
    return base.with_suffix(".csv"), base.with_suffix(".json")


def cmd_calibrate(cfg: RunConfig, model_id: str) -> PosteriorEnsemble:
    _, spectra = load_spectra(cfg)
    observed, inp = spectra[OBSERVED], spectra[MODEL_INPUT[model_id]]
    prior = pr.default_priors(model_id, cfg.priors.get(model_id))
    ens = calibrate(model_id, observed, inp, cfg.n_s, model_seed(cfg.seed, model_id), cfg.tmcmc_config(), prior)
    ens.seed = cfg.seed
    csv_path, json_path = ensemble_paths(cfg, model_id)
    ens.save(csv_path, json_path)

    predictor = spectrum_predictor(model_id, inp)
    prior_rows = pr.sample_prior(prior, cfg.n_s, np.random.default_rng(model_seed(cfg.seed, model_id) + 1))
    posterior_bands(prior_rows, predictor, inp.freqs).to_csv(cfg.out_dir / f"bands_{model_id}_prior.csv")
    posterior_bands(ens, predictor, inp.freqs).to_csv(cfg.out_dir / f"bands_{model_id}_posterior.csv")
    observed.to_csv(cfg.out_dir / f"observed_{OBSERVED}.csv")
    log.info(
        "%s: %d stages, log evidence %.4f, final acceptance %.2f",
        model_id,
        len(ens.stages),
        ens.log_evidence,
        ens.stages[-1].acceptance_rate,
    )
    return ens


def _ensemble_for(cfg: RunConfig, model_id: str) -> PosteriorEnsemble:
    csv_path, json_path = ensemble_paths(cfg, model_id)
    if csv_path.is_file() and json_path.is_file():
        ens = PosteriorEnsemble.load(csv_path, json_path)
        if ens.seed == cfg.seed and ens.n_s == cfg.n_s and ens.config == cfg.tmcmc_config():
            return ens
        log.info("stale ensemble for %s; recalibrating", model_id)
    return cmd_calibrate(cfg, model_id)


def cmd_select(cfg: RunConfig) -> DecisionReport:
    if len(cfg.models) < 2:
        raise ConfigError("selection needs at least two models")
    channels, spectra = load_spectra(cfg)
    ensembles = {mid: _ensemble_for(cfg, mid) for mid in cfg.models}
    if cfg.qoi == "response_amplitude":
        report = select_model(
            [(candidate(mid, cfg.costs.get(mid)), ensembles[mid]) for mid in cfg.models],
            spectra[OBSERVED],
            {mid: spectra[MODEL_INPUT[mid]] for mid in cfg.models},
            cfg.risk,
            cfg.weights,
        )
    else:
        psd = welch_psd(channels[OBSERVED], cfg.welch.segment_length, cfg.welch.overlap_fraction, cfg.welch.window)
        peaks = detect_peaks(psd, cfg.peaks.min_prominence_ratio, cfg.peaks.min_separation_hz)
        adequacy = {
            mid: frequency_adequacy(
                mid, ensembles[mid], peaks, cfg.adequacy.tol_hz, cfg.adequacy.mode, cfg.adequacy.min_fraction
            )
            for mid in cfg.models
        }
        costs = {mid: candidate(mid, cfg.costs.get(mid)).cost_score for mid in cfg.models}
        fit = [mid for mid in cfg.models if adequacy[mid]["adequate"]] or list(cfg.models)
        chosen = min(fit, key=lambda mid: (costs[mid], MODEL_IDS.index(mid)))
        for mid in cfg.models:
            adequacy[mid]["modal_frequencies_hz"] = _modes_at_mean(mid, ensembles[mid])
        report = DecisionReport({}, chosen, "frequency_content", adequacy, [p.freq_hz for p in peaks])
    atomic_write_json(report_path(cfg), report.to_dict())
    print(report.table())
    return report


def _modes_at_mean(model_id: str, ens: PosteriorEnsemble) -> list[float]:
    return modal_frequencies(model_id, pr.to_physical(ens.mean(), model_id))


def report_path(cfg: RunConfig) -> Path:
    return cfg.out_dir / f"report_{cfg.qoi}.json"


def cmd_report(cfg: RunConfig) -> str:
    path = report_path(cfg)
    if not path.is_file():
        raise ConfigError(f"{path} not found; run `oscselect select` first")
    data = json.loads(path.read_text(encoding="utf-8"))
    report = DecisionReport(
        {k: ModelScore(**v) for k, v in data["per_model"].items()},
        data["chosen"],
        data["qoi"],
        data.get("adequacy", {}),
        data.get("peaks_hz", []),
    )
    text = report.table()
    print(text)
    return text


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oscselect", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("generate", "spectra", "psd", "calibrate", "select", "report"):
        s = sub.add_parser(name)
        s.add_argument("--config", help="run-config JSON file")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", help="output directory")
        s.add_argument("--dataset", help="dataset CSV path")
        s.add_argument("--f-max", dest="f_max", type=float)
        s.add_argument("--n-s", dest="n_s", type=int)
        s.add_argument("--c", type=float)
        s.add_argument("--noise-mode", dest="noise_mode", choices=("global_norm", "per_bin"))
        s.add_argument("--qoi", choices=("response_amplitude", "frequency_content"))
        s.add_argument("--model", choices=MODEL_IDS, help="calibrate: model to update (default: all)")
    return p


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("OSCSELECT_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in ("seed", "out", "dataset", "f_max", "n_s", "c", "noise_mode", "qoi")}
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "generate":
            cmd_generate(cfg)
        elif args.command == "spectra":
            cmd_spectra(cfg)
        elif args.command == "psd":
            cmd_psd(cfg)
        elif args.command == "calibrate":
            for mid in [args.model] if args.model else cfg.models:
                cmd_calibrate(cfg, mid)
        elif args.command == "select":
            cmd_select(cfg)
        elif args.command == "report":
            cmd_report(cfg)
    except (ConfigError, TwinError, SignalError, pr.PriorError, DecisionError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (InferenceError, ModelError, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
