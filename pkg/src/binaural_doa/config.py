"""JSON pipeline and sweep configuration: schema validation and pipeline
construction.

A pipeline config looks like::

    {
      "schema_version": 1,
      "frontend": {"type": "afb", "f_lo": 60, "f_hi": 6000, "n_channels": 42},
      "smoothing": {"time_window_s": 0.064, "freq_bins": 2,
                    "band_hz": [1000, 6000]},
      "dpd": {"mode": "top_fraction", "value": 0.05},
      "search": {"mode": "1d", "method": "dpd", "lateral_step_deg": 2.0,
                 "n_intraconic": 36},
      "hrtf": {"container": "hrtf.bdh"}        # or {"sphere": {...}}
    }

The STFT variant is ``{"type": "stft", "fft_size": 1536, "hop": 768,
"window": "hann"}``. The ``hrtf`` section accepts either a container path or
an inline rigid-sphere generator spec ``{"sphere": {"radius_m": 0.0875,
"grid_step_deg": 2.0, "sample_rate": 48000}}``.
"""

from __future__ import annotations

import json
import copy
import os
from dataclasses import dataclass, field

import numpy as np

from .timefreq import StftParams, make_erb_bank
from .hrtf import HrtfSet, load_hrtf_set, sphere_hrtf
from .localization import SmoothingParams, Pipeline
from .roomsim import ScenarioOptions

SCHEMA_VERSION = 1

DEFAULT_PIPELINE = {
    "schema_version": SCHEMA_VERSION,
    "frontend": {"type": "afb", "f_lo": 60.0, "f_hi": 6000.0,
                 "n_channels": 42, "sample_rate": 48000},
    "smoothing": {"time_window_s": 0.064, "freq_bins": 2,
                  "band_hz": [1000.0, 6000.0]},
    "dpd": {"mode": "top_fraction", "value": 0.05},
    "search": {"mode": "1d", "method": "dpd", "lateral_step_deg": 2.0,
               "n_intraconic": 36},
    "hrtf": {"sphere": {"radius_m": 0.0875, "grid_step_deg": 2.0,
                        "sample_rate": 48000}},
}


class ConfigError(ValueError):
    """Invalid or unsupported configuration."""


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_pipeline_config(path=None, overrides=None) -> dict:
    """Read, merge with defaults and validate a pipeline config."""
    cfg = copy.deepcopy(DEFAULT_PIPELINE)
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        cfg = _merge(cfg, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    validate_pipeline_config(cfg, base_dir=os.path.dirname(path) if path else None)
    return cfg


def validate_pipeline_config(cfg, base_dir=None):
    version = cfg.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"unrecognized schema_version {version!r} (supported: "
            f"{SCHEMA_VERSION})")
    fe = cfg.get("frontend", {})
    if fe.get("type") not in ("stft", "afb"):
        raise ConfigError(f"frontend.type must be 'stft' or 'afb', got "
                          f"{fe.get('type')!r}")
    sm = cfg.get("smoothing", {})
    band = sm.get("band_hz")
    if band is not None and (len(band) != 2 or band[0] >= band[1]):
        raise ConfigError("smoothing.band_hz must be an increasing pair")
    dpd = cfg.get("dpd", {})
    if dpd.get("mode") not in ("top_fraction", "threshold"):
        raise ConfigError("dpd.mode must be 'top_fraction' or 'threshold'")
    if dpd["mode"] == "top_fraction" and not 0 < dpd.get("value", 0) <= 1:
        raise ConfigError("dpd.value must be in (0, 1] for top_fraction")
    search = cfg.get("search", {})
    if search.get("mode") not in ("1d", "2d"):
        raise ConfigError("search.mode must be '1d' or '2d'")
    if search.get("method", "dpd") not in ("dpd", "je"):
        raise ConfigError("search.method must be 'dpd' or 'je'")
    hrtf = cfg.get("hrtf", {})
    if "container" not in hrtf and "sphere" not in hrtf:
        raise ConfigError("hrtf section needs 'container' or 'sphere'")
    if "container" in hrtf:
        path = hrtf["container"]
        if base_dir and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
            hrtf["container"] = path
        if not os.path.exists(path):
            raise ConfigError(
                f"hrtf.container {path!r} does not exist; build one with "
                f"'binaural-doa hrtf-prep'")


def sphere_grid_directions(step_deg=2.0):
    """Full-sphere az/el lattice at the given step, poles included once."""
    az = np.arange(0.0, 360.0, step_deg)
    el = np.arange(-90.0 + step_deg, 90.0, step_deg)
    aa, ee = np.meshgrid(az, el)
    dirs = np.column_stack([aa.ravel(), ee.ravel()])
    poles = np.array([[0.0, -90.0], [0.0, 90.0]])
    return np.vstack([dirs, poles])


def hrtf_set_from_config(cfg) -> HrtfSet:
    hrtf = cfg["hrtf"]
    if "container" in hrtf:
        return load_hrtf_set(hrtf["container"])
    sph = hrtf["sphere"]
    dirs = sphere_grid_directions(float(sph.get("grid_step_deg", 2.0)))
    return sphere_hrtf(radius=float(sph.get("radius_m", 0.0875)),
                       directions=dirs,
                       sample_rate=int(sph.get("sample_rate", 48000)))


def frontend_from_config(cfg):
    fe = cfg["frontend"]
    if fe["type"] == "stft":
        return StftParams.create(fft_size=int(fe.get("fft_size", 1536)),
                                 hop=fe.get("hop"),
                                 window=fe.get("window", "hann"))
    return make_erb_bank(float(fe.get("f_lo", 60.0)),
                         float(fe.get("f_hi", 6000.0)),
                         int(fe.get("n_channels", 42)),
                         int(fe.get("sample_rate", 48000)))


def smoothing_from_config(cfg) -> SmoothingParams:
    sm = cfg["smoothing"]
    band = sm.get("band_hz")
    return SmoothingParams(time_window=float(sm.get("time_window_s", 0.064)),
                           freq_bins=int(sm.get("freq_bins", 2)),
                           band=tuple(band) if band else None)


def pipeline_from_config(cfg, hset=None) -> Pipeline:
    if hset is None:
        hset = hrtf_set_from_config(cfg)
    return Pipeline(
        hset,
        frontend_from_config(cfg),
        smoothing_from_config(cfg),
        dpd_mode=cfg["dpd"]["mode"],
        dpd_value=float(cfg["dpd"]["value"]),
        search=cfg["search"]["mode"],
        lateral_step=float(cfg["search"].get("lateral_step_deg", 2.0)),
        n_intraconic=int(cfg["search"].get("n_intraconic", 36)),
    )


# ---------------------------------------------------------------------------
# sweep configuration
# ---------------------------------------------------------------------------

DEFAULT_SWEEP = {
    "schema_version": SCHEMA_VERSION,
    "count": 60,
    "seed": 0,
    "speech_duration_s": 3.0,
    "rooms": [[5.0, 10.0, 8.0], [9.0, 7.0, 5.0], [8.0, 5.0, 3.0]],
    "t60_options": [0.4, 0.6, 0.8],
    "snr_options": [-5.0, 0.0, 5.0, 10.0, 15.0],
    "distance_factors": [0.5, 1.0, 2.0],
    "methods": ["dpd", "je"],
    "frontends": ["stft", "afb"],
    "searches": ["1d", "2d"],
    "speech": [f"synthetic:{i}" for i in range(4)],
    "pipeline": {},           # overrides applied to DEFAULT_PIPELINE
}


def load_sweep_config(path=None, overrides=None) -> dict:
    cfg = copy.deepcopy(DEFAULT_SWEEP)
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        cfg = _merge(cfg, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError("unrecognized sweep schema_version")
    for name in ("rooms", "t60_options", "snr_options", "distance_factors",
                 "methods", "frontends", "searches", "speech"):
        if not cfg.get(name):
            raise ConfigError(f"sweep option set {name!r} is empty")
    for m in cfg["methods"]:
        if m not in ("dpd", "je"):
            raise ConfigError(f"unknown method {m!r}")
    for f in cfg["frontends"]:
        if f not in ("stft", "afb"):
            raise ConfigError(f"unknown frontend {f!r}")
    for s in cfg["searches"]:
        if s not in ("1d", "2d"):
            raise ConfigError(f"unknown search {s!r}")
    return cfg


def scenario_options_from_sweep(cfg) -> ScenarioOptions:
    return ScenarioOptions(
        rooms=tuple(tuple(r) for r in cfg["rooms"]),
        t60s=tuple(cfg["t60_options"]),
        snrs=tuple(cfg["snr_options"]),
        distance_factors=tuple(cfg["distance_factors"]),
        speech_keys=tuple(cfg["speech"]),
    )
