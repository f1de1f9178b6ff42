"""Experiment harness: method x front-end x search sweeps over simulated
scenarios, RMSE summaries per condition, and the 1D-vs-2D runtime benchmark.

Outputs are split into a deterministic part (``records.csv``,
``summary.json``, plot-data files; byte-identical across runs with one seed)
and a timing part (``timings.csv``) that is inherently run-dependent.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .signal import BinauralSignal
from .timefreq import binaural_analyze
from .localization import (Pipeline, SmoothingParams, spatial_spectrum,
                           dpd_select, _music_argmin)
from .je import build_cue_table, marginalize_to_lateral, je_estimate
from .roomsim import (random_scenarios, image_method_brir, synthesize,
                      resolve_speech)
from . import config as cfgmod

__all__ = ["RunRecord", "rmse", "summarize", "run_sweep", "bench_search",
           "records_to_csv", "timings_to_csv", "write_plot_data",
           "music_eval_counts"]

LATERAL_BUCKET_DEG = 20.0


@dataclass
class RunRecord:
    """One (scenario, method, frontend, search) outcome."""

    scenario_id: int
    method: str
    frontend: str
    search: str
    snr_db: float
    t60_s: float
    room: tuple
    distance_m: float
    truth_lateral_deg: float
    estimate_lateral_deg: float = None    # None <=> no estimate
    n_pass: int = 0
    timings_ms: dict = field(default_factory=dict)
    note: str = ""

    def __post_init__(self):
        if self.estimate_lateral_deg is None and self.n_pass > 0:
            raise ValueError("estimate missing despite passed bins")

    @property
    def no_estimate(self) -> bool:
        return self.estimate_lateral_deg is None

    @property
    def error_deg(self):
        if self.no_estimate:
            return None
        return self.estimate_lateral_deg - self.truth_lateral_deg

    @property
    def variant(self) -> str:
        return f"{self.method}-{self.frontend}-{self.search}"


def rmse(records) -> float:
    """Root mean squared lateral error over records carrying an estimate."""
    errs = [r.error_deg for r in records if not r.no_estimate]
    if not errs:
        raise ValueError("no records with estimates in group")
    errs = np.asarray(errs, np.float64)
    return float(np.sqrt(np.mean(errs ** 2)))


def _group(records, key):
    groups = {}
    for r in records:
        groups.setdefault(key(r), []).append(r)
    return dict(sorted(groups.items()))


def summarize(records) -> dict:
    """Condition summaries: RMSE and failure rates per variant and per
    marginal (SNR, T60, lateral bucket) within each variant. Pure function
    of the record table."""
    def stats(group):
        n_est = sum(1 for r in group if not r.no_estimate)
        out = {"n": len(group), "n_estimated": n_est,
               "failure_rate": 1.0 - n_est / len(group)}
        out["rmse_deg"] = rmse(group) if n_est else None
        return out

    summary = {"variants": {}, "trends": {}}
    by_variant = _group(records, lambda r: r.variant)
    for variant, group in by_variant.items():
        summary["variants"][variant] = stats(group)
    for axis, key in (
            ("snr_db", lambda r: r.snr_db),
            ("t60_s", lambda r: r.t60_s),
            ("lateral_bucket_deg", lambda r: LATERAL_BUCKET_DEG * np.floor(
                min(r.truth_lateral_deg, 179.999) / LATERAL_BUCKET_DEG))):
        trend = {}
        for variant, group in by_variant.items():
            trend[variant] = {
                str(cond): stats(sub)
                for cond, sub in _group(group, key).items()}
        summary["trends"][f"rmse_vs_{axis}"] = trend
    return summary


# ---------------------------------------------------------------------------
# sweep runner
# ---------------------------------------------------------------------------

def _build_pipelines(sweep_cfg, hset):
    """One (search -> Pipeline) map per frontend plus JE cue tables."""
    out = {}
    for fe_name in sweep_cfg["frontends"]:
        pipe_cfg = cfgmod._merge(cfgmod.DEFAULT_PIPELINE,
                                 sweep_cfg.get("pipeline", {}))
        pipe_cfg["frontend"]["type"] = fe_name
        frontend = cfgmod.frontend_from_config(pipe_cfg)
        smoothing = cfgmod.smoothing_from_config(pipe_cfg)
        pipes = {}
        for search in sweep_cfg["searches"]:
            pipes[search] = Pipeline(
                hset, frontend, smoothing,
                dpd_mode=pipe_cfg["dpd"]["mode"],
                dpd_value=float(pipe_cfg["dpd"]["value"]),
                search=search,
                lateral_step=float(
                    pipe_cfg["search"].get("lateral_step_deg", 2.0)),
                n_intraconic=int(
                    pipe_cfg["search"].get("n_intraconic", 36)))
        out[fe_name] = pipes
    return out


def _search_estimates(field, passed, pipe):
    laterals = np.empty(passed.size)
    for j, bi in enumerate(passed):
        c = int(field.bins[bi, 0])
        idx = _music_argmin(field.q_n[bi], pipe.steering[c])
        if pipe.search == "2d":
            laterals[j] = pipe.grid_laterals[idx]
        else:
            laterals[j] = pipe.lateral_grid[idx]
    return laterals


def run_sweep(sweep_cfg, hset=None, progress=None):
    """Execute the full sweep; returns (records, summary).

    Per scenario the BRIR and binaural signal are synthesized once; per
    front-end the analysis, smoothing and DPD selection are shared by every
    method/search so the JE baseline consumes exactly the DPD pass set.
    Scenario failures are recorded as notes and the sweep continues.
    """
    if hset is None:
        pipe_cfg = cfgmod._merge(cfgmod.DEFAULT_PIPELINE,
                                 sweep_cfg.get("pipeline", {}))
        hset = cfgmod.hrtf_set_from_config(pipe_cfg)
    options = cfgmod.scenario_options_from_sweep(sweep_cfg)
    scenarios = random_scenarios(int(sweep_cfg["count"]), options,
                                 seed=int(sweep_cfg["seed"]))
    pipelines = _build_pipelines(sweep_cfg, hset)
    duration = float(sweep_cfg.get("speech_duration_s", 3.0))

    records = []
    warnings = 0
    for sid, scenario in enumerate(scenarios):
        try:
            brir = image_method_brir(scenario, hset)
            speech = resolve_speech(scenario.speech, duration,
                                    hset.sample_rate, scenario.seed)
            signal, truth = synthesize(scenario, brir, speech)
        except Exception as exc:   # scenario-level fault: record and go on
            warnings += 1
            for fe_name, pipes in pipelines.items():
                for search in sweep_cfg["searches"]:
                    for method in sweep_cfg["methods"]:
                        records.append(RunRecord(
                            scenario_id=sid, method=method, frontend=fe_name,
                            search=search, snr_db=scenario.snr_db,
                            t60_s=scenario.t60, room=scenario.room,
                            distance_m=scenario.source_distance,
                            truth_lateral_deg=scenario.truth_lateral(),
                            note=f"aborted: {exc}"))
            continue

        for fe_name, pipes in pipelines.items():
            any_pipe = next(iter(pipes.values()))
            any_pipe.prepare(signal.sample_rate)
            t0 = time.perf_counter()
            pair = binaural_analyze(signal, any_pipe.frontend,
                                    channel_indices=any_pipe.channel_indices)
            t_frontend = 1e3 * (time.perf_counter() - t0)
            band_free = SmoothingParams(
                time_window=any_pipe.smoothing.time_window,
                freq_bins=any_pipe.smoothing.freq_bins, band=None)
            t0 = time.perf_counter()
            field = spatial_spectrum(pair, band_free,
                                     focusing=any_pipe.focusing)
            t_smooth = 1e3 * (time.perf_counter() - t0)
            t0 = time.perf_counter()
            passed = dpd_select(field, any_pipe.dpd_mode, any_pipe.dpd_value)
            t_dpd = 1e3 * (time.perf_counter() - t0)

            je_tables = {}
            if "je" in sweep_cfg["methods"]:
                base_table = build_cue_table(hset, any_pipe.frequencies)
                for search in sweep_cfg["searches"]:
                    if search == "1d":
                        je_tables["1d"] = marginalize_to_lateral(
                            base_table, pipes.get("1d", any_pipe).lateral_grid)
                    else:
                        je_tables["2d"] = base_table

            for search in sweep_cfg["searches"]:
                pipe = pipes[search]
                pipe.prepare(signal.sample_rate)
                common = dict(
                    scenario_id=sid, frontend=fe_name, search=search,
                    snr_db=scenario.snr_db, t60_s=scenario.t60,
                    room=scenario.room, distance_m=scenario.source_distance,
                    truth_lateral_deg=truth)
                for method in sweep_cfg["methods"]:
                    t0 = time.perf_counter()
                    if method == "dpd":
                        if passed.size:
                            lats = _search_estimates(field, passed, pipe)
                            est, n_pass = float(lats.mean()), passed.size
                        else:
                            est, n_pass = None, 0
                    else:
                        res = je_estimate(pair, field, passed,
                                          je_tables[search], pipe.smoothing)
                        est = None if res.no_estimate else res.lateral
                        n_pass = res.n_pass
                    t_search = 1e3 * (time.perf_counter() - t0)
                    records.append(RunRecord(
                        method=method, estimate_lateral_deg=est,
                        n_pass=n_pass,
                        timings_ms={"frontend": t_frontend,
                                    "smoothing": t_smooth, "dpd": t_dpd,
                                    "search": t_search},
                        **common))
        if progress is not None:
            progress(sid + 1, len(scenarios))

    summary = summarize(records)
    summary["warnings"] = warnings
    summary["seed"] = int(sweep_cfg["seed"])
    summary["count"] = len(scenarios)
    return records, summary


# ---------------------------------------------------------------------------
# CSV / plot-data writers
# ---------------------------------------------------------------------------

RECORD_COLUMNS = [
    "scenario_id", "method", "frontend", "search", "snr_db", "t60_s",
    "room_x_m", "room_y_m", "room_z_m", "distance_m", "truth_lateral_deg",
    "estimate_lateral_deg", "error_deg", "n_pass", "no_estimate", "note",
]

TIMING_COLUMNS = ["scenario_id", "method", "frontend", "search",
                  "frontend_ms", "smoothing_ms", "dpd_ms", "search_ms"]


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".6f")
    return str(x)


def records_to_csv(records) -> str:
    """Deterministic records table (documented column order, no timings)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RECORD_COLUMNS)
    for r in records:
        writer.writerow([
            r.scenario_id, r.method, r.frontend, r.search, _fmt(r.snr_db),
            _fmt(r.t60_s), _fmt(float(r.room[0])), _fmt(float(r.room[1])),
            _fmt(float(r.room[2])), _fmt(r.distance_m),
            _fmt(r.truth_lateral_deg), _fmt(r.estimate_lateral_deg),
            _fmt(r.error_deg), r.n_pass, int(r.no_estimate), r.note,
        ])
    return buf.getvalue()


def timings_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TIMING_COLUMNS)
    for r in records:
        t = r.timings_ms
        writer.writerow([r.scenario_id, r.method, r.frontend, r.search]
                        + [_fmt(t.get(k)) for k in
                           ("frontend", "smoothing", "dpd", "search")])
    return buf.getvalue()


def write_plot_data(summary, out_dir):
    """Gnuplot-friendly .dat files, one per trend axis: first column the
    condition value, then one RMSE column per variant (column order in the
    header comment)."""
    import os
    paths = []
    for axis, trend in summary["trends"].items():
        variants = sorted(trend)
        conditions = sorted({c for v in variants for c in trend[v]},
                            key=float)
        lines = [f"# {axis.replace('rmse_vs_', '')} "
                 + " ".join(variants)]
        for cond in conditions:
            row = [cond]
            for v in variants:
                cell = trend[v].get(cond)
                val = cell["rmse_deg"] if cell else None
                row.append("nan" if val is None else format(val, ".4f"))
            lines.append(" ".join(row))
        path = os.path.join(out_dir, f"{axis}.dat")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# runtime benchmark
# ---------------------------------------------------------------------------

def music_eval_counts(pipe_1d: Pipeline, pipe_2d: Pipeline, n_pass) -> dict:
    """Analytic steering-evaluation counts per search mode."""
    return {
        "grid_1d": int(pipe_1d.lateral_grid.size),
        "grid_2d": int(pipe_2d.hset.n_directions),
        "per_bin_ratio": pipe_2d.hset.n_directions
        / pipe_1d.lateral_grid.size,
        "evals_1d": int(n_pass) * int(pipe_1d.lateral_grid.size),
        "evals_2d": int(n_pass) * int(pipe_2d.hset.n_directions),
    }


def bench_search(signal: BinauralSignal, pipe_1d: Pipeline,
                 pipe_2d: Pipeline, repeats=5) -> dict:
    """Median full-pipeline wall time under the 1D and 2D searches.

    Both pipelines run on the identical input; one unmeasured warm-up pass
    precedes ``repeats`` measured passes per mode (medians reported).
    """
    if repeats < 5:
        raise ValueError("need at least 5 repeats")
    results = {}
    n_pass = None
    for name, pipe in (("1d", pipe_1d), ("2d", pipe_2d)):
        pipe.prepare(signal.sample_rate)
        res = pipe.localize(signal)       # warm-up (also fills FFT caches)
        n_pass = res.n_pass
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            pipe.localize(signal)
            times.append(1e3 * (time.perf_counter() - t0))
        results[name] = float(np.median(times))
    out = {
        "t_1d_ms": results["1d"],
        "t_2d_ms": results["2d"],
        "ratio": results["2d"] / results["1d"],
        "n_pass": int(n_pass),
    }
    out.update(music_eval_counts(pipe_1d, pipe_2d, n_pass or 0))
    return out
