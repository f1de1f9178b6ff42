"""Command-line interface.

Subcommands: ``hrtf-prep``, ``simulate``, ``localize``, ``sweep``, ``bench``.
Machine-readable output (JSON, CSV, .dat) goes to stdout or ``--out``;
human-readable progress goes to stderr. Exit codes: 0 success, 1
usage/config error, 2 no-estimate, 3 I/O or data error.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys

import numpy as np
import scipy.fft as sfft

from . import cache as cachemod
from . import config as cfgmod
from . import evaluation, figures
from .config import ConfigError
from .hrtf import (HrtfSet, load_hrtf_set, save_hrtf_set, build_lateral_field,
                   focusing_bank)
from .je import je_localize
from .localization import Pipeline
from .roomsim import (RoomScenario, image_method_brir, synthesize,
                      resolve_speech, save_brir, critical_distance)
from .signal import read_wav_binaural, write_wav_binaural, read_wav

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_ESTIMATE = 2
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _log(msg):
    print(msg, file=sys.stderr)


def _emit(payload, out_path=None):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _pipeline_overrides(args):
    overrides = {}
    if getattr(args, "frontend", None):
        overrides.setdefault("frontend", {})["type"] = args.frontend
    if getattr(args, "search", None):
        overrides.setdefault("search", {})["mode"] = args.search
    if getattr(args, "method", None):
        overrides.setdefault("search", {})["method"] = args.method
    return overrides


# ---------------------------------------------------------------------------
# hrtf-prep
# ---------------------------------------------------------------------------

_WAV_NAME = re.compile(r"AZ(\d+(?:\.\d+)?)_EL(-?\d+(?:\.\d+)?)\.wav$",
                       re.IGNORECASE)


def _hrtf_from_wav_dir(path) -> HrtfSet:
    names = sorted(f for f in os.listdir(path) if f.lower().endswith(".wav"))
    dirs, irs = [], []
    for name in names:
        m = _WAV_NAME.search(name)
        if not m:
            raise ValueError(
                f"{name}: expected AZxxx_ELyyy.wav naming in {path}")
        data, rate = read_wav(os.path.join(path, name))
        if data.ndim != 2 or data.shape[1] != 2:
            raise ValueError(f"{name}: per-direction HRIR WAVs must be stereo")
        dirs.append([float(m.group(1)) % 360.0, float(m.group(2))])
        irs.append(data.T)
    if not irs:
        raise ValueError(f"no AZxxx_ELyyy.wav files in {path}")
    rates = {read_wav(os.path.join(path, n))[1] for n in names}
    if len(rates) > 1:
        raise ValueError(f"mixed sample rates in {path}: {sorted(rates)}")
    t_max = max(ir.shape[1] for ir in irs)
    irs = [np.pad(ir, ((0, 0), (0, t_max - ir.shape[1]))) for ir in irs]
    return HrtfSet(directions=np.asarray(dirs), sample_rate=rates.pop(),
                   irs=np.stack(irs))


def _analysis_frequencies(cfg):
    fe = cfg["frontend"]
    lo, hi = cfg["smoothing"]["band_hz"]
    if fe["type"] == "stft":
        fs = int(fe.get("sample_rate", 48000))
        n = int(fe.get("fft_size", 1536))
        freqs = np.arange(n // 2 + 1) * (fs / n)
    else:
        bank = cfgmod.frontend_from_config(cfg)
        freqs = bank.center_frequencies
    return freqs[(freqs >= lo) & (freqs <= hi)]


def cmd_hrtf_prep(args) -> int:
    cfg = cfgmod.load_pipeline_config(args.config,
                                      overrides=_pipeline_overrides(args))
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    container = os.path.join(out_dir, "hrtf.bdh")
    manifest_path = os.path.join(out_dir, "manifest.json")

    if args.sphere:
        source_desc = {"kind": "sphere", "params": cfg["hrtf"].get(
            "sphere", cfgmod.DEFAULT_PIPELINE["hrtf"]["sphere"])}
    else:
        if not args.input:
            raise ConfigError("hrtf-prep needs --sphere or --input DIR")
        source_desc = {"kind": "wav-dir", "path": os.path.abspath(args.input),
                       "digest": _wav_dir_digest(args.input)}

    freqs = _analysis_frequencies(cfg)
    params_desc = {
        "frequencies": [float(f) for f in freqs],
        "lateral_step": cfg["search"].get("lateral_step_deg", 2.0),
        "n_intraconic": cfg["search"].get("n_intraconic", 36),
        "freq_bins": cfg["smoothing"]["freq_bins"],
    }
    key = cachemod.content_key(source_desc, params_desc)

    if os.path.exists(manifest_path) and os.path.exists(container):
        with open(manifest_path) as fh:
            manifest = json.load(fh)
        if manifest.get("key") == key and all(
                os.path.exists(os.path.join(out_dir, f))
                and cachemod.sha256_file(os.path.join(out_dir, f)) == digest
                for f, digest in manifest.get("outputs", {}).items()):
            _log(f"hrtf-prep: cache hit ({key[:16]}), nothing to do")
            _emit({"status": "cache-hit", "key": key,
                   "outputs": sorted(manifest["outputs"])})
            return EXIT_OK

    _log("hrtf-prep: building HRTF set")
    if args.sphere:
        hset = cfgmod.hrtf_set_from_config(
            {"hrtf": {"sphere": source_desc["params"]}})
    else:
        hset = _hrtf_from_wav_dir(args.input)
    save_hrtf_set(container, hset)

    _log(f"hrtf-prep: computing lateral steering field over "
         f"{freqs.size} frequencies")
    lateral_grid = np.arange(0.0, 180.0 + 1e-9,
                             float(params_desc["lateral_step"]))
    fieldobj = build_lateral_field(hset, lateral_grid,
                                   int(params_desc["n_intraconic"]), freqs)
    field_path = os.path.join(out_dir, "lateral_field.npz")
    cachemod.save_arrays(field_path, lateral_grid=fieldobj.lateral_grid,
                         frequencies=fieldobj.frequencies, u1=fieldobj.u1,
                         singular_values=fieldobj.singular_values,
                         effective_rank=fieldobj.effective_rank)

    _log("hrtf-prep: computing focusing bank")
    ops = focusing_bank(hset, freqs, window=int(params_desc["freq_bins"]))
    mats = np.stack([op.matrices if op is not None
                     else np.full((int(params_desc["freq_bins"]), 2, 2),
                                  np.nan + 0j)
                     for op in ops])
    residuals = np.stack([op.residuals if op is not None
                          else np.full(int(params_desc["freq_bins"]), np.nan)
                          for op in ops])
    focus_path = os.path.join(out_dir, "focusing_bank.npz")
    cachemod.save_arrays(focus_path, frequencies=freqs, matrices=mats,
                         residuals=residuals)

    outputs = {os.path.basename(p): cachemod.sha256_file(p)
               for p in (container, field_path, focus_path)}
    with open(manifest_path, "w") as fh:
        json.dump({"key": key, "source": source_desc, "params": params_desc,
                   "outputs": outputs}, fh, indent=2, sort_keys=True)
    _emit({"status": "built", "key": key, "outputs": sorted(outputs),
           "n_directions": hset.n_directions,
           "median_effective_rank": float(
               np.median(fieldobj.effective_rank))})
    return EXIT_OK


def _wav_dir_digest(path):
    if not os.path.isdir(path):
        raise FileNotFoundError(f"{path} is not a directory")
    names = sorted(f for f in os.listdir(path) if f.lower().endswith(".wav"))
    return cachemod.content_key(
        *[f"{n}:{cachemod.sha256_file(os.path.join(path, n))}"
          for n in names])


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = cfgmod.load_pipeline_config(args.config,
                                      overrides=_pipeline_overrides(args))
    scn = {}
    if args.scenario:
        with open(args.scenario) as fh:
            scn = json.load(fh)
    room = tuple(scn.get("room", [8.0, 5.0, 3.0]))
    t60 = float(scn.get("t60_s", 0.4))
    dist = scn.get("distance_m")
    if dist is None:
        dist = float(scn.get("distance_factor", 1.0)) * critical_distance(
            room, t60)
    scenario = RoomScenario(
        room=room, t60=t60,
        source_direction=tuple(scn.get("direction_azel", [30.0, 0.0])),
        source_distance=float(dist),
        array_position=tuple(scn.get("array_position",
                                     [room[0] / 2, room[1] / 2, 1.5])),
        array_yaw=float(scn.get("array_yaw_deg", 0.0)),
        speech=scn.get("speech", "synthetic:0"),
        snr_db=scn.get("snr_db", 20.0),
        seed=int(args.seed if args.seed is not None
                 else scn.get("seed", 0)))
    hset = cfgmod.hrtf_set_from_config(cfg)
    absorption = scn.get("absorption")
    _log(f"simulate: room {room}, T60 {t60}s, direction "
         f"{scenario.source_direction}, distance {dist:.2f} m")
    brir = image_method_brir(scenario, hset, absorption=absorption)
    speech = resolve_speech(scenario.speech,
                            float(scn.get("speech_duration_s", 3.0)),
                            hset.sample_rate, scenario.seed)
    signal, truth = synthesize(scenario, brir, speech)
    os.makedirs(args.out, exist_ok=True)
    wav_path = os.path.join(args.out, "binaural.wav")
    write_wav_binaural(wav_path, signal)
    save_brir(os.path.join(args.out, "brir.wav"),
              os.path.join(args.out, "brir.json"), brir)
    sidecar = {
        "direction": {"az": scenario.source_direction[0],
                      "el": scenario.source_direction[1]},
        "truth_lateral_deg": truth,
        "distance": scenario.source_distance,
        "sample_rate": hset.sample_rate,
        "snr_db": scenario.snr_db,
        "t60_s": t60,
        "seed": scenario.seed,
        "n_images": brir.meta.get("n_images"),
    }
    with open(os.path.join(args.out, "binaural.json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
    _emit({"status": "ok", "wav": wav_path,
           "truth_lateral_deg": truth,
           "n_images": brir.meta.get("n_images")})
    return EXIT_OK


# ---------------------------------------------------------------------------
# localize
# ---------------------------------------------------------------------------

def cmd_localize(args) -> int:
    cfg = cfgmod.load_pipeline_config(args.config,
                                      overrides=_pipeline_overrides(args))
    signal = read_wav_binaural(args.audio)
    hset = cfgmod.hrtf_set_from_config(cfg)
    pipe = cfgmod.pipeline_from_config(cfg, hset=hset)
    method = cfg["search"].get("method", "dpd")
    _log(f"localize: {method} / {cfg['frontend']['type']} / "
         f"{cfg['search']['mode']} on {args.audio}")
    if method == "je":
        result = je_localize(signal, pipe)
    else:
        result = pipe.localize(signal)
    report = result.report()
    report["method"] = method
    report["frontend"] = cfg["frontend"]["type"]
    report["search"] = cfg["search"]["mode"]

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _emit(report, os.path.join(args.out, "report.json"))
        with open(os.path.join(args.out, "bins.csv"), "w") as fh:
            fh.write("channel,frame,ratio,lateral_deg\n")
            for row in report["bins"]:
                fh.write(f"{row['channel']},{row['frame']},"
                         f"{row['ratio']:.6g},{row['lateral_deg']:.2f}\n")
        figures.render_histogram(
            result, os.path.join(args.out, "histogram.png"))
        _log(f"localize: report written to {args.out}")
    _emit(report)
    return EXIT_NO_ESTIMATE if result.no_estimate else EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def cmd_sweep(args) -> int:
    overrides = {"pipeline": _pipeline_overrides(args)}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.count is not None:
        overrides["count"] = args.count
    for name in ("methods", "frontends", "searches"):
        flag = getattr(args, name, None)
        if flag:
            overrides[name] = flag.split(",")
    sweep_cfg = cfgmod.load_sweep_config(args.config, overrides)

    n_runs = (sweep_cfg["count"] * len(sweep_cfg["methods"])
              * len(sweep_cfg["frontends"]) * len(sweep_cfg["searches"]))
    if args.dry_run:
        _emit({"status": "dry-run", "count": sweep_cfg["count"],
               "methods": sweep_cfg["methods"],
               "frontends": sweep_cfg["frontends"],
               "searches": sweep_cfg["searches"],
               "t60_options": sweep_cfg["t60_options"],
               "snr_options": sweep_cfg["snr_options"],
               "planned_records": n_runs, "seed": sweep_cfg["seed"]})
        return EXIT_OK

    os.makedirs(args.out, exist_ok=True)
    _log(f"sweep: {sweep_cfg['count']} scenarios -> {n_runs} records")

    def progress(done, total):
        if done % 5 == 0 or done == total:
            _log(f"sweep: scenario {done}/{total}")

    with sfft.set_workers(max(1, args.threads)):
        records, summary = evaluation.run_sweep(sweep_cfg, progress=progress)

    with open(os.path.join(args.out, "records.csv"), "w") as fh:
        fh.write(evaluation.records_to_csv(records))
    with open(os.path.join(args.out, "timings.csv"), "w") as fh:
        fh.write(evaluation.timings_to_csv(records))
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    dat_dir = os.path.join(args.out, "plotdata")
    os.makedirs(dat_dir, exist_ok=True)
    evaluation.write_plot_data(summary, dat_dir)
    if not args.no_figures:
        figures.render_trend_figures(summary,
                                     os.path.join(args.out, "figures"))
    _log(f"sweep: wrote records.csv, summary.json, plotdata/ and figures/ "
         f"under {args.out} ({summary['warnings']} warnings)")
    _emit({"status": "ok", "records": len(records),
           "warnings": summary["warnings"],
           "variants": summary["variants"]})
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def cmd_bench(args) -> int:
    # The benchmark contrasts the two search modes on one identical input;
    # its default front-end is the STFT so the shared stages stay light.
    overrides = _pipeline_overrides(args)
    overrides.setdefault("frontend", {}).setdefault("type", "stft")
    cfg = cfgmod.load_pipeline_config(args.config, overrides=overrides)
    hset = cfgmod.hrtf_set_from_config(cfg)
    frontend = cfgmod.frontend_from_config(cfg)
    smoothing = cfgmod.smoothing_from_config(cfg)
    kwargs = dict(dpd_mode=cfg["dpd"]["mode"],
                  dpd_value=float(cfg["dpd"]["value"]),
                  lateral_step=float(cfg["search"].get("lateral_step_deg",
                                                       2.0)),
                  n_intraconic=int(cfg["search"].get("n_intraconic", 36)))
    pipe_1d = Pipeline(hset, frontend, smoothing, search="1d", **kwargs)
    pipe_2d = Pipeline(hset, frontend, smoothing, search="2d", **kwargs)

    if args.audio:
        signal = read_wav_binaural(args.audio)
    else:
        duration = float(args.duration)
        scenario = RoomScenario(
            room=(8.0, 5.0, 3.0), t60=0.4, source_direction=(30.0, 0.0),
            source_distance=1.5, array_position=(4.0, 2.5, 1.5),
            speech="synthetic:0", snr_db=20.0,
            seed=args.seed if args.seed is not None else 0)
        brir = image_method_brir(scenario, hset, absorption=1.0)
        speech = resolve_speech(scenario.speech, duration, hset.sample_rate,
                                scenario.seed)
        signal, _ = synthesize(scenario, brir, speech)
    _log(f"bench: {signal.duration:.1f} s fixture, grids "
         f"{pipe_1d.lateral_grid.size} (1D) vs {hset.n_directions} (2D)")
    result = evaluation.bench_search(signal, pipe_1d, pipe_2d,
                                     repeats=args.repeats)
    _emit(result, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="binaural-doa",
                     description="Binaural direction-of-arrival estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default=None):
        p.add_argument("--config", help="pipeline config JSON")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=1,
                       help="worker cap for internal FFT parallelism")
        p.add_argument("--frontend", choices=["stft", "afb"])
        p.add_argument("--search", choices=["1d", "2d"])
        p.add_argument("--method", choices=["dpd", "je"])
        if out_default is not None:
            p.add_argument("--out", default=out_default)
        else:
            p.add_argument("--out")

    p = sub.add_parser("hrtf-prep",
                       help="build HRTF container + steering caches")
    common(p, out_default="hrtf-prep-out")
    p.add_argument("--sphere", action="store_true",
                   help="use the built-in rigid-sphere generator")
    p.add_argument("--input", help="directory of AZxxx_ELyyy.wav files")
    p.set_defaults(func=cmd_hrtf_prep)

    p = sub.add_parser("simulate", help="render a simulated scenario")
    common(p, out_default="simulate-out")
    p.add_argument("--scenario", help="scenario JSON file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("localize", help="estimate the lateral angle")
    common(p)
    p.add_argument("audio", help="binaural WAV input")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("sweep", help="run the evaluation sweep")
    common(p, out_default="sweep-out")
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--methods")
    p.add_argument("--frontends")
    p.add_argument("--searches")
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="1D vs 2D search runtime")
    common(p)
    p.add_argument("--audio", help="binaural WAV fixture")
    p.add_argument("--duration", default=5.0, type=float)
    p.add_argument("--repeats", default=5, type=int)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return EXIT_USAGE
    except FileNotFoundError as exc:
        _log(f"missing file: {exc}")
        return EXIT_IO
    except OSError as exc:
        _log(f"I/O error: {exc}")
        return EXIT_IO
    except ValueError as exc:
        if "checksum" in str(exc) or "container" in str(exc) \
                or "truncated" in str(exc):
            _log(f"data error: {exc}")
            return EXIT_IO
        _log(f"error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
