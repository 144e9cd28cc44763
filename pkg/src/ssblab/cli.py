"""``ssblab`` command line: simulate, estimate, campaign, analyze.

Exit codes: 0 success, 1 internal error, 2 usage error, 3 configuration
error, 4 file I/O error, 5 nothing detected.
"""
import argparse
import csv
import datetime as _dt
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from ._accel import backend
from .analytics import ANALYTICS_COLUMNS, MotionSweep, motion_table, rad_to_hz
from .bench import CampaignConfig, config_hash, run_campaign, write_results_csv
from .errors import ConfigError, NoDetectionError, SsblabError, WaveformIOError
from .io import read_waveform, write_waveform
from .pipeline import DetectorOptions, Receiver, detect_and_estimate
from .scenario import ScenarioConfig, sample_ground_truth, synthesize_received

log = logging.getLogger("ssblab")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_CONFIG, EXIT_IO, EXIT_NO_DETECTION = 0, 1, 2, 3, 4, 5
OUT_ENV = "SSBLAB_OUT"
TOP_KEYS = {"seed", "scenario", "detector", "campaign", "analytics"}


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise WaveformIOError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    bad = set(doc) - TOP_KEYS
    if bad:
        raise ConfigError(f"{path}: unknown top-level keys {sorted(bad)}; expected {sorted(TOP_KEYS)}")
    # every section is checked up front, whichever subcommand consumes it
    _scenario(doc)
    DetectorOptions.from_dict(doc.get("detector"))
    MotionSweep.from_dict(doc.get("analytics"))
    return doc


def _scenario(doc):
    return ScenarioConfig.from_dict(doc.get("scenario") or {})


def _out_dir(args):
    out = Path(args.out or os.environ.get(OUT_ENV) or "ssblab_out")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise WaveformIOError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise WaveformIOError(f"output directory {out} is not writable")
    return out


def _write_json(path, obj):
    try:
        with open(path, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise WaveformIOError(f"cannot write {path}: {exc}") from exc


def _metadata(command, resolved, h, extra=None):
    meta = {
        "command": command,
        "config": resolved,
        "config_hash": h,
        "version": __version__,
        "backend": backend(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    meta.update(extra or {})
    return meta


def cmd_simulate(args):
    doc = _load_config(args.config)
    cfg = _scenario(doc)
    seed = int(args.seed if args.seed is not None else doc.get("seed", 0))
    resolved = {"scenario": cfg.to_dict(), "seed": seed}
    h = config_hash(resolved)
    out = _out_dir(args)
    gt = sample_ground_truth(cfg, seed)
    y = synthesize_received(cfg, gt, seed)
    write_waveform(out / "waveform.c64", y.samples, y.sample_rate,
                   {"config_hash": h, "seed": seed, "scenario": cfg.to_dict()})
    truth = gt.to_dict()
    truth.update({"config_hash": h, "seed": seed, "sample_rate": cfg.sample_rate})
    _write_json(out / "ground_truth.json", truth)
    _write_json(out / "run_metadata.json", _metadata("simulate", resolved, h))
    log.info("wrote %d samples of %d BSs to %s", len(y), gt.K, out)
    return EXIT_OK


def cmd_estimate(args):
    doc = _load_config(args.config)
    y, side = read_waveform(args.input)
    if "scenario" in (doc or {}):
        cfg = _scenario(doc)
    elif "scenario" in side:
        cfg = ScenarioConfig.from_dict(side["scenario"])
    else:
        cfg = ScenarioConfig()
    if len(y) < cfg.N_o:
        log.warning("waveform has %d samples, scenario expects %d", len(y), cfg.N_o)
    opts = DetectorOptions.from_dict(doc.get("detector"))
    resolved = {"scenario": cfg.to_dict(), "detector": doc.get("detector") or {},
                "input": str(args.input), "input_config_hash": side.get("config_hash")}
    h = config_hash(resolved)
    out = _out_dir(args)
    _det, rep = detect_and_estimate(y.samples, Receiver.from_scenario(cfg), opts)
    fs = y.sample_rate
    bss = []
    for b in rep.by_power():
        bss.append({
            "pci": b.pci,
            "ids": list(b.ids),
            "ssb_indices": [int(p) for p in b.ssb_indices],
            "tau_grid": [int(t) for t in b.tau_grid],
            "omega_rad_per_sample": float(b.omega_hat),
            "omega_hz": float(rad_to_hz(b.omega_hat, fs)),
            "alpha_re": b.alpha_hat.real.tolist(),
            "alpha_im": b.alpha_hat.imag.tolist(),
            "mu": float(b.mu_hat),
            "power": float(b.power),
        })
    report = {
        "config_hash": h,
        "sample_rate": fs,
        "converged": bool(rep.converged),
        "iterations": int(rep.iterations),
        "eps": float(rep.eps),
        "sigma_n2": float(rep.sigma_n2),
        "residual_cfo_trace": [float(v) for v in rep.residual_cfo_trace],
        "base_stations": bss,
    }
    _write_json(out / "estimate.json", report)
    _write_json(out / "run_metadata.json", _metadata("estimate", resolved, h))
    log.info("%d BSs, converged=%s after %d iterations", len(bss), rep.converged, rep.iterations)
    return EXIT_OK


def _campaign_config(doc, args):
    camp = dict(doc.get("campaign") or {})
    if "scenario" in camp:
        raise ConfigError("put the scenario at top level, not under campaign")
    camp["scenario"] = _scenario(doc)
    if args.seed is not None:
        camp["seed"] = int(args.seed)
    elif "seed" in doc and "seed" not in camp:
        camp["seed"] = int(doc["seed"])
    return CampaignConfig.from_dict(camp)


TRIAL_COLUMNS = ("sinr_db", "trial", "seed", "sic_iterations", "sic_converged", "sic_monotone",
                 "n_detected", "n_true_detected", "config_hash")


def trace_monotone(trace, start=2):
    """True when the residual trace never increases from iteration ``start`` on."""
    t = np.asarray(trace, dtype=np.float64)
    return bool(np.all(np.diff(t[start:]) <= 0)) if t.size > start + 1 else True


def cmd_campaign(args):
    doc = _load_config(args.config)
    cc = _campaign_config(doc, args)
    h = cc.result_hash()
    out = _out_dir(args)
    total = len(cc.sinr_grid) * cc.trials

    def progress(done, _total):
        if done % max(1, total // 20) == 0 or done == total:
            log.info("trial %d / %d", done, total)

    rows, trials = run_campaign(cc, progress)
    try:
        with open(out / "results.csv", "w", newline="") as fh:
            write_results_csv(rows, fh)
        with open(out / "trials.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=TRIAL_COLUMNS, lineterminator="\n")
            w.writeheader()
            for sinr in cc.sinr_grid:
                for i, r in enumerate(trials[sinr]):
                    w.writerow({"sinr_db": sinr, "trial": i, "seed": r.seed, "sic_iterations": r.sic_iterations,
                                "sic_converged": int(r.sic_converged),
                                "sic_monotone": int(trace_monotone(r.sic_trace)),
                                "n_detected": r.n_detected, "n_true_detected": r.n_true_detected,
                                "config_hash": h})
    except OSError as exc:
        raise WaveformIOError(f"cannot write campaign tables: {exc}") from exc
    note = ("probe convention: BS index {p} sweeps the SINR grid (correlation-domain SINR against "
            "unit-power interferers plus noise); all other BSs keep unit mean power").format(p=cc.probe)
    _write_json(out / "run_metadata.json", _metadata("campaign", cc.to_dict(), h, {"sinr_axis": note}))
    return EXIT_OK


def cmd_analyze(args):
    doc = _load_config(args.config)
    sweep = MotionSweep.from_dict(doc.get("analytics"))
    resolved = {"analytics": sweep.to_dict()}
    h = config_hash(resolved)
    out = _out_dir(args)
    rows = motion_table(sweep)
    try:
        with open(out / "analytics.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=ANALYTICS_COLUMNS + ("config_hash",), lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({**{k: repr(float(v)) for k, v in r.items()}, "config_hash": h})
    except OSError as exc:
        raise WaveformIOError(f"cannot write analytics table: {exc}") from exc
    _write_json(out / "run_metadata.json", _metadata("analyze", resolved, h))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="ssblab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"ssblab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML config (keys: seed, scenario, detector, campaign, analytics)")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./ssblab_out)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("-v", "--verbose", action="count", default=0)

    common(sub.add_parser("simulate", help="synthesize a waveform and its ground truth"))
    est = sub.add_parser("estimate", help="detect and estimate every BS in a waveform file")
    common(est)
    est.add_argument("--input", required=True, help="waveform .c64 file (sidecar .json optional)")
    common(sub.add_parser("campaign", help="Monte Carlo SINR sweep of every method"))
    common(sub.add_parser("analyze", help="motion/coherence analytics table"))
    return p


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "campaign": cmd_campaign,
            "analyze": cmd_analyze}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"ssblab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except WaveformIOError as exc:
        print(f"ssblab: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NoDetectionError as exc:
        print(f"ssblab: nothing detected: {exc}", file=sys.stderr)
        return EXIT_NO_DETECTION
    except SsblabError as exc:
        print(f"ssblab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
