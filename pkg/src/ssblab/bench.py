"""Monte Carlo campaigns: detection rate, CFO MAE and channel NMSE of the
probe BS versus its SINR, for the joint framework and the reference methods."""
import csv
import hashlib
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml

from .baselines import (autocorr_multi, baseline_autocorr_cfo, baseline_power_weighted, matched_filter_gains,
                        per_ssb_single)
from .errors import ConfigError, SsblabError
from .pipeline import DetectorOptions, Receiver, classical_cascade, detect_and_estimate, single_ssb_estimates
from .scenario import ScenarioConfig, sample_ground_truth, synthesize_received

__all__ = [
    "METHODS", "CampaignConfig", "MethodOutcome", "TrialResult", "baseline_autocorr_cfo",
    "baseline_power_weighted", "run_trial", "run_campaign", "summarize", "write_results_csv",
    "config_hash",
]

log = logging.getLogger(__name__)

METHODS = ("proposed_multi", "proposed_single", "baseline_autocorr", "baseline_power_weighted",
           "classical_pipeline")

RESULT_COLUMNS = ("sinr_db", "method", "trials", "detection_rate", "detection_se", "cfo_mae", "cfo_mae_se",
                  "nmse", "nmse_se", "seed", "config_hash")


@dataclass
class CampaignConfig:
    """A SINR sweep of the probe BS (interferers keep unit mean power)."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    sinr_grid: list = field(default_factory=lambda: [-30.0, -20.0, -10.0, -5.0, 0.0, 10.0])
    trials: int = 200
    methods: tuple = METHODS
    seed: int = 2024
    probe: int = 0
    workers: int = 1
    timing_tolerance: int = 1

    def __post_init__(self):
        if isinstance(self.scenario, dict):
            self.scenario = ScenarioConfig.from_dict(self.scenario)
        self.sinr_grid = [float(s) for s in self.sinr_grid]
        self.methods = tuple(self.methods)
        if int(self.trials) < 1:
            raise ConfigError("trials must be >= 1")
        self.trials = int(self.trials)
        if not self.sinr_grid:
            raise ConfigError("sinr_grid must be non-empty")
        bad = set(self.methods) - set(METHODS)
        if bad or not self.methods:
            raise ConfigError(f"unknown methods {sorted(bad)}; choose from {METHODS}")
        if not 0 <= self.probe < max(self.scenario.K, 1):
            raise ConfigError("probe index out of range")
        if self.scenario.K < 1:
            raise ConfigError("a campaign needs at least the probe BS")

    def to_dict(self):
        return {
            "scenario": self.scenario.to_dict(),
            "sinr_grid": list(self.sinr_grid),
            "trials": self.trials,
            "methods": list(self.methods),
            "seed": self.seed,
            "probe": self.probe,
            "workers": self.workers,
            "timing_tolerance": self.timing_tolerance,
        }

    def result_hash(self):
        """Hash of everything that can change the results (worker count cannot)."""
        d = self.to_dict()
        d.pop("workers")
        return config_hash(d)

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown campaign keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_campaign(path):
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping")
    return CampaignConfig.from_dict(doc.get("campaign", doc))


def config_hash(d):
    """Short SHA-256 of the canonical JSON form of a resolved config."""
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"), default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class MethodOutcome:
    detected: bool
    cfo_abs_error: float
    channel_nmse: float
    error: str = None

    def __post_init__(self):
        self.detected = bool(self.detected)
        self.cfo_abs_error = float(self.cfo_abs_error)
        self.channel_nmse = float(self.channel_nmse)


@dataclass
class TrialResult:
    """Scores of the probe BS for every method, plus SIC diagnostics of the joint estimator."""

    sinr_db: float
    seed: int
    outcomes: dict
    sic_iterations: int = 0
    sic_converged: bool = False
    sic_trace: list = field(default_factory=list)
    n_detected: int = 0
    n_true_detected: int = 0


def _missed(omega, reason=None):
    return MethodOutcome(False, float(abs(omega)), 1.0, reason)


def _nmse(alpha_hat, alpha):
    return float(np.sum(np.abs(alpha_hat - alpha) ** 2) / np.sum(np.abs(alpha) ** 2))


def trial_seed(base, point, trial):
    return int(np.random.SeedSequence([int(base), int(point), int(trial)]).generate_state(1, np.uint64)[0])


def run_trial(cfg, sinr_db, seed, methods=METHODS, probe=0, timing_tolerance=1, detector=None):
    """Synthesize one scenario with the probe BS at ``sinr_db`` and score every method.

    Inner failures are recorded per method and never abort the trial.  With
    ``sinr_db=None`` the scenario keeps its own SINR profile (needed for a
    noiseless single-BS trial, where no probe power realizes a finite SINR).
    """
    if sinr_db is None:
        scen = cfg
    else:
        scen = cfg.replace(sinr_profile={"probe": probe, "sinr_db": float(sinr_db)})
    gt = sample_ground_truth(scen, seed)
    y = synthesize_received(scen, gt, seed).samples
    rx = Receiver.from_scenario(scen)
    eta = scen.eta
    true_tau = int(gt.tau[probe])
    true_omega = float(gt.omega[probe])
    true_alpha = gt.alpha[probe]
    ids = tuple(gt.ids[probe])
    outcomes = {}
    result = TrialResult(float("nan") if sinr_db is None else float(sinr_db), int(seed), outcomes)

    det = rep = None
    det_error = None
    try:
        det, rep = detect_and_estimate(y, rx, detector)
    except SsblabError as exc:
        det_error = f"{type(exc).__name__}: {exc}"
    k_hat = None
    if rep is not None:
        result.sic_iterations = rep.iterations
        result.sic_converged = bool(rep.converged)
        result.sic_trace = [float(v) for v in rep.residual_cfo_trace]
        result.n_detected = len(rep.bss)
        truth = {tuple(i) for i in gt.ids}
        result.n_true_detected = sum(1 for b in rep.bss if tuple(b.ids) in truth)
        for j, b in enumerate(rep.bss):
            if tuple(b.ids) == ids and abs(int(b.tau_grid[0]) - true_tau) <= timing_tolerance:
                k_hat = j
    grid = None if k_hat is None else rep.bss[k_hat].tau_grid

    for m in methods:
        try:
            if m == "classical_pipeline":
                outcomes[m] = _score_classical(y, rx, gt, probe, eta, timing_tolerance)
                continue
            if grid is None:
                outcomes[m] = _missed(true_omega, det_error or "probe not detected")
                continue
            frame = rx.frame(ids)
            if m == "proposed_multi":
                b = rep.bss[k_hat]
                outcomes[m] = MethodOutcome(True, abs(b.omega_hat - true_omega), _nmse(b.alpha_hat, true_alpha))
            elif m == "proposed_single":
                om, al = single_ssb_estimates(y, rx, det.bss)
                outcomes[m] = MethodOutcome(True, float(np.mean(np.abs(om[k_hat] - true_omega))),
                                            _nmse(al[k_hat], true_alpha))
            elif m == "baseline_autocorr":
                w = autocorr_multi(y, frame, grid)
                outcomes[m] = MethodOutcome(True, abs(w - true_omega),
                                            _nmse(matched_filter_gains(y, frame, grid, w), true_alpha))
            elif m == "baseline_power_weighted":
                est, pw = per_ssb_single(y, frame, grid)
                w = baseline_power_weighted(est, pw, frame.tau_c)
                outcomes[m] = MethodOutcome(True, abs(w - true_omega),
                                            _nmse(matched_filter_gains(y, frame, grid, w), true_alpha))
        except (SsblabError, ArithmeticError, ValueError) as exc:
            outcomes[m] = _missed(true_omega, f"{type(exc).__name__}: {exc}")
    return result


def _score_classical(y, rx, gt, probe, eta, tol):
    ids = tuple(gt.ids[probe])
    hits = classical_cascade(y, rx)
    per_ssb = {}
    for h in hits:
        if h.ids == ids and abs(h.t - (int(gt.tau[probe]) + int(eta[h.ssb]))) <= tol:
            per_ssb[h.ssb] = h
    if len(per_ssb) != rx.pattern.P:
        return _missed(gt.omega[probe], f"found in {len(per_ssb)} of {rx.pattern.P} SSB windows")
    ws = np.array([per_ssb[p].omega for p in range(rx.pattern.P)])
    w = float(np.angle(np.mean(np.exp(1j * ws * rx.tau_c))) / rx.tau_c)
    grid = np.array([per_ssb[p].t for p in range(rx.pattern.P)])
    a = matched_filter_gains(y, rx.frame(ids), grid, w)
    return MethodOutcome(True, abs(w - gt.omega[probe]), _nmse(a, gt.alpha[probe]))


def _trial_job(args):
    cfg_dict, sinr, seed, methods, probe, tol = args
    return run_trial(ScenarioConfig.from_dict(cfg_dict), sinr, seed, methods, probe, tol)


def run_campaign(cc, progress=None):
    """Run every (SINR point, trial) with derived seeds; returns ``(rows, trials)``.

    ``rows`` is the summary table (see :func:`summarize`); ``trials`` maps each
    SINR to its :class:`TrialResult` list in trial-index order, so aggregates do
    not depend on worker scheduling.
    """
    jobs = []
    for i, sinr in enumerate(cc.sinr_grid):
        for t in range(cc.trials):
            jobs.append((cc.scenario.to_dict(), sinr, trial_seed(cc.seed, i, t), cc.methods, cc.probe,
                         cc.timing_tolerance))
    if cc.workers and cc.workers > 1:
        with ProcessPoolExecutor(max_workers=cc.workers) as pool:
            results = list(pool.map(_trial_job, jobs, chunksize=4))
    else:
        results = []
        for n, job in enumerate(jobs):
            results.append(_trial_job(job))
            if progress:
                progress(n + 1, len(jobs))
    trials = {}
    for job, res in zip(jobs, results):
        trials.setdefault(job[1], []).append(res)
    return summarize(cc, trials), trials


def _mean_se(x):
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return float("nan"), float("nan")
    se = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
    return float(np.mean(x)), se


def summarize(cc, trials):
    """Per (SINR, method): detection rate, CFO MAE and mean NMSE with standard errors."""
    h = cc.result_hash()
    rows = []
    for sinr in cc.sinr_grid:
        res = trials.get(sinr, [])
        for m in cc.methods:
            outs = [r.outcomes[m] for r in res if m in r.outcomes]
            det, det_se = _mean_se([o.detected for o in outs])
            mae, mae_se = _mean_se([o.cfo_abs_error for o in outs])
            nm, nm_se = _mean_se([o.channel_nmse for o in outs])
            rows.append({"sinr_db": sinr, "method": m, "trials": len(outs), "detection_rate": det,
                         "detection_se": det_se, "cfo_mae": mae, "cfo_mae_se": mae_se, "nmse": nm,
                         "nmse_se": nm_se, "seed": cc.seed, "config_hash": h})
    return rows


def write_results_csv(rows, fh=None):
    """Write the summary table; returns the text when ``fh`` is None."""
    buf = fh or io.StringIO()
    w = csv.DictWriter(buf, fieldnames=RESULT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})
    return None if fh else buf.getvalue()
