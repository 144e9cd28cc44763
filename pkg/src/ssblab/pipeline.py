"""End-to-end receivers.

:func:`detect_and_estimate` is the cross-burst detector with interference
cancellation feeding the joint estimator; :func:`classical_cascade` is the
conventional strongest-peak cell search run independently per SSB window.
"""
import logging
from dataclasses import dataclass, field
from math import gcd

import numpy as np

from . import kernels
from .baselines import baseline_autocorr_cfo
from .corrlab import CorrelationSet, calibrate_sigma_c2, correlation_envelope
from .detect import DEFAULT_MARGIN_DB, BurstPattern, DetectedBs, DetectionResult, cluster_bursts, cross_burst_timing, extract_markers
from .errors import ConfigError, NoDetectionError, UndefinedEstimateError
from .estimate import SicOptions, cfo_multi, reconstruct, sic_joint_estimate
from .seqgen import N_NID1, assemble_frame, gen_pss, gen_sss, gen_zc, sss_bank_matrix

log = logging.getLogger(__name__)


@dataclass
class Receiver:
    """What the receiver knows a priori: sequence family, frame geometry and burst pattern."""

    N: int = 127
    tau0: int = 127
    tau_max: int = 64
    pattern: BurstPattern = None
    family: str = "nr"
    sigma_c2: float = None

    @classmethod
    def from_scenario(cls, cfg):
        return cls(cfg.N, cfg.tau0, cfg.tau_max, BurstPattern(tuple(int(e) for e in cfg.eta)),
                   cfg.family, cfg.sigma_c2)

    @property
    def tau_c(self):
        return self.N + self.tau0

    @property
    def frame_len(self):
        return 2 * self.N + self.tau0

    def leakage(self):
        if self.sigma_c2 is not None:
            return float(self.sigma_c2)
        return calibrate_sigma_c2(self.family, self.N, max(1, self.tau_max))

    def first_bank(self):
        """``(labels, matrix)`` of candidate first sequences."""
        if self.family == "nr":
            return list(range(3)), np.stack([gen_pss(l).samples for l in range(3)])
        roots = [u for u in range(1, self.N) if gcd(u, self.N) == 1]
        return roots, np.stack([gen_zc(u, self.N).samples for u in roots])

    def second_bank(self, first):
        """``(ids, matrix)`` of full identities compatible with a first-sequence label."""
        if self.family == "nr":
            return [(i, first) for i in range(N_NID1)], sss_bank_matrix(first)
        roots = [u for u in range(1, self.N) if gcd(u, self.N) == 1 and u != first]
        return [(first, u) for u in roots], np.stack([gen_zc(u, self.N).samples for u in roots])

    def sequences(self, ids):
        if self.family == "nr":
            return gen_pss(ids[1]), gen_sss(ids[0], ids[1])
        return gen_zc(ids[0], self.N), gen_zc(ids[1], self.N)

    def frame(self, ids, mu=1.0):
        c0, c1 = self.sequences(ids)
        return assemble_frame(c0, c1, mu, self.tau0)


@dataclass
class DetectorOptions:
    """Thresholds of the cross-burst detector (ratios are linear unless named ``*_db``).

    ``pss_ratio`` compares a hypothesis's burst-summed first-sequence power
    with the median over all hypotheses.  ``sss_ratio`` does the same for the
    second-sequence identities, scored coherently against the first-sequence
    correlations (``|sum_p conj(r0_p) r1_p|**2``).  ``single_ratio``
    decides which SSBs count as individually detected.  Within one round only
    hypotheses within ``round_range_db`` of the round's strongest are tried;
    weaker ones wait until the joint refit has cancelled the strong BSs.
    The final joint estimate starts from zero CFO and unit scalings unless
    ``warm_start`` reuses the detection-stage refits.
    """

    gamma_db: float = 12.0
    margin_db: float = DEFAULT_MARGIN_DB
    guard: int = None
    pss_ratio: float = 3.0
    sss_ratio: float = 20.0
    single_ratio: float = 10.0
    round_range_db: float = 15.0
    max_checks: int = 96
    max_rounds: int = 6
    refine_iters: int = 3
    warm_start: bool = False
    sic: SicOptions = field(default_factory=SicOptions)

    @classmethod
    def from_dict(cls, d):
        """Build from a mapping; a nested ``sic`` mapping configures :class:`SicOptions`."""
        d = dict(d or {})
        sic = dict(d.pop("sic", None) or {})
        for name, known in ((None, cls.__dataclass_fields__), ("sic", SicOptions.__dataclass_fields__)):
            keys = sic if name else d
            bad = set(keys) - set(known) - {"sic"}
            if bad:
                raise ConfigError(f"unknown {name or 'detector'} keys: {sorted(bad)}")
        if "mu_bounds" in sic:
            sic["mu_bounds"] = tuple(float(v) for v in sic["mu_bounds"])
        return cls(**d, sic=SicOptions(**sic))


def burst_reference(y, rx, opts):
    """Envelope, markers and the reference burst start ``t_ref`` (samples)."""
    labels, bank = rx.first_bank()
    env = correlation_envelope(y, bank)
    thr = 10.0 ** (opts.gamma_db / 10.0) * float(np.median(env.values))
    guard = opts.guard or rx.pattern.default_guard
    markers = extract_markers(env, guard, thr, opts.margin_db)
    if not markers:
        raise NoDetectionError("no timing markers above threshold")
    eta = rx.pattern.as_array()
    offsets = []
    for burst in cluster_bursts(markers, rx.pattern):
        offsets += [mk.t - eta[p] for mk, p in burst if p is not None]
    t_ref = int(np.median(offsets))
    # a burst whose leading SSBs were missed anchors late; slide back until the grid fits
    n_obs = y.shape[0]
    while rx.pattern.P > 1 and t_ref + eta[-1] + rx.frame_len > n_obs + rx.tau_max:
        t_ref -= rx.pattern.min_spacing
    return env, markers, t_ref


def _hypothesis_range(rx, t_ref, n_obs):
    eta = rx.pattern.as_array()
    lo = max(0, t_ref - rx.tau_max)
    hi = min(n_obs - eta[-1] - rx.frame_len, t_ref + rx.tau_max)
    return np.arange(lo, hi + 1, dtype=np.int64)


def _single_timings(resid, rx, c0, c1, d, level, ratio):
    """Per-SSB timings: the sample within +-2 of the cross-burst hypothesis where
    first- and second-sequence correlation power peak together."""
    eta = rx.pattern.as_array()
    n_obs = resid.shape[0]
    out = {}
    for p, e in enumerate(eta):
        cand = np.arange(d + e - 2, d + e + 3)
        cand = cand[(cand >= 0) & (cand + rx.frame_len <= n_obs)]
        if cand.size == 0:
            continue
        a = np.abs(kernels.window_corr(resid, c0[None, :], cand)[0]) ** 2
        b = np.abs(kernels.window_corr(resid, c1[None, :], cand + rx.tau_c)[0]) ** 2
        j = int(np.argmax(a + b))
        # both sequences must peak at the same sample: an image of another BS's PSS cannot move the SSS peak
        if int(np.argmax(a)) == j == int(np.argmax(b)) and a[j] + b[j] >= ratio * level:
            out[p] = int(cand[j])
    return out


def _quick_fit(work, rx, c0, c1, grid):
    """Rough CFO and per-SSB gains of one BS from its own correlations (no cancellation)."""
    n = rx.N
    r = np.stack([kernels.window_corr(work, c0[None, :], grid)[0],
                  kernels.window_corr(work, c1[None, :], grid + rx.tau_c)[0]], axis=1)
    try:
        omega = cfo_multi(CorrelationSet(r, 1.0), r[:, 0], 1.0, rx.tau_c)
    except UndefinedEstimateError:
        omega = 0.0
    wf = np.concatenate([c0, np.zeros(rx.tau0), c1])
    idx = grid[:, None] + np.arange(wf.shape[0])[None, :]
    cols = wf[None, :] * np.exp(-1j * omega * idx)
    gains = np.sum(np.conj(cols) * work[idx], axis=1) / (2.0 * n)
    return omega, gains, idx, cols


def _scan(resid, rx, hyp, labels, bank, opts, known):
    """One greedy detection round over the residual.

    The best remaining (first sequence, timing) hypothesis is confirmed by
    second-sequence identification; a confirmed BS is subtracted from the
    working copy with a rough fit before the next hypothesis is scored, so
    its sidelobes and cross-root images cannot be confirmed as new BSs.
    """
    eta = rx.pattern.as_array()
    P = eta.shape[0]
    offs = (hyp[:, None] + eta[None, :]).ravel()
    work = resid.copy()
    found = []
    blocked = np.zeros((len(labels), hyp.shape[0]), dtype=bool)
    floor = None
    for _ in range(opts.max_checks):
        c = kernels.window_corr(work, bank, offs).reshape(len(labels), hyp.shape[0], P)
        stat = np.sum(c.real ** 2 + c.imag ** 2, axis=2)
        med = float(np.median(stat))
        if not med > 0:
            break
        masked = np.where(blocked, -np.inf, stat)
        li, di = np.unravel_index(int(np.argmax(masked)), stat.shape)
        if floor is None:
            floor = masked[li, di] * 10.0 ** (-opts.round_range_db / 10.0)
        if masked[li, di] < max(opts.pss_ratio * med, floor):
            break
        blocked[li, di] = True
        d = int(hyp[di])
        ids_list, sbank = rx.second_bank(labels[li])
        s = kernels.window_corr(work, sbank, d + eta + rx.tau_c)
        # coherent across SSBs: the true second sequence keeps a fixed phase offset to the first
        sstat = np.abs(s @ np.conj(c[li, di])) ** 2
        best = int(np.argmax(sstat))
        smed = float(np.median(sstat))
        if not smed > 0 or sstat[best] < opts.sss_ratio * smed:
            continue
        ids = tuple(ids_list[best])
        if ids in known:
            continue
        c0 = bank[li]
        c1 = sbank[best]
        single = _single_timings(work, rx, c0, c1, d, 2.0 * med / P, opts.single_ratio)
        if single:
            tau0_hat, grid = cross_burst_timing(single, rx.pattern)
        else:
            tau0_hat, grid = d, d + eta
        if tau0_hat < 0 or grid[-1] + rx.frame_len > resid.shape[0]:
            tau0_hat, grid = d, d + eta
        _, gains, idx, cols = _quick_fit(work, rx, c0, c1, grid)
        np.subtract.at(work, idx.ravel(), (gains[:, None] * cols).ravel())
        known.add(ids)
        found.append(DetectedBs(ids, rx.family, int(tau0_hat), grid, single, 0, float(stat[li, di] / med)))
    return found


def _refine(y, rx, dets, sic):
    targets = [rx.sequences(b.ids) for b in dets]
    starts = np.stack([b.grid for b in dets])
    return sic_joint_estimate(y, targets, starts, sic, tau0=rx.tau0, family=rx.family,
                              ids=[b.ids for b in dets])


def detect_and_estimate(y, rx, opts=None):
    """Cross-burst detection with interference cancellation, then joint estimation.

    Each round scans the current residual for (first sequence, burst timing)
    hypotheses by summing correlation power over all SSBs of the burst,
    confirms them by second-sequence identification, completes the timing
    grid and refines every detected BS jointly; the refined reconstruction is
    cancelled before the next round.  Rounds stop when nothing new appears.

    Returns:
        ``(DetectionResult, EstimateReport)``.

    Raises:
        NoDetectionError: no marker or no confirmed BS.
    """
    opts = opts or DetectorOptions()
    y = np.asarray(getattr(y, "samples", y), dtype=np.complex128)
    env, markers, t_ref = burst_reference(y, rx, opts)
    hyp = _hypothesis_range(rx, t_ref, y.shape[0])
    if hyp.size == 0:
        raise NoDetectionError("no timing hypothesis fits the observation")
    labels, bank = rx.first_bank()
    sigma_c2 = rx.leakage()
    refine = SicOptions(max_iters=opts.refine_iters, sigma_n2=opts.sic.sigma_n2, sigma_c2=sigma_c2,
                        estimate_mu=opts.sic.estimate_mu)
    dets = []
    known = set()
    resid = y
    report = None
    for rnd in range(opts.max_rounds):
        new = _scan(resid, rx, hyp, labels, bank, opts, known)
        log.debug("round %d: %d new detections", rnd, len(new))
        if not new:
            break
        dets += new
        if report is not None:
            refine.init_omega = np.concatenate([[b.omega_hat for b in report.bss], np.zeros(len(new))])
            refine.init_mu = np.concatenate([[b.mu_hat for b in report.bss], np.ones(len(new))])
        report = _refine(y, rx, dets, refine)
        frames = [rx.frame(b.ids, b.mu_hat) for b in report.bss]
        resid = y - reconstruct(y.shape[0], frames, np.stack([b.grid for b in dets]),
                                [b.omega_hat for b in report.bss], [b.alpha_hat for b in report.bss])
    if not dets:
        raise NoDetectionError("no base station confirmed")
    final = SicOptions(**{**opts.sic.__dict__})
    if final.sigma_c2 is None:
        final.sigma_c2 = sigma_c2
    if opts.warm_start and final.init_omega is None:
        final.init_omega = [b.omega_hat for b in report.bss]
        final.init_mu = [b.mu_hat for b in report.bss]
    report = _refine(y, rx, dets, final)
    for b in report.bss:
        b.ssb_indices = present_ssbs(b.alpha_hat, report.sigma_n2, 2 * rx.N, opts.single_ratio)
    return DetectionResult(dets, rx.pattern, markers, t_ref), report


def present_ssbs(alpha_hat, sigma_n2, energy, ratio):
    """SSB indices whose gain is significant: ``|a|**2 * energy / sigma_n2 >= ratio``.

    Under noise alone the statistic is unit-mean exponential, so ``ratio = 10``
    admits a spurious SSB with probability ``exp(-10)``.
    """
    stat = np.abs(np.asarray(alpha_hat)) ** 2 * energy / max(float(sigma_n2 or 0.0), 1e-300)
    return tuple(int(p) for p in np.flatnonzero(stat >= ratio))


def single_ssb_estimates(y, rx, dets, sic=None):
    """Run the joint estimator separately on every SSB window (one SSB per run).

    Returns:
        ``(omega, alpha)`` arrays of shape ``(K, P)``.
    """
    sic = sic or SicOptions()
    y = np.asarray(getattr(y, "samples", y), dtype=np.complex128)
    K, P = len(dets), rx.pattern.P
    omega = np.zeros((K, P))
    alpha = np.zeros((K, P), dtype=np.complex128)
    targets = [rx.sequences(b.ids) for b in dets]
    starts = np.stack([b.grid for b in dets])
    for p in range(P):
        # only this window matters; a gain fitted on a slice starting at lo carries
        # the extra phase exp(-1j*omega*lo), undone below
        lo = int(starts[:, p].min())
        hi = int(starts[:, p].max()) + rx.frame_len
        rep = sic_joint_estimate(y[lo:hi], targets, starts[:, p:p + 1] - lo, sic, tau0=rx.tau0,
                                 family=rx.family, ids=[b.ids for b in dets])
        omega[:, p] = [b.omega_hat for b in rep.bss]
        alpha[:, p] = [b.alpha_hat[0] * np.exp(1j * b.omega_hat * lo) for b in rep.bss]
    return omega, alpha


@dataclass
class CascadeHit:
    ids: tuple
    ssb: int
    t: int
    omega: float


def classical_cascade(y, rx, threshold_db=12.0):
    """Conventional cell search run per SSB window, treating interference as noise.

    In every window and for every first-sequence candidate the strongest
    correlation peak is taken, its CFO estimated by split-sequence
    autocorrelation, and the second sequence identified after CFO
    compensation.  Identification must beat the median over candidates by
    ``threshold_db``.
    """
    y = np.asarray(getattr(y, "samples", y), dtype=np.complex128)
    eta = rx.pattern.as_array()
    n_obs = y.shape[0]
    labels, bank = rx.first_bank()
    ratio = 10.0 ** (threshold_db / 10.0)
    span = rx.pattern.min_spacing if rx.pattern.P > 1 else n_obs
    hits = []
    for p, e in enumerate(eta):
        lo = int(e)
        hi = min(int(e) + span - rx.frame_len, n_obs - rx.frame_len)
        if hi < lo:
            continue
        seg = y[lo:hi + rx.N]
        power = kernels.corr_power(seg, bank)
        for li in range(len(labels)):
            t = lo + int(np.argmax(power[li]))
            try:
                w = baseline_autocorr_cfo(y, bank[li], t)
            except ArithmeticError:
                continue
            ids_list, sbank = rx.second_bank(labels[li])
            m = np.arange(t + rx.tau_c, t + rx.tau_c + rx.N)
            win = y[m] * np.exp(1j * w * m)
            s = np.abs(np.conj(sbank) @ win) ** 2
            best = int(np.argmax(s))
            if s[best] >= ratio * float(np.median(s)):
                hits.append(CascadeHit(tuple(ids_list[best]), p, t, float(w)))
    return hits
