"""Timing markers by structure-aware non-maximum suppression, burst
clustering with SSB-index assignment, and cross-burst LS timing."""
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .errors import DomainError, NoDetectionError


@dataclass(frozen=True)
class TimingMarker:
    t: int
    root: int
    score: float


@dataclass(frozen=True)
class BurstPattern:
    """Intra-burst SSB start offsets ``eta`` (``eta[0] == 0``) and the burst period, both in samples."""

    eta: tuple
    period: int = None

    def __post_init__(self):
        eta = tuple(int(e) for e in self.eta)
        if not eta or eta[0] != 0 or any(b <= a for a, b in zip(eta, eta[1:])):
            raise DomainError("eta must start at 0 and be strictly increasing")
        object.__setattr__(self, "eta", eta)
        if self.period is not None and self.period <= eta[-1]:
            raise DomainError("burst period must exceed the burst span")

    @classmethod
    def uniform(cls, P, stride, period=None):
        return cls(tuple(range(0, P * stride, stride)), period)

    @property
    def P(self):
        return len(self.eta)

    @property
    def min_spacing(self):
        if len(self.eta) < 2:
            return self.period if self.period else 1 << 30
        return int(np.min(np.diff(self.eta)))

    @property
    def default_guard(self):
        return max(1, self.min_spacing // 2)

    def as_array(self):
        return np.asarray(self.eta, dtype=np.int64)


@dataclass
class DetectedBs:
    """One detected BS: identity, per-SSB single-shot timings and the completed grid."""

    ids: tuple
    family: str
    tau0_hat: int
    grid: np.ndarray
    single: dict = field(default_factory=dict)
    group: int = 0
    score: float = 0.0

    @property
    def ssb_indices(self):
        return tuple(sorted(self.single))

    @property
    def pci(self):
        return 3 * self.ids[0] + self.ids[1] if self.family == "nr" else None


@dataclass
class DetectionResult:
    bss: list
    pattern: BurstPattern
    markers: list = field(default_factory=list)
    t_ref: int = None

    def starts(self):
        if not self.bss:
            return np.zeros((0, self.pattern.P), dtype=np.int64)
        return np.stack([b.grid for b in self.bss])


def _local_peaks(v):
    """Local maxima (plateaus count once, at their midpoint); edge samples qualify."""
    if v.size == 0:
        return np.zeros(0, dtype=np.int64)
    pad = v.min() - 1.0
    return find_peaks(np.concatenate([[pad], v, [pad]]))[0] - 1


DEFAULT_MARGIN_DB = 0.0


def extract_markers(env, guard, threshold, margin_db=DEFAULT_MARGIN_DB):
    """Timing markers: local maxima that dominate every other peak within ``+-guard``.

    A peak survives when its score is at least ``threshold``, is strictly
    larger than every other peak in its guard window and beats the runner-up
    by at least ``margin_db``.  Equal peaks therefore suppress each other.

    Args:
        env: :class:`~ssblab.corrlab.Envelope` or a plain array of scores.
    """
    if guard <= 0:
        raise DomainError("guard must be positive")
    values = np.asarray(getattr(env, "values", env), dtype=np.float64)
    roots = getattr(env, "root", None)
    peaks = _local_peaks(values)
    if peaks.size == 0:
        return []
    scores = values[peaks]
    ratio = 10.0 ** (margin_db / 10.0)
    out = []
    for j, t in enumerate(peaks):
        if scores[j] < threshold:
            continue
        lo = np.searchsorted(peaks, t - guard, side="left")
        hi = np.searchsorted(peaks, t + guard, side="right")
        others = np.concatenate([scores[lo:j], scores[j + 1:hi]])
        if others.size and (scores[j] <= others.max() or scores[j] < ratio * others.max()):
            continue
        root = int(roots[t]) if roots is not None and len(roots) else -1
        out.append(TimingMarker(int(t), root, float(scores[j])))
    return out


def cluster_bursts(markers, pattern, origin=None):
    """Group markers into bursts and assign each an SSB index.

    A new burst starts once a marker lies beyond the current burst's span
    (``eta[-1]`` plus half the minimum SSB spacing).  Indices are relative to
    the burst anchor (``origin`` when given, else the burst's first marker):
    ``p = argmin |(t - anchor) - eta_p|``; a marker farther than half the
    minimum spacing from every grid point gets index None.

    Returns:
        list of bursts, each a list of ``(marker, p_or_None)``.
    """
    eta = pattern.as_array()
    half = pattern.min_spacing / 2.0
    span = eta[-1] + half
    bursts = []
    anchor = None
    for mk in sorted(markers, key=lambda m: m.t):
        if anchor is None or mk.t - anchor > span:
            if anchor is None and origin is not None:
                anchor = origin
            elif origin is not None and pattern.period:
                anchor += pattern.period * max(1, int(round((mk.t - anchor) / pattern.period)))
            else:
                anchor = mk.t
            bursts.append([])
        resid = np.abs((mk.t - anchor) - eta)
        p = int(np.argmin(resid))
        bursts[-1].append((mk, p if resid[p] <= half else None))
    return bursts


def cross_burst_timing(single, pattern):
    """LS burst timing from per-SSB detections.

    ``tau0 = round(mean(single[p] - eta_p))``; the completed grid is
    ``tau0 + eta_p`` for every SSB of the pattern.

    Returns:
        ``(tau0, grid)`` with ``grid`` an int64 array of length P.

    Raises:
        NoDetectionError: ``single`` is empty.
    """
    if not single:
        raise NoDetectionError("no SSB detections to anchor the timing grid")
    eta = pattern.as_array()
    vals = [int(t) - int(eta[p]) for p, t in single.items()]
    tau0 = int(np.floor(np.mean(vals) + 0.5))
    return tau0, tau0 + eta
