"""Correlation primitives: windowed cross-correlation, CFO autocorrelation
profile, PSS correlation envelope and the correlator variance model."""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve

from . import kernels
from .errors import DomainError, WindowRangeError
from .seqgen import N_NID1, N_NID2, gen_pss, gen_sss, gen_zc, pss_bank


def _samples(y):
    return np.asarray(getattr(y, "samples", y))


def _seq(s):
    return np.asarray(getattr(s, "samples", s))


@dataclass
class CorrelationSet:
    """Correlator outputs of one BS over its SSBs.

    ``r[p, i]`` is the normalized correlation of SSB ``p`` against sequence
    ``i`` (0 = first, 1 = second) and ``sigma2[p, i]`` its modeled variance.
    """

    r: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=np.complex128).reshape(-1, 2)
        self.sigma2 = np.broadcast_to(np.asarray(self.sigma2, dtype=np.float64), self.r.shape).copy()
        if np.any(~(self.sigma2 > 0)):
            raise DomainError("correlator variances must be positive")

    @property
    def n_ssb(self):
        return self.r.shape[0]


@dataclass
class Envelope:
    """``values[t]`` = max over PSS roots of ``|xcorr(y, root, t)|**2``; ``root[t]`` is the winner."""

    values: np.ndarray
    window: int
    root: np.ndarray = None


def xcorr(y, seq, offset):
    """``(1/N) * sum_{m<N} y[offset+m] * conj(seq[m])``.

    Raises:
        WindowRangeError: the window leaves the sample vector.
    """
    y = _samples(y)
    s = _seq(seq)
    n = s.shape[0]
    if offset < 0 or offset + n > y.shape[0]:
        raise WindowRangeError(f"window [{offset}, {offset + n}) outside [0, {y.shape[0]})")
    return complex(np.dot(y[offset:offset + n], np.conj(s)) / n)


def xcorr_many(y, seqs, offsets):
    """Vectorized :func:`xcorr`; returns shape ``(n_seq, n_offsets)``."""
    y = _samples(y)
    seqs = np.atleast_2d(np.asarray([_seq(s) for s in seqs]) if isinstance(seqs, (list, tuple)) else seqs)
    offsets = np.asarray(offsets, dtype=np.int64)
    n = seqs.shape[1]
    if offsets.size and (offsets.min() < 0 or offsets.max() + n > y.shape[0]):
        raise WindowRangeError("correlation window outside the sample vector")
    return kernels.window_corr(y, seqs, offsets)


def autocorr_profile(seq, omega):
    """``r(omega) = (1/N) sum_m |c[m]|**2 exp(-j*omega*m)`` by direct summation."""
    s = _seq(seq)
    m = np.arange(s.shape[0])
    return complex(np.sum(np.abs(s) ** 2 * np.exp(-1j * omega * m)) / s.shape[0])


def dirichlet_mag(n, omega):
    """Closed-form ``|sin(N w/2) / (N sin(w/2))|`` with the removable singularity at 0."""
    omega = np.asarray(omega, dtype=np.float64)
    half = omega / 2.0
    den = n * np.sin(half)
    with np.errstate(invalid="ignore", divide="ignore"):
        val = np.abs(np.sin(n * half) / den)
    return np.where(np.abs(den) < 1e-300, 1.0, val)


def correlation_envelope(y, pss=None, method="direct"):
    """PSS correlation envelope over every integer offset.

    Args:
        y: received samples.
        pss: the reference bank (defaults to the three NR PSS roots).
        method: ``"direct"`` (O(N) per offset) or ``"fft"``.
    """
    y = _samples(y)
    bank = np.stack([_seq(s) for s in (pss if pss is not None else pss_bank())])
    n = bank.shape[1]
    if y.shape[0] < n:
        return Envelope(np.zeros(0), n, np.zeros(0, dtype=np.int64))
    if method == "direct":
        power = kernels.corr_power(y, bank)
    elif method == "fft":
        power = np.empty((bank.shape[0], y.shape[0] - n + 1))
        for i, s in enumerate(bank):
            c = fftconvolve(y, np.conj(s[::-1]), mode="valid") / n
            power[i] = np.abs(c) ** 2
    else:
        raise DomainError(f"unknown envelope method {method!r}")
    root = np.argmax(power, axis=0)
    return Envelope(power[root, np.arange(power.shape[1])], n, root)


def model_variances(alpha, k, mu_k, sigma_n2, sigma_c2, n):
    """Interference-plus-noise variance of every correlator of BS ``k``.

    ``sigma2[p, i] = (sum_{q != k} |mu_k**i * alpha[q, p]|**2 * sigma_c2 + sigma_n2) / n``,
    the interferer term scaled by the desired BS's own ``mu_k``.

    Args:
        alpha: complex gains, shape ``(K, P)`` (true or current estimates).

    Returns:
        Array of shape ``(P, 2)``.
    """
    alpha = np.atleast_2d(np.asarray(alpha))
    pw = np.abs(alpha) ** 2
    interf = pw.sum(axis=0) - pw[k]
    out = np.empty((alpha.shape[1], 2))
    out[:, 0] = (interf * sigma_c2 + sigma_n2) / n
    out[:, 1] = (mu_k ** 2 * interf * sigma_c2 + sigma_n2) / n
    return out


def correlation_set(y, frame, offsets, sigma2):
    """Correlate ``y`` against both sequences of ``frame`` at each SSB start in ``offsets``."""
    offsets = np.asarray(offsets, dtype=np.int64)
    c0 = frame.c0.samples
    c1 = frame.c1.samples
    r = np.empty((offsets.shape[0], 2), dtype=np.complex128)
    r[:, 0] = xcorr_many(y, c0[None, :], offsets)[0]
    r[:, 1] = xcorr_many(y, c1[None, :], offsets + frame.tau_c)[0]
    return CorrelationSet(r, sigma2)


def family_sequences(family, n=127):
    """All sequences of a family as a list of sample arrays."""
    if family == "nr":
        seqs = [gen_pss(l).samples for l in range(N_NID2)]
        seqs += [gen_sss(a, b).samples for a in range(N_NID1) for b in range(N_NID2)]
        return seqs
    if family == "zc":
        from math import gcd

        return [gen_zc(u, n).samples for u in range(1, n) if gcd(u, n) == 1]
    raise DomainError(f"unknown sequence family {family!r}")


@lru_cache(maxsize=None)
def calibrate_sigma_c2(family="nr", n=127, max_lag=64, n_pairs=4000, seed=20240):
    """Sidelobe level ``sigma_c**2`` of a sequence family.

    Measures ``N * E|r_{k,l}(tau, 0)|**2`` over mismatched pairs (distinct
    sequences at lags ``|tau| <= max_lag`` plus identical sequences at
    nonzero lag), windows being aligned on the reference sequence and the
    interferer zero outside its support.  Pairs are sampled with a fixed
    seed so the value is reproducible.
    """
    seqs = family_sequences(family, n)
    m = len(seqs)
    rng = np.random.default_rng(seed)
    acc = 0.0
    count = 0
    for _ in range(n_pairs):
        a, b = rng.integers(m, size=2)
        lag = int(rng.integers(-max_lag, max_lag + 1))
        if a == b and lag == 0:
            continue
        ref = seqs[a]
        other = seqs[b]
        shifted = np.zeros(n, dtype=np.complex128)
        if lag >= 0:
            shifted[lag:] = other[: n - lag]
        else:
            shifted[: n + lag] = other[-lag:]
        r = np.dot(shifted, np.conj(ref)) / n
        acc += abs(r) ** 2
        count += 1
    return float(n * acc / count)
