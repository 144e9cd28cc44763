"""Reference CFO/channel estimators used for comparison: half-sequence
autocorrelation, power-weighted per-SSB averaging and a matched-filter gain
estimate.  None of them cancels interference."""
import numpy as np

from .errors import DomainError, UndefinedEstimateError
from .estimate import cfo_single, wrap_cfo


def _split_product(y, c, start, half):
    """``sum_m z[m + N - half] * conj(z[m])`` over ``m < half``, where ``z = y * conj(c)``."""
    n = c.shape[0]
    if start < 0 or start + n > y.shape[0]:
        raise DomainError("sequence window outside the observation")
    z = y[start:start + n] * np.conj(c)
    return complex(np.dot(z[n - half:], np.conj(z[:half])))


def baseline_autocorr_cfo(y, c, tau, half=None):
    """CFO from the phase difference between the two halves of one matched sequence.

    The halves are ``[0, half)`` and ``[N - half, N)`` with ``half = N // 2``, so
    the phase baseline is ``N - half`` samples.

    Raises:
        UndefinedEstimateError: the half products vanish.
    """
    y = np.asarray(getattr(y, "samples", y))
    c = np.asarray(getattr(c, "samples", c))
    half = c.shape[0] // 2 if half is None else half
    prod = _split_product(y, c, tau, half)
    if prod == 0:
        raise UndefinedEstimateError("zero first-half correlation")
    return wrap_cfo(-np.angle(prod), c.shape[0] - half)


def autocorr_multi(y, frame, starts):
    """Split-sequence estimate pooled over both sequences and every SSB window."""
    y = np.asarray(getattr(y, "samples", y))
    n = frame.n
    half = n // 2
    acc = 0j
    for s in np.atleast_1d(starts):
        acc += _split_product(y, frame.c0.samples, int(s), half)
        acc += _split_product(y, frame.c1.samples, int(s) + frame.tau_c, half)
    if acc == 0:
        raise UndefinedEstimateError("zero split-sequence correlation")
    return wrap_cfo(-np.angle(acc), n - half)


def baseline_power_weighted(per_ssb_cfo, power, tau_c):
    """Circular power-weighted mean: ``angle(sum_p w_p exp(j w_p tau_c)) / tau_c``.

    Raises:
        UndefinedEstimateError: the weights sum to zero (or cancel exactly).
    """
    w = np.asarray(per_ssb_cfo, dtype=np.float64)
    pw = np.asarray(power, dtype=np.float64)
    if w.shape != pw.shape:
        raise DomainError("per-SSB estimates and powers differ in length")
    if not pw.sum() > 0:
        raise UndefinedEstimateError("all SSB powers are zero")
    z = np.sum(pw * np.exp(1j * w * tau_c))
    if z == 0:
        raise UndefinedEstimateError("weighted phasors cancel")
    return wrap_cfo(np.angle(z), tau_c)


def per_ssb_single(y, frame, starts):
    """Single-SSB CFO estimates and first-sequence powers ``|r0|**2`` per window."""
    y = np.asarray(getattr(y, "samples", y))
    n = frame.n
    c0, c1 = frame.c0.samples, frame.c1.samples
    est, pw = [], []
    for s in np.atleast_1d(starts):
        s = int(s)
        r0 = np.dot(y[s:s + n], np.conj(c0)) / n
        r1 = np.dot(y[s + frame.tau_c:s + frame.tau_c + n], np.conj(c1)) / n
        try:
            est.append(cfo_single(r0, r1, frame.tau_c))
        except UndefinedEstimateError:
            est.append(0.0)
        pw.append(abs(r0) ** 2)
    return np.array(est), np.array(pw)


def matched_filter_gains(y, frame, starts, omega):
    """Per-window gain estimate from a CFO-compensated matched filter over the whole SS frame."""
    y = np.asarray(getattr(y, "samples", y))
    wf = frame.render()
    energy = float(np.vdot(wf, wf).real)
    out = np.empty(len(np.atleast_1d(starts)), dtype=np.complex128)
    for j, s in enumerate(np.atleast_1d(starts)):
        s = int(s)
        m = np.arange(s, s + wf.shape[0])
        out[j] = np.vdot(wf * np.exp(-1j * omega * m), y[s:s + wf.shape[0]]) / energy
    return out
