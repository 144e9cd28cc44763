"""Hot numeric kernels.

Each kernel has a numba implementation (``*_nb``) and a pure-numpy one
(``*_np``).  The public names dispatch to numba unless it is unavailable or
disabled through ``SSBLAB_DISABLE_NUMBA``; both paths must agree to 1e-12.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._accel import HAVE_NUMBA, njit

__all__ = ["window_corr", "corr_power", "add_frames", "HAVE_NUMBA"]


# --- windowed correlation --------------------------------------------------

def window_corr_np(y, seqs, starts):
    n = seqs.shape[1]
    windows = sliding_window_view(y, n)[starts]
    return (np.conj(seqs) @ windows.T) / n


@njit(cache=True, nogil=True)
def window_corr_nb(y, seqs, starts):
    n_seq, n = seqs.shape
    out = np.empty((n_seq, starts.shape[0]), dtype=np.complex128)
    cs = np.conj(seqs)
    for j in range(starts.shape[0]):
        s = starts[j]
        for i in range(n_seq):
            acc = 0j
            for m in range(n):
                acc += y[s + m] * cs[i, m]
            out[i, j] = acc / n
    return out


# --- correlation power over every offset ------------------------------------

def corr_power_np(y, seqs):
    n = seqs.shape[1]
    windows = sliding_window_view(y, n)
    c = (windows @ np.conj(seqs).T) / n
    return (c.real ** 2 + c.imag ** 2).T


@njit(cache=True, nogil=True)
def corr_power_nb(y, seqs):
    n_seq, n = seqs.shape
    n_off = y.shape[0] - n + 1
    out = np.empty((n_seq, n_off), dtype=np.float64)
    cs = np.conj(seqs)
    for t in range(n_off):
        for i in range(n_seq):
            acc = 0j
            for m in range(n):
                acc += y[t + m] * cs[i, m]
            acc = acc / n
            out[i, t] = acc.real * acc.real + acc.imag * acc.imag
    return out


# --- frame superposition -----------------------------------------------------

def add_frames_np(out, frame, starts, gains, omega):
    length = frame.shape[0]
    idx = starts[:, None] + np.arange(length)[None, :]
    contrib = gains[:, None] * frame[None, :] * np.exp(-1j * omega * idx)
    np.add.at(out, idx.ravel(), contrib.ravel())
    return out


@njit(cache=True, nogil=True)
def add_frames_nb(out, frame, starts, gains, omega):
    length = frame.shape[0]
    for j in range(starts.shape[0]):
        s = starts[j]
        g = gains[j]
        for m in range(length):
            f = frame[m]
            if f != 0:
                out[s + m] += g * f * np.exp(-1j * omega * (s + m))
    return out


def _as_c128(a):
    return np.ascontiguousarray(a, dtype=np.complex128)


def window_corr(y, seqs, starts):
    """Normalized correlations ``(1/N) sum_m y[s+m] conj(seq[m])``.

    Args:
        y: complex samples, shape ``(n_samples,)``.
        seqs: reference sequences, shape ``(n_seq, N)``.
        starts: window start offsets, shape ``(n_win,)``; every window must fit.

    Returns:
        Complex array of shape ``(n_seq, n_win)``.
    """
    y = _as_c128(y)
    seqs = _as_c128(np.atleast_2d(seqs))
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    if HAVE_NUMBA:
        return window_corr_nb(y, seqs, starts)
    return window_corr_np(y, seqs, starts)


def corr_power(y, seqs):
    """``|window_corr|**2`` at every offset ``0 .. len(y) - N``; shape ``(n_seq, n_off)``."""
    y = _as_c128(y)
    seqs = _as_c128(np.atleast_2d(seqs))
    if HAVE_NUMBA:
        return corr_power_nb(y, seqs)
    return corr_power_np(y, seqs)


def add_frames(out, frame, starts, gains, omega):
    """Accumulate ``g * frame[m] * exp(-j*omega*(s+m))`` into ``out`` in place."""
    frame = _as_c128(frame)
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    gains = _as_c128(gains)
    if HAVE_NUMBA:
        return add_frames_nb(out, frame, starts, gains, float(omega))
    return add_frames_np(out, frame, starts, gains, float(omega))
