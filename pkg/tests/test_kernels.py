import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ssblab import kernels

pytestmark = pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba disabled")


def _cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@given(st.integers(0, 2**32 - 1), st.integers(2, 40), st.integers(1, 4), st.integers(1, 30))
def test_window_corr_parity(seed, n, n_seq, n_win):
    rng = np.random.default_rng(seed)
    y = _cplx(rng, 200)
    seqs = _cplx(rng, n_seq, n)
    starts = rng.integers(0, 200 - n + 1, n_win).astype(np.int64)
    np.testing.assert_allclose(kernels.window_corr_nb(y, seqs, starts), kernels.window_corr_np(y, seqs, starts),
                               rtol=0, atol=1e-12)


@given(st.integers(0, 2**32 - 1), st.integers(2, 40), st.integers(1, 3))
def test_corr_power_parity(seed, n, n_seq):
    rng = np.random.default_rng(seed)
    y = _cplx(rng, 150)
    seqs = _cplx(rng, n_seq, n)
    np.testing.assert_allclose(kernels.corr_power_nb(y, seqs), kernels.corr_power_np(y, seqs), rtol=1e-12,
                               atol=1e-12)


@given(st.integers(0, 2**32 - 1), st.floats(-0.05, 0.05), st.booleans())
def test_add_frames_parity(seed, omega, overlap):
    rng = np.random.default_rng(seed)
    frame = _cplx(rng, 25)
    frame[5:12] = 0
    starts = np.array([0, 10, 30] if overlap else [0, 40, 80], dtype=np.int64)
    gains = _cplx(rng, 3)
    a = kernels.add_frames_np(np.zeros(120, complex), frame, starts, gains, omega)
    b = kernels.add_frames_nb(np.zeros(120, complex), frame, starts, gains, omega)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_window_corr_definition():
    rng = np.random.default_rng(1)
    y = _cplx(rng, 50)
    s = _cplx(rng, 1, 7)
    got = kernels.window_corr(y, s, np.array([3]))[0, 0]
    assert got == pytest.approx(np.sum(y[3:10] * np.conj(s[0])) / 7, abs=1e-13)


def test_env_flag_selects_numpy_fallback():
    code = ("from ssblab import backend, kernels; import numpy as np;"
            "print(backend(), kernels.HAVE_NUMBA, "
            "float(kernels.corr_power(np.ones(8, complex), np.ones((1, 4), complex)).sum()))")
    env = dict(os.environ, SSBLAB_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    name, have, total = out.stdout.split()
    assert name == "numpy" and have == "False" and float(total) == 5.0
