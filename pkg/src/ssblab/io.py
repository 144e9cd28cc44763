"""Waveform files: headerless little-endian float32 I/Q pairs (``.c64``) with a
JSON sidecar holding sample rate, length and provenance."""
import json
import os
from pathlib import Path

import numpy as np

from .errors import WaveformIOError
from .scenario import SampleVector

SAMPLE_DTYPE = np.dtype("<c8")
FORMAT_NAME = "cf32_le"


def sidecar_path(path):
    return Path(path).with_suffix(".json")


def write_waveform(path, samples, sample_rate, meta=None):
    """Write ``samples`` as interleaved float32 I/Q and the sidecar next to it.

    Returns the sidecar dict.
    """
    path = Path(path)
    x = np.asarray(getattr(samples, "samples", samples))
    side = {"format": FORMAT_NAME, "sample_rate": float(sample_rate), "length": int(x.shape[0])}
    side.update(meta or {})
    try:
        x.astype(SAMPLE_DTYPE).tofile(path)
        with open(sidecar_path(path), "w") as fh:
            json.dump(side, fh, indent=2, sort_keys=True)
    except OSError as exc:
        raise WaveformIOError(f"cannot write {path}: {exc}") from exc
    return side


def read_sidecar(path):
    p = sidecar_path(path)
    if not p.exists():
        return {}
    try:
        with open(p) as fh:
            return json.load(fh)
    except (OSError, ValueError) as exc:
        raise WaveformIOError(f"unreadable sidecar {p}: {exc}") from exc


def read_waveform(path, sample_rate=None):
    """Load a ``.c64`` file; the sidecar (when present) supplies the sample rate.

    Raises:
        WaveformIOError: missing, empty, truncated or length-mismatched file.
    """
    path = Path(path)
    try:
        size = os.path.getsize(path)
    except OSError as exc:
        raise WaveformIOError(f"cannot open {path}: {exc}") from exc
    if size == 0:
        raise WaveformIOError(f"{path} is empty")
    if size % SAMPLE_DTYPE.itemsize:
        raise WaveformIOError(f"{path}: size {size} is not a whole number of complex float32 samples")
    side = read_sidecar(path)
    if side.get("format", FORMAT_NAME) != FORMAT_NAME:
        raise WaveformIOError(f"{path}: unsupported sample format {side['format']!r}")
    x = np.fromfile(path, dtype=SAMPLE_DTYPE)
    if "length" in side and int(side["length"]) != x.shape[0]:
        raise WaveformIOError(f"{path}: sidecar says {side['length']} samples, file has {x.shape[0]}")
    rate = sample_rate or side.get("sample_rate") or 1.92e6
    try:
        return SampleVector(x.astype(np.complex128), float(rate)), side
    except ValueError as exc:
        raise WaveformIOError(f"{path}: {exc}") from exc
