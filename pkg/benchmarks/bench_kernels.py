"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 7] [--pipeline]

Kernel sizes match the default scenario (12 SSBs of 512 samples, N = 127).
``--pipeline`` additionally times one full detect-and-estimate run per
backend in a fresh interpreter, since the backend is fixed at import.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from ssblab import kernels

PIPELINE_SNIPPET = """
import time
from ssblab import ScenarioConfig, sample_ground_truth, synthesize_received, backend
from ssblab.pipeline import Receiver, detect_and_estimate
cfg = ScenarioConfig()
gt = sample_ground_truth(cfg, 1)
y = synthesize_received(cfg, gt, 1).samples
rx = Receiver.from_scenario(cfg)
detect_and_estimate(y, rx)
t = time.perf_counter()
for s in range(3):
    detect_and_estimate(synthesize_received(cfg, gt, s).samples, rx)
print(backend(), (time.perf_counter() - t) / 3)
"""


def cases(rng):
    n_obs, n = 12 * 512, 127
    y = rng.standard_normal(n_obs) + 1j * rng.standard_normal(n_obs)
    seqs = np.exp(2j * np.pi * rng.random((3, n)))
    starts = np.sort(rng.choice(n_obs - n, 144, replace=False)).astype(np.int64)
    frame = np.concatenate([seqs[0], np.zeros(127), seqs[1]])
    fstarts = np.arange(12, dtype=np.int64) * 512 + 40
    gains = rng.standard_normal(12) + 1j * rng.standard_normal(12)
    out = np.zeros(n_obs, dtype=np.complex128)
    return {
        "window_corr": ((y, seqs, starts), kernels.window_corr_np, kernels.window_corr_nb),
        "corr_power": ((y, seqs), kernels.corr_power_np, kernels.corr_power_nb),
        "add_frames": ((out, frame, fstarts, gains, 0.004), kernels.add_frames_np, kernels.add_frames_nb),
    }


def best_of(fn, args, repeat):
    number = max(1, int(0.2 / max(timeit.timeit(lambda: fn(*args), number=1), 1e-6)))
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--pipeline", action="store_true")
    args = ap.parse_args(argv)
    if not kernels.HAVE_NUMBA:
        print("numba unavailable or disabled; nothing to compare", file=sys.stderr)
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':<12} {'numpy [ms]':>11} {'numba [ms]':>11} {'speedup':>8}  max |diff|")
    for name, (args_, f_np, f_nb) in cases(rng).items():
        if name == "add_frames":
            a = f_np(np.zeros_like(args_[0]), *args_[1:])
            b = f_nb(np.zeros_like(args_[0]), *args_[1:])
        else:
            a, b = f_np(*args_), f_nb(*args_)
        diff = float(np.max(np.abs(a - b)))
        t_np = best_of(f_np, args_, args.repeat)
        t_nb = best_of(f_nb, args_, args.repeat)
        print(f"{name:<12} {1e3 * t_np:11.3f} {1e3 * t_nb:11.3f} {t_np / t_nb:8.2f}  {diff:.1e}")
    if args.pipeline:
        for flag in ("0", "1"):
            env = dict(os.environ, SSBLAB_DISABLE_NUMBA=flag)
            res = subprocess.run([sys.executable, "-c", PIPELINE_SNIPPET], env=env, capture_output=True,
                                 text=True, check=True)
            name, secs = res.stdout.split()
            print(f"pipeline [{name}]: {float(secs):.3f} s per detect_and_estimate")
    return 0


if __name__ == "__main__":
    sys.exit(main())
