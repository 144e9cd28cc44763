"""Multi-BS scenario configuration, ground-truth sampling and synthesis of
the received multi-burst waveform.

Time is in samples and CFO in rad/sample everywhere in this module.
"""
from dataclasses import asdict, dataclass, field
from math import gcd, pi

import numpy as np
import yaml

from . import kernels
from .corrlab import calibrate_sigma_c2
from .errors import ConfigError
from .seqgen import N_NID1, N_NID2, assemble_frame, gen_zc, nr_frame


@dataclass
class ScenarioConfig:
    """Scenario parameters (see README for the file schema).

    ``sinr_profile`` is ``"random"`` (unit-power Rayleigh gains for every BS),
    a list of K per-BS targets in dB, or ``{"probe": k, "sinr_db": s}``
    (interferers at unit power, BS ``k`` scaled to ``s`` dB).  SINR is
    measured at the correlator: ``E|a|^2 N / (sum_q E|a_q|^2 sigma_c2 + sigma_n2)``.
    """

    K: int = 12
    P: int = 12
    N: int = 127
    tau0: int = 127
    N_f: int = 512
    N_o: int = None
    tau_max: int = 64
    omega_max: float = 0.01
    sigma_n2: float = 1e-3
    sigma_c2: float = None
    sinr_profile: object = "random"
    mu_range: tuple = (1.0, 1.0)
    family: str = "nr"
    sample_rate: float = 1.92e6

    def __post_init__(self):
        if self.N_o is None:
            self.N_o = self.P * self.N_f
        self.mu_range = tuple(float(v) for v in self.mu_range)
        self.validate()

    @property
    def tau_c(self):
        return self.N + self.tau0

    @property
    def frame_len(self):
        return 2 * self.N + self.tau0

    @property
    def eta(self):
        """Intra-burst SSB grid (samples)."""
        return np.arange(self.P, dtype=np.int64) * self.N_f

    def leakage(self):
        """Resolved ``sigma_c**2`` (calibrated from the family when unset)."""
        if self.sigma_c2 is not None:
            return float(self.sigma_c2)
        return calibrate_sigma_c2(self.family, self.N, max(1, self.tau_max))

    def validate(self):
        for name in ("K", "P", "N", "tau0", "N_f", "N_o", "tau_max"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v:
                raise ConfigError(f"{name} must be an integer, got {v!r}")
            setattr(self, name, int(v))
        if self.K < 0 or self.P < 1 or self.N < 2 or self.tau0 < 0 or self.tau_max < 0:
            raise ConfigError("K >= 0, P >= 1, N >= 2, tau0 >= 0 and tau_max >= 0 are required")
        if self.N_f < self.frame_len + self.tau_max:
            raise ConfigError(
                f"N_f={self.N_f} too short: SSB frames of different SSBs would overlap "
                f"(need N_f >= 2N + tau0 + tau_max = {self.frame_len + self.tau_max})")
        need = (self.P - 1) * self.N_f + self.tau_max + self.frame_len
        if self.N_o < need:
            raise ConfigError(f"N_o={self.N_o} cannot hold every SSB (need >= {need})")
        if not 0 <= self.omega_max < pi / self.tau_c:
            raise ConfigError(f"omega_max must lie in [0, pi/tau_c) = [0, {pi / self.tau_c:.6g})")
        if not self.sigma_n2 >= 0:
            raise ConfigError("sigma_n2 must be non-negative")
        if self.sigma_c2 is not None and not self.sigma_c2 >= 0:
            raise ConfigError("sigma_c2 must be non-negative")
        lo, hi = self.mu_range
        if not 0 < lo <= hi:
            raise ConfigError("mu_range must satisfy 0 < lo <= hi")
        if self.family == "nr":
            if self.N != 127:
                raise ConfigError("the NR family requires N = 127")
            if self.K > N_NID1 * N_NID2:
                raise ConfigError("more BSs than distinct physical cell identities")
        elif self.family == "zc":
            roots = _zc_roots(self.N)
            if self.K > len(roots) * (len(roots) - 1):
                raise ConfigError("more BSs than distinct ZC root pairs")
        else:
            raise ConfigError(f"unknown family {self.family!r}")
        prof = self.sinr_profile
        if isinstance(prof, str):
            if prof != "random":
                raise ConfigError(f"unknown sinr_profile {prof!r}")
        elif isinstance(prof, dict):
            if set(prof) != {"probe", "sinr_db"}:
                raise ConfigError("probe sinr_profile needs exactly the keys 'probe' and 'sinr_db'")
            if not 0 <= int(prof["probe"]) < max(self.K, 1):
                raise ConfigError("probe index out of range")
        else:
            prof = list(prof)
            if len(prof) != self.K:
                raise ConfigError(f"sinr_profile lists {len(prof)} targets for K={self.K}")
            self.sinr_profile = [float(v) for v in prof]

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return ScenarioConfig.from_dict(d)

    def to_dict(self):
        d = asdict(self)
        d["mu_range"] = list(self.mu_range)
        if isinstance(self.sinr_profile, dict):
            d["sinr_profile"] = dict(self.sinr_profile)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc


def load_scenario(path):
    """Read a YAML scenario file; scenario keys may sit at top level or under ``scenario:``."""
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping")
    if "scenario" in doc:
        doc = doc["scenario"]
    return ScenarioConfig.from_dict(doc)


def _zc_roots(n):
    return [u for u in range(1, n) if gcd(u, n) == 1]


@dataclass
class SampleVector:
    samples: np.ndarray
    sample_rate: float = 1.92e6

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("sample vector contains non-finite values")

    def __len__(self):
        return self.samples.shape[0]


@dataclass
class GroundTruth:
    """True parameters of every BS.

    Attributes:
        tau: timing offsets (samples), shape ``(K,)``.
        omega: CFOs (rad/sample), shape ``(K,)``.
        mu: second-sequence scalings, shape ``(K,)``.
        alpha: per-SSB complex gains, shape ``(K, P)``.
        ids: per-BS identity, ``(nid1, nid2)`` for NR or ``(root0, root1)`` for ZC.
        power: mean gain power ``E|alpha|^2`` used for scaling, shape ``(K,)``.
    """

    tau: np.ndarray
    omega: np.ndarray
    mu: np.ndarray
    alpha: np.ndarray
    ids: list
    family: str = "nr"
    N: int = 127
    tau0: int = 127
    power: np.ndarray = None
    _frames: list = field(default=None, repr=False)

    @property
    def K(self):
        return len(self.ids)

    @property
    def pci(self):
        if self.family != "nr":
            return [None] * self.K
        return [3 * a + b for a, b in self.ids]

    def frame(self, k):
        if self._frames is None:
            self._frames = [None] * self.K
        if self._frames[k] is None:
            a, b = self.ids[k]
            if self.family == "nr":
                self._frames[k] = nr_frame(a, b, self.mu[k], self.tau0)
            else:
                self._frames[k] = assemble_frame(gen_zc(a, self.N), gen_zc(b, self.N), self.mu[k], self.tau0)
        return self._frames[k]

    def frames(self):
        return [self.frame(k) for k in range(self.K)]

    def subset(self, keep):
        keep = list(keep)
        return GroundTruth(self.tau[keep], self.omega[keep], self.mu[keep], self.alpha[keep],
                           [self.ids[k] for k in keep], self.family, self.N, self.tau0,
                           None if self.power is None else self.power[keep])

    def to_dict(self):
        return {
            "family": self.family,
            "N": self.N,
            "tau0": self.tau0,
            "base_stations": [
                {
                    "ids": list(self.ids[k]),
                    "pci": self.pci[k],
                    "tau": int(self.tau[k]),
                    "omega": float(self.omega[k]),
                    "mu": float(self.mu[k]),
                    "alpha_re": self.alpha[k].real.tolist(),
                    "alpha_im": self.alpha[k].imag.tolist(),
                    "power": None if self.power is None else float(self.power[k]),
                }
                for k in range(self.K)
            ],
        }

    @classmethod
    def from_dict(cls, d):
        bss = d["base_stations"]
        alpha = np.array([np.asarray(b["alpha_re"]) + 1j * np.asarray(b["alpha_im"]) for b in bss])
        power = [b.get("power") for b in bss]
        return cls(
            tau=np.array([b["tau"] for b in bss], dtype=np.int64),
            omega=np.array([b["omega"] for b in bss], dtype=np.float64),
            mu=np.array([b["mu"] for b in bss], dtype=np.float64),
            alpha=alpha.reshape(len(bss), -1) if bss else np.zeros((0, 0), complex),
            ids=[tuple(b["ids"]) for b in bss],
            family=d.get("family", "nr"),
            N=d.get("N", 127),
            tau0=d.get("tau0", 127),
            power=None if any(p is None for p in power) else np.array(power, dtype=np.float64),
        )


def _streams(seed):
    geometry, noise = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(geometry), np.random.default_rng(noise)


def bs_powers(cfg, sigma_c2=None):
    """Mean gain power ``E|alpha_k|^2`` that realizes the configured SINR profile.

    Raises:
        ConfigError: the profile is infeasible (no positive power solution).
    """
    K = cfg.K
    sc2 = cfg.leakage() if sigma_c2 is None else sigma_c2
    prof = cfg.sinr_profile
    if K == 0:
        return np.zeros(0)
    if isinstance(prof, str):
        return np.ones(K)
    if isinstance(prof, dict):
        k = int(prof["probe"])
        x = np.ones(K)
        t = 10.0 ** (float(prof["sinr_db"]) / 10.0)
        x[k] = t * (sc2 * (K - 1) + cfg.sigma_n2) / cfg.N
        if not x[k] > 0:
            raise ConfigError("probe SINR target is infeasible with zero interference and zero noise")
        return x
    t = 10.0 ** (np.asarray(prof, dtype=np.float64) / 10.0)
    # N x_k - t_k sigma_c2 sum_{q != k} x_q = t_k sigma_n2
    M = cfg.N * np.eye(K) - (t[:, None] * sc2) * (np.ones((K, K)) - np.eye(K))
    rhs = t * cfg.sigma_n2
    try:
        x = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise ConfigError("SINR profile is infeasible (singular power system)") from exc
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise ConfigError("SINR profile is infeasible: targets exceed what power scaling can achieve")
    return x


def sample_ground_truth(cfg, seed):
    """Draw timing offsets, CFOs, scalings, identities and Rayleigh gains."""
    rng, _ = _streams(seed)
    K, P = cfg.K, cfg.P
    power = bs_powers(cfg)
    tau = rng.integers(0, cfg.tau_max + 1, size=K)
    omega = rng.uniform(-cfg.omega_max, cfg.omega_max, size=K) if cfg.omega_max > 0 else np.zeros(K)
    lo, hi = cfg.mu_range
    mu = rng.uniform(lo, hi, size=K) if hi > lo else np.full(K, lo)
    g = (rng.standard_normal((K, P)) + 1j * rng.standard_normal((K, P))) / np.sqrt(2.0)
    alpha = np.sqrt(power)[:, None] * g
    if cfg.family == "nr":
        pcis = rng.choice(N_NID1 * N_NID2, size=K, replace=False)
        ids = [(int(c) // 3, int(c) % 3) for c in pcis]
    else:
        roots = _zc_roots(cfg.N)
        n_r = len(roots)
        picks = rng.choice(n_r * (n_r - 1), size=K, replace=False)
        ids = []
        for c in picks:
            a, b = divmod(int(c), n_r - 1)
            b = b + 1 if b >= a else b
            ids.append((roots[a], roots[b]))
    return GroundTruth(tau.astype(np.int64), omega, mu, alpha, ids, cfg.family, cfg.N, cfg.tau0, power)


def render_bs(gt, k, n_obs, eta, out=None, ssbs=None):
    """Add BS ``k``'s noiseless contribution to ``out`` (allocated when None)."""
    if out is None:
        out = np.zeros(n_obs, dtype=np.complex128)
    ssbs = np.arange(gt.alpha.shape[1]) if ssbs is None else np.asarray(ssbs)
    starts = eta[ssbs] + gt.tau[k]
    kernels.add_frames(out, gt.frame(k).render(), starts, gt.alpha[k, ssbs], gt.omega[k])
    return out


def synthesize_received(cfg, gt, seed, noise=True):
    """``y[m] = sum_k sum_p alpha_k^p c_k[m - p N_f - tau_k] exp(-j w_k m) + nu[m]``."""
    _, rng = _streams(seed)
    y = np.zeros(cfg.N_o, dtype=np.complex128)
    eta = cfg.eta
    for k in range(gt.K):
        render_bs(gt, k, cfg.N_o, eta, out=y)
    if noise and cfg.sigma_n2 > 0:
        y += np.sqrt(cfg.sigma_n2 / 2.0) * (rng.standard_normal(cfg.N_o) + 1j * rng.standard_normal(cfg.N_o))
    return SampleVector(y, cfg.sample_rate)
