"""Closed-form physics: motion-induced CFO drift, the coherence speed limit,
the CFO Cramer-Rao bound and its drift-limited form.

All SI quantities (m, s, Hz) live here; the signal path works in rad/sample
and crosses over only through :func:`hz_to_rad` / :func:`rad_to_hz`.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

# explicit "no finite bound" marker (radial motion, zero SINR, zero correlation)
UNBOUNDED = math.inf


def is_unbounded(x):
    return x == UNBOUNDED


def hz_to_rad(f_hz, sample_rate):
    """Hz to rad/sample."""
    if not sample_rate > 0:
        raise DomainError("sample_rate must be positive")
    return 2.0 * math.pi * f_hz / sample_rate


def rad_to_hz(omega, sample_rate):
    """rad/sample to Hz."""
    if not sample_rate > 0:
        raise DomainError("sample_rate must be positive")
    return omega * sample_rate / (2.0 * math.pi)


@dataclass(frozen=True)
class MotionState:
    """Receiver speed ``v`` (m/s) at angle ``theta`` (rad) to the line of
    sight, distance ``d`` (m) from the transmitter, carrier wavelength
    ``lambda_c`` (m)."""

    v: float
    theta: float
    d: float
    lambda_c: float

    def __post_init__(self):
        if not self.v >= 0:
            raise DomainError("speed must be non-negative")
        if not self.d > 0:
            raise DomainError("distance must be positive")
        if not self.lambda_c > 0:
            raise DomainError("wavelength must be positive")


@dataclass(frozen=True)
class CoherenceSpec:
    """Drift limit ``delta_max`` (Hz), interval ``tau`` (s), burst period
    ``tau_p`` (s) and SSBs per burst ``P``."""

    delta_max: float
    tau: float
    tau_p: float
    P: int

    def __post_init__(self):
        for name in ("delta_max", "tau", "tau_p", "P"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")


@dataclass(frozen=True)
class CrlbInputs:
    """Aggregated SINRs of the two sequences, their spacing ``tau_c`` (samples)
    and the correlation magnitude ``r_mag`` in [0, 1]."""

    gamma0: float
    gamma1: float
    tau_c: float
    r_mag: float = 1.0

    def __post_init__(self):
        if not (self.gamma0 >= 0 and self.gamma1 >= 0):
            raise DomainError("aggregated SINRs must be non-negative")
        if not 0 <= self.r_mag <= 1:
            raise DomainError("r_mag must lie in [0, 1]")
        if not self.tau_c > 0:
            raise DomainError("tau_c must be positive")


@dataclass(frozen=True)
class Drift:
    exact: float
    approx: float


def cfo_drift(ms, tau):
    """CFO drift (Hz) accumulated over ``tau`` seconds.

    ``exact`` follows the geometry of a straight-line pass; ``approx`` is its
    first-order form ``tau * v**2 * sin(theta)**2 / (lambda_c * d)``.
    """
    if not tau >= 0:
        raise DomainError("tau must be non-negative")
    v, th, d, lam = ms.v, ms.theta, ms.d, ms.lambda_c
    c = math.cos(th)
    s = v * tau
    dist = math.sqrt(d * d + 2.0 * d * s * c + s * s)
    exact = (v / lam) * ((d * c + s) / dist - c)
    approx = tau * v * v * math.sin(th) ** 2 / (lam * d)
    return Drift(exact, approx)


def max_speed(delta_max, lambda_c, d, theta, tau):
    """Largest speed keeping the first-order drift over ``tau`` within ``delta_max``.

    Returns :data:`UNBOUNDED` for radial motion.
    """
    if not (delta_max > 0 and lambda_c > 0 and d > 0 and tau > 0):
        raise DomainError("delta_max, lambda_c, d and tau must be positive")
    s2 = math.sin(theta) ** 2
    if s2 < 1e-24:
        return UNBOUNDED
    return math.sqrt(delta_max * lambda_c * d / (tau * s2))


def crlb_cfo(inp):
    """CRLB on the CFO (rad^2/sample^2): ``(1/G0 + 1/G1) / (2 tau_c^2 r^2)``.

    Returns :data:`UNBOUNDED` when either SINR or ``r_mag`` is zero.
    """
    if inp.gamma0 == 0 or inp.gamma1 == 0 or inp.r_mag == 0:
        return UNBOUNDED
    return (1.0 / inp.gamma0 + 1.0 / inp.gamma1) / (2.0 * inp.tau_c ** 2 * inp.r_mag ** 2)


def aggregated_sinr(alpha, sigma2, mu=1.0):
    """``(G0, G1)`` summed over SSBs; ``sigma2`` has shape ``(P, 2)``.

    An SSB with infinite variance contributes nothing.
    """
    a2 = np.abs(np.asarray(alpha, dtype=np.complex128)) ** 2
    s2 = np.asarray(sigma2, dtype=np.float64).reshape(-1, 2)
    if s2.shape[0] != a2.shape[0]:
        raise DomainError("gains and variances differ in length")
    if np.any(s2 <= 0):
        raise DomainError("variances must be positive")
    g0 = float(np.sum(a2 / s2[:, 0]))
    g1 = float(np.sum(mu * mu * a2 / s2[:, 1]))
    return g0, g1


@dataclass(frozen=True)
class DriftLimited:
    P_eff: float
    crlb: float


def drift_limited(spec, ms, crlb_in):
    """Effective SSB count under the drift limit and the matching CRLB.

    ``crlb_in`` carries the aggregated SINRs of the nominal ``spec.P`` SSBs;
    the per-SSB SINRs are spread over ``P_eff`` instead.  Radial motion or
    ``v = 0`` gives an unbounded ``P_eff`` and a zero bound.
    """
    vs2 = ms.v ** 2 * math.sin(ms.theta) ** 2
    if vs2 < 1e-24:
        return DriftLimited(UNBOUNDED, 0.0)
    p_eff = spec.delta_max * ms.lambda_c * ms.d / (vs2 * spec.tau_p) * spec.P
    base = crlb_cfo(crlb_in)
    if is_unbounded(base):
        return DriftLimited(p_eff, UNBOUNDED)
    return DriftLimited(p_eff, base * spec.P / p_eff)


# --- analysis sweeps -------------------------------------------------------------

ANALYTICS_COLUMNS = ("theta_deg", "d_m", "v_mps", "v_max_mps", "drift_exact_hz", "drift_approx_hz",
                     "P_eff", "crlb_rad2", "drift_limited_crlb_rad2")


@dataclass
class MotionSweep:
    """Grid of motion states evaluated by :func:`motion_table`."""

    delta_max: float = 0.1
    lambda_c: float = 0.1
    tau: float = 0.0025
    tau_p: float = 0.02
    P: int = 12
    theta_deg: tuple = (0.0, 30.0, 45.0, 60.0, 90.0)
    d: tuple = (50.0, 100.0, 200.0, 400.0)
    v: tuple = (5.0, 10.0, 20.0)
    rho0: float = 1.0
    rho1: float = 1.0
    tau_c: int = 254
    r_mag: float = 1.0

    @classmethod
    def from_dict(cls, d):
        from .errors import ConfigError
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown analytics keys: {sorted(unknown)}")
        for k in ("theta_deg", "d", "v"):
            if k in d:
                d[k] = tuple(float(x) for x in np.atleast_1d(d[k]))
        try:
            out = cls(**d)
            CoherenceSpec(out.delta_max, out.tau, out.tau_p, out.P)
            for dist in out.d:
                for v in out.v:
                    MotionState(v, 0.0, dist, out.lambda_c)
            CrlbInputs(out.rho0, out.rho1, out.tau_c, out.r_mag)
        except (TypeError, DomainError) as exc:
            raise ConfigError(str(exc)) from exc
        return out

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def motion_table(sweep):
    """One row per (theta, d, v): speed limit, drift over ``tau`` and the bounds."""
    spec = CoherenceSpec(sweep.delta_max, sweep.tau, sweep.tau_p, sweep.P)
    inp = CrlbInputs(sweep.P * sweep.rho0, sweep.P * sweep.rho1, sweep.tau_c, sweep.r_mag)
    base = crlb_cfo(inp)
    rows = []
    for th in sweep.theta_deg:
        rad = math.radians(th)
        for d in sweep.d:
            vmax = max_speed(sweep.delta_max, sweep.lambda_c, d, rad, sweep.tau)
            for v in sweep.v:
                ms = MotionState(v, rad, d, sweep.lambda_c)
                dr = cfo_drift(ms, sweep.tau)
                dl = drift_limited(spec, ms, inp)
                rows.append({"theta_deg": th, "d_m": d, "v_mps": v, "v_max_mps": vmax,
                             "drift_exact_hz": dr.exact, "drift_approx_hz": dr.approx,
                             "P_eff": dl.P_eff, "crlb_rad2": base, "drift_limited_crlb_rad2": dl.crlb})
    return rows
