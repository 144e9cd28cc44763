"""LS channel/scaling estimation, single- and multi-SSB CFO estimators, and
the SIC joint refinement loop."""
from dataclasses import dataclass, field
from math import pi

import numpy as np
from scipy.linalg import qr, solve_triangular

from . import kernels
from .corrlab import CorrelationSet, calibrate_sigma_c2, model_variances
from .errors import DegenerateModelError, DomainError, UndefinedEstimateError
from .seqgen import assemble_frame

RANK_RTOL = 1e-10
# SSS/PSS amplitude ratios outside this box are not physical for NR (0 or 3 dB
# power offset); unbounded, a weak BS sharing timing and first sequence with a
# strong one can collapse to mu ~ 0 and soak up the neighbour's first sequence.
MU_BOUNDS = (0.5, 2.0)


def wrap_cfo(phase, tau_c):
    """Map a phase to a CFO in ``(-pi/tau_c, pi/tau_c]``."""
    if not -pi < phase <= pi:
        phase = float(np.angle(np.exp(1j * phase)))
    if phase <= -pi:
        phase += 2 * pi
    return phase / tau_c


def cfo_single(r0, r1, tau_c):
    """CFO from one SSB: ``-angle(r1 / r0) / tau_c``.

    Raises:
        UndefinedEstimateError: ``r0 == 0``.
    """
    if r0 == 0:
        raise UndefinedEstimateError("first-sequence correlation is zero")
    return wrap_cfo(-np.angle(r1 / r0), tau_c)


def combine_statistics(cs, alpha_hat, mu_hat):
    """The weighted sums ``(psi0, psi1)`` that drive the multi-SSB estimator."""
    a = np.asarray(alpha_hat, dtype=np.complex128).reshape(-1)
    if a.shape[0] != cs.n_ssb:
        raise DomainError(f"{a.shape[0]} gains for {cs.n_ssb} SSBs")
    psi0 = np.sum(a * np.conj(cs.r[:, 0]) / cs.sigma2[:, 0])
    psi1 = np.sum(a * mu_hat * np.conj(cs.r[:, 1]) / cs.sigma2[:, 1])
    return complex(psi0), complex(psi1)


def cfo_multi(cs, alpha_hat, mu_hat, tau_c):
    """Maximum-likelihood CFO from all SSBs of one BS: ``angle(psi1 * conj(psi0)) / tau_c``.

    Raises:
        UndefinedEstimateError: every weight vanishes.
    """
    psi0, psi1 = combine_statistics(cs, alpha_hat, mu_hat)
    prod = psi1 * np.conj(psi0)
    if prod == 0 or not np.isfinite(prod):
        raise UndefinedEstimateError("all SSB weights vanish")
    return wrap_cfo(np.angle(prod), tau_c)


def profiled_likelihood(cs, alpha_hat, mu_hat, tau_c, omega):
    """Log-likelihood maximized over the common complex gain, up to a constant,
    on an array of CFO hypotheses."""
    psi0, psi1 = combine_statistics(cs, alpha_hat, mu_hat)
    omega = np.asarray(omega, dtype=np.float64)
    return np.abs(psi0 + np.exp(-1j * omega * tau_c) * psi1) ** 2


# --- observation model ---------------------------------------------------------

@dataclass
class ModelMatrices:
    """Dense observation operators (intended for verification, not speed).

    ``A`` has one column per (BS, SSB) in row-major ``k * P + p`` order; ``A0``
    is the first-sequence part of ``A`` and ``B`` maps scalings to the
    second-sequence contribution for the given gains.
    """

    A: np.ndarray
    A0: np.ndarray
    B: np.ndarray


def _column(frame_wf, start, omega, lo, hi):
    """One model column restricted to rows ``[lo, hi)``."""
    out = np.zeros(hi - lo, dtype=np.complex128)
    m = np.arange(frame_wf.shape[0]) + start
    out[start - lo:start - lo + frame_wf.shape[0]] = frame_wf * np.exp(-1j * omega * m)
    return out


def _check_starts(n_obs, frames, starts):
    starts = np.atleast_2d(np.asarray(starts, dtype=np.int64))
    if starts.shape[0] != len(frames):
        raise DomainError(f"timing grid has {starts.shape[0]} rows for {len(frames)} BSs")
    for k, f in enumerate(frames):
        if starts[k].size and (starts[k].min() < 0 or starts[k].max() + f.length > n_obs):
            raise DomainError(f"BS {k} SSB frames extend outside the observation")
    return starts


def build_model_matrices(n_obs, frames, starts, omega, alpha=None):
    """Dense ``A``, ``A0`` and ``B`` for frames at ``starts[k, p]`` with CFO ``omega[k]``.

    ``A[:, k*P+p]`` equals ``c_k[m - starts[k, p]] * exp(-1j*omega_k*m)``, which
    carries the per-SSB phase ``exp(-1j*omega_k*p*N_f)`` of the block form.
    """
    starts = _check_starts(n_obs, frames, starts)
    K, P = starts.shape
    A = np.zeros((n_obs, K * P), dtype=np.complex128)
    A0 = np.zeros_like(A)
    B = np.zeros((n_obs, K), dtype=np.complex128)
    for k, f in enumerate(frames):
        first, second = f.parts()
        for p in range(P):
            s = starts[k, p]
            A[:, k * P + p] = _column(f.render(), s, omega[k], 0, n_obs)
            A0[:, k * P + p] = _column(first, s, omega[k], 0, n_obs)
            if alpha is not None:
                B[:, k] += alpha[k, p] * _column(second, s, omega[k], 0, n_obs)
    return ModelMatrices(A, A0, B)


def reconstruct(n_obs, frames, starts, omega, alpha, out=None):
    """``A(tau, omega) @ alpha`` without forming ``A``."""
    starts = np.atleast_2d(np.asarray(starts, dtype=np.int64))
    if out is None:
        out = np.zeros(n_obs, dtype=np.complex128)
    for k, f in enumerate(frames):
        kernels.add_frames(out, f.render(), starts[k], alpha[k], omega[k])
    return out


def _components(intervals):
    """Group column indices whose ``[lo, hi)`` supports overlap."""
    order = sorted(range(len(intervals)), key=lambda i: intervals[i][0])
    groups = []
    cur, cur_hi = [], None
    for i in order:
        lo, hi = intervals[i]
        if cur and lo < cur_hi:
            cur.append(i)
            cur_hi = max(cur_hi, hi)
        else:
            if cur:
                groups.append(cur)
            cur, cur_hi = [i], hi
    if cur:
        groups.append(cur)
    return groups


def _pinv_solve(M, rhs, labels):
    """Minimum-norm LS via pivoted QR; rank deficiency is an error."""
    Q, R, piv = qr(M, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0:
        return np.zeros(0, dtype=np.complex128)
    rank = int(np.sum(diag > RANK_RTOL * diag[0])) if diag[0] > 0 else 0
    if rank < M.shape[1]:
        bad = [labels[j] for j in piv[rank:]]
        raise DegenerateModelError(
            f"observation model is rank deficient; colliding (BS, SSB) columns: {bad}", columns=bad)
    z = solve_triangular(R, Q.conj().T @ rhs)
    x = np.empty_like(z)
    x[piv] = z
    return x


def estimate_channel_gains(y, frames, starts, omega):
    """Least-squares per-SSB gains ``pinv(A) @ y``, shape ``(K, P)``.

    The solve is split over groups of columns with overlapping support, which
    is exact because columns in different groups are orthogonal.

    Raises:
        DegenerateModelError: ``A`` is rank deficient; ``.columns`` lists the
            offending ``(k, p)`` pairs.
    """
    y = np.asarray(getattr(y, "samples", y), dtype=np.complex128)
    starts = _check_starts(y.shape[0], frames, starts)
    K, P = starts.shape
    labels = [(k, p) for k in range(K) for p in range(P)]
    intervals = [(starts[k, p], starts[k, p] + frames[k].length) for k, p in labels]
    alpha = np.zeros(K * P, dtype=np.complex128)
    wfs = [f.render() for f in frames]
    omega = np.asarray(omega, dtype=np.float64)
    for grp in _components(intervals):
        lo = min(intervals[i][0] for i in grp)
        hi = max(intervals[i][1] for i in grp)
        ks = [labels[i][0] for i in grp]
        if len({wfs[k].shape[0] for k in ks}) == 1:
            W = np.stack([wfs[k] for k in ks])
            rows = np.array([intervals[i][0] for i in grp])[:, None] + np.arange(W.shape[1])[None, :]
            M = np.zeros((hi - lo, len(grp)), dtype=np.complex128)
            M[rows - lo, np.arange(len(grp))[:, None]] = W * np.exp(-1j * omega[ks][:, None] * rows)
        else:
            M = np.stack([_column(wfs[k], intervals[i][0], omega[k], lo, hi) for i, k in zip(grp, ks)], axis=1)
        alpha[grp] = _pinv_solve(M, y[lo:hi], [labels[i] for i in grp])
    return alpha.reshape(K, P)


def estimate_scaling(y, frames, starts, omega, alpha_hat, bounds=MU_BOUNDS):
    """LS scalings ``pinv(B) @ (y - A0 @ alpha_hat)``, projected onto ``bounds``.

    ``bounds=(lo, hi)`` must satisfy ``0 < lo <= hi``; pass ``(tiny, inf)`` for
    the bare positive-real projection.

    Raises:
        DegenerateModelError: some BS has no second-sequence energy (for
            instance all of its gains are zero).
    """
    y = np.asarray(getattr(y, "samples", y), dtype=np.complex128)
    starts = _check_starts(y.shape[0], frames, starts)
    K = starts.shape[0]
    n_obs = y.shape[0]
    first = np.zeros(n_obs, dtype=np.complex128)
    B = np.zeros((n_obs, K), dtype=np.complex128, order="F")
    for k, f in enumerate(frames):
        a, b = f.parts()
        kernels.add_frames(first, a, starts[k], alpha_hat[k], omega[k])
        kernels.add_frames(B[:, k], b, starts[k], alpha_hat[k], omega[k])
    norms = np.linalg.norm(B, axis=0)
    ref = max(np.linalg.norm(y), 1e-300)
    dead = [k for k in range(K) if not norms[k] > 1e-12 * ref]
    if dead:
        raise DegenerateModelError(f"zero-energy second segment for BS {dead}", columns=dead)
    mu = _pinv_solve(B, y - first, list(range(K)))
    lo, hi = bounds
    return np.clip(mu.real, lo, hi)


# --- SIC joint estimation ---------------------------------------------------------

@dataclass
class SicOptions:
    """Knobs of :func:`sic_joint_estimate`.

    ``eps`` defaults to ``1e-7 * K``.  ``sigma_n2`` / ``sigma_c2`` are taken
    from the residual / the family calibration when left as None.
    """

    eps: float = None
    max_iters: int = 20
    sigma_n2: float = None
    sigma_c2: float = None
    estimate_mu: bool = True
    init_omega: object = None
    init_mu: object = None
    cancel: bool = True
    mu_bounds: tuple = MU_BOUNDS


@dataclass
class BsEstimate:
    ids: tuple
    family: str
    tau_grid: np.ndarray
    omega_hat: float
    alpha_hat: np.ndarray
    mu_hat: float
    ssb_indices: tuple = ()

    @property
    def pci(self):
        return 3 * self.ids[0] + self.ids[1] if self.family == "nr" else None

    @property
    def power(self):
        return float(np.mean(np.abs(self.alpha_hat) ** 2))


@dataclass
class EstimateReport:
    """Per-BS estimates plus iteration diagnostics.

    ``delta_trace[i, k]`` is ``|delta_k|`` at iteration ``i``.
    """

    bss: list
    iterations: int
    delta_trace: np.ndarray
    converged: bool
    eps: float
    sigma_n2: float = None
    extra: dict = field(default_factory=dict)

    @property
    def residual_cfo_trace(self):
        return self.delta_trace.sum(axis=1) if self.delta_trace.size else np.zeros(0)

    def by_power(self):
        return sorted(self.bss, key=lambda b: -b.power)


def _window_corr(y, c, starts, omega):
    """Correlate the CFO-compensated signal ``y * exp(+1j*omega*m)`` against ``c`` at each start."""
    n = c.shape[0]
    idx = starts[:, None] + np.arange(n)[None, :]
    seg = y[idx] * np.exp(1j * omega * idx)
    return seg @ np.conj(c) / n


def _frames_for(targets, mu, n, tau0):
    return [assemble_frame(t[0], t[1], float(mu[k]), tau0) for k, t in enumerate(targets)]


def _noise_floor(y, n_cols, resid):
    dof = max(y.shape[0] - n_cols, 1)
    est = float(np.vdot(resid, resid).real / dof)
    return max(est, 1e-15 * float(np.mean(np.abs(y) ** 2)) + 1e-300)


def sic_joint_estimate(y, targets, starts, opts=None, tau0=127, family="nr", ids=None):
    """Joint CFO, gain and scaling estimation with successive interference cancellation.

    Args:
        y: received samples.
        targets: per BS the pair ``(c0, c1)`` of :class:`SyncSequence`.
        starts: SSB start offsets, shape ``(K, P)`` (the completed timing grids).
        opts: :class:`SicOptions`.
        tau0: zero gap between the two sequences (samples).
        family: sequence family name (used to calibrate ``sigma_c2``).
        ids: per-BS identities recorded in the report.

    Each iteration refits gains and scalings jointly, then visits BSs in
    descending estimated power: the other BSs' reconstruction is cancelled,
    the residual is CFO-compensated, an increment is estimated with
    :func:`cfo_multi` and the BS's gains are refreshed on its own residual.
    Iteration stops once the summed increments fall below ``eps``.
    """
    opts = opts or SicOptions()
    y = np.asarray(getattr(y, "samples", y), dtype=np.complex128)
    starts = np.atleast_2d(np.asarray(starts, dtype=np.int64))
    K, P = starts.shape
    n_obs = y.shape[0]
    if K == 0:
        return EstimateReport([], 0, np.zeros((0, 0)), True, 0.0)
    n = targets[0][0].n
    tau_c = n + tau0
    eps = opts.eps if opts.eps is not None else 1e-7 * K
    omega = np.zeros(K) if opts.init_omega is None else np.array(opts.init_omega, dtype=np.float64)
    mu = np.ones(K) if opts.init_mu is None else np.array(opts.init_mu, dtype=np.float64)
    sigma_c2 = opts.sigma_c2 if opts.sigma_c2 is not None else calibrate_sigma_c2(family, n)
    c0s = [t[0].samples for t in targets]
    c1s = [t[1].samples for t in targets]

    trace = []
    converged = False
    sigma_n2 = opts.sigma_n2
    frames = _frames_for(targets, mu, n, tau0)
    alpha = None
    for it in range(opts.max_iters):
        frames = _frames_for(targets, mu, n, tau0)
        alpha = estimate_channel_gains(y, frames, starts, omega)
        if opts.estimate_mu:
            mu = estimate_scaling(y, frames, starts, omega, alpha, opts.mu_bounds)
            frames = _frames_for(targets, mu, n, tau0)
            alpha = estimate_channel_gains(y, frames, starts, omega)
        recon = reconstruct(n_obs, frames, starts, omega, alpha)
        if opts.sigma_n2 is None:
            sigma_n2 = _noise_floor(y, K * P + K, y - recon)
        order = np.argsort(-np.sum(np.abs(alpha) ** 2, axis=1), kind="stable")
        deltas = np.zeros(K)
        for k in order:
            own = reconstruct(n_obs, [frames[k]], starts[k:k + 1], omega[k:k + 1], alpha[k:k + 1])
            resid = y - recon + own if opts.cancel else y
            if it == 0:
                s2 = np.full((P, 2), sigma_n2 / n)
            else:
                s2 = model_variances(alpha, k, mu[k], sigma_n2, sigma_c2, n)
            r = np.stack([_window_corr(resid, c0s[k], starts[k], omega[k]),
                          _window_corr(resid, c1s[k], starts[k] + tau_c, omega[k])], axis=1)
            try:
                delta = cfo_multi(CorrelationSet(r, s2), alpha[k], mu[k], tau_c)
            except UndefinedEstimateError:
                delta = 0.0
            # stay in the unambiguous range; an accumulated estimate past pi/tau_c is an alias
            omega[k] = wrap_cfo((omega[k] + delta) * tau_c, tau_c)
            deltas[k] = abs(delta)
            # refresh this BS's gains on its own residual so later BSs cancel it accurately
            for p in range(P):
                s = starts[k, p]
                col = _column(frames[k].render(), s, omega[k], s, s + frames[k].length)
                alpha[k, p] = np.vdot(col, resid[s:s + frames[k].length]) / np.vdot(col, col).real
            new_own = reconstruct(n_obs, [frames[k]], starts[k:k + 1], omega[k:k + 1], alpha[k:k + 1])
            recon = recon - own + new_own
        trace.append(deltas)
        if deltas.sum() < eps:
            converged = True
            break

    frames = _frames_for(targets, mu, n, tau0)
    alpha = estimate_channel_gains(y, frames, starts, omega)
    if opts.estimate_mu:
        mu = estimate_scaling(y, frames, starts, omega, alpha, opts.mu_bounds)
        frames = _frames_for(targets, mu, n, tau0)
        alpha = estimate_channel_gains(y, frames, starts, omega)

    if ids is None:
        ids = [t[1].identity if family == "nr" else t[0].identity + t[1].identity for t in targets]
    bss = [BsEstimate(tuple(ids[k]), family, starts[k].copy(), float(omega[k]), alpha[k].copy(), float(mu[k]))
           for k in range(K)]
    return EstimateReport(bss, len(trace), np.array(trace).reshape(len(trace), K), converged, eps, sigma_n2)
