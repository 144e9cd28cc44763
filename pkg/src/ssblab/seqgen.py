"""PSS/SSS/Zadoff-Chu synchronization sequences and SS frame assembly.

The PSS and SSS follow the 3GPP TS 38.211 m-sequence constructions
(sections 7.4.2.2 and 7.4.2.3).  Every sequence is normalized to unit
average energy so that channel gains carry the full link power.
"""
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from math import gcd

import numpy as np

from .errors import DomainError

NR_SEQ_LEN = 127
N_NID1 = 336
N_NID2 = 3


class SeqFamily(str, Enum):
    PSS = "PSS"
    SSS = "SSS"
    ZC = "ZadoffChu"


@dataclass(frozen=True, eq=False)
class SyncSequence:
    """A unit-energy reference sequence with its identity.

    Attributes:
        samples: read-only complex array of length N.
        family: sequence family.
        identity: ``(nid2,)`` for PSS, ``(nid1, nid2)`` for SSS, ``(root,)`` for ZC.
    """

    samples: np.ndarray
    family: SeqFamily
    identity: tuple

    @property
    def n(self):
        return self.samples.shape[0]

    def __len__(self):
        return self.samples.shape[0]


def _freeze(samples, family, identity):
    samples = np.asarray(samples, dtype=np.complex128)
    samples = samples / np.sqrt(np.mean(np.abs(samples) ** 2))
    samples.setflags(write=False)
    return SyncSequence(samples, family, tuple(int(i) for i in identity))


def _mseq(taps, init, n=NR_SEQ_LEN):
    """Binary m-sequence x(i+7) = sum of x(i+t) over taps (mod 2)."""
    x = np.zeros(n, dtype=np.int64)
    x[:7] = init
    for i in range(n - 7):
        x[i + 7] = sum(x[i + t] for t in taps) % 2
    return x


_PSS_X = _mseq((4, 0), [0, 1, 1, 0, 1, 1, 1])
_SSS_X0 = _mseq((4, 0), [1, 0, 0, 0, 0, 0, 0])
_SSS_X1 = _mseq((1, 0), [1, 0, 0, 0, 0, 0, 0])


def _check_int(name, value, lo, hi):
    if isinstance(value, bool) or int(value) != value or not lo <= value <= hi:
        raise DomainError(f"{name}={value!r} outside [{lo}, {hi}]")


@lru_cache(maxsize=None)
def gen_pss(nid2):
    """Primary synchronization sequence for sector identity ``nid2`` in {0, 1, 2}."""
    _check_int("nid2", nid2, 0, N_NID2 - 1)
    n = np.arange(NR_SEQ_LEN)
    d = 1 - 2 * _PSS_X[(n + 43 * nid2) % NR_SEQ_LEN]
    return _freeze(d, SeqFamily.PSS, (nid2,))


@lru_cache(maxsize=None)
def gen_sss(nid1, nid2):
    """Secondary synchronization sequence for ``(nid1, nid2)``."""
    _check_int("nid1", nid1, 0, N_NID1 - 1)
    _check_int("nid2", nid2, 0, N_NID2 - 1)
    m0 = 15 * (nid1 // 112) + 5 * nid2
    m1 = nid1 % 112
    n = np.arange(NR_SEQ_LEN)
    d = (1 - 2 * _SSS_X0[(n + m0) % NR_SEQ_LEN]) * (1 - 2 * _SSS_X1[(n + m1) % NR_SEQ_LEN])
    return _freeze(d, SeqFamily.SSS, (nid1, nid2))


@lru_cache(maxsize=None)
def gen_zc(root, n=NR_SEQ_LEN):
    """Zadoff-Chu sequence ``exp(-j*pi*root*m*(m+1)/n)``; ``root`` must be coprime with ``n``."""
    if n < 2:
        raise DomainError(f"ZC length must be >= 2, got {n}")
    if root % n == 0 or gcd(root, n) != 1:
        raise DomainError(f"ZC root {root} is not coprime with length {n}")
    m = np.arange(n)
    return _freeze(np.exp(-1j * np.pi * root * m * (m + 1) / n), SeqFamily.ZC, (root,))


def pss_bank():
    return [gen_pss(l) for l in range(N_NID2)]


@lru_cache(maxsize=None)
def sss_bank_matrix(nid2):
    """All 336 SSS sequences sharing ``nid2`` as a ``(336, 127)`` array (row = nid1)."""
    out = np.stack([gen_sss(i, nid2).samples for i in range(N_NID1)])
    out.setflags(write=False)
    return out


def pci_to_ids(pci):
    if not 0 <= pci < N_NID1 * N_NID2:
        raise DomainError(f"PCI {pci} outside [0, {N_NID1 * N_NID2 - 1}]")
    return pci // 3, pci % 3


def ids_to_pci(nid1, nid2):
    return 3 * nid1 + nid2


@dataclass(frozen=True, eq=False)
class SsFrame:
    """Composite reference ``c0 (+) zeros(tau0) (+) mu * c1`` of one SSB."""

    c0: SyncSequence
    c1: SyncSequence
    mu: float
    tau0: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self):
        return self.c0.n

    @property
    def tau_c(self):
        return self.c0.n + self.tau0

    @property
    def length(self):
        return 2 * self.c0.n + self.tau0

    def render(self):
        """The waveform ``[c0; zeros(tau0); mu*c1]`` (read-only)."""
        wf = self._cache.get("wf")
        if wf is None:
            wf = np.zeros(self.length, dtype=np.complex128)
            wf[: self.n] = self.c0.samples
            wf[self.tau_c:] = self.mu * self.c1.samples
            wf.setflags(write=False)
            self._cache["wf"] = wf
        return wf

    def parts(self):
        """``(first, second)`` segment waveforms of length ``length`` with the other zeroed; ``second`` excludes mu."""
        p = self._cache.get("parts")
        if p is None:
            a = np.zeros(self.length, dtype=np.complex128)
            b = np.zeros(self.length, dtype=np.complex128)
            a[: self.n] = self.c0.samples
            b[self.tau_c:] = self.c1.samples
            a.setflags(write=False)
            b.setflags(write=False)
            p = self._cache["parts"] = (a, b)
        return p


def assemble_frame(c0, c1, mu=1.0, tau0=NR_SEQ_LEN):
    """Build the SS frame of one BS.

    Raises:
        DomainError: mismatched sequence lengths, ``mu <= 0`` or ``tau0 < 0``.
    """
    if c0.n != c1.n:
        raise DomainError(f"sequence lengths differ: {c0.n} vs {c1.n}")
    if not np.isfinite(mu) or mu <= 0:
        raise DomainError(f"mu must be positive, got {mu}")
    if int(tau0) != tau0 or tau0 < 0:
        raise DomainError(f"tau0 must be a non-negative integer, got {tau0}")
    return SsFrame(c0, c1, float(mu), int(tau0))


def nr_frame(nid1, nid2, mu=1.0, tau0=NR_SEQ_LEN):
    """PSS/SSS frame for a cell identity."""
    return assemble_frame(gen_pss(nid2), gen_sss(nid1, nid2), mu, tau0)
