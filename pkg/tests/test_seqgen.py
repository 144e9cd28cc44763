import numpy as np
import pytest
from hypothesis import given, strategies as st

from ssblab import DomainError, assemble_frame, gen_pss, gen_sss, gen_zc
from ssblab.corrlab import autocorr_profile, dirichlet_mag
from ssblab.seqgen import ids_to_pci, nr_frame, pci_to_ids, sss_bank_matrix


# Independent re-derivation of the 38.211 generators, written from the
# recurrences with plain Python lists (no shared helpers with the package).
def _lfsr(init, taps):
    x = list(init)
    while len(x) < 127:
        i = len(x) - 7
        x.append(sum(x[i + t] for t in taps) % 2)
    return x


def oracle_pss(nid2):
    x = _lfsr([0, 1, 1, 0, 1, 1, 1], (4, 0))
    return np.array([1 - 2 * x[(n + 43 * nid2) % 127] for n in range(127)], dtype=float)


def oracle_sss(nid1, nid2):
    x0 = _lfsr([1, 0, 0, 0, 0, 0, 0], (4, 0))
    x1 = _lfsr([1, 0, 0, 0, 0, 0, 0], (1, 0))
    m0 = 15 * (nid1 // 112) + 5 * nid2
    m1 = nid1 % 112
    return np.array([(1 - 2 * x0[(n + m0) % 127]) * (1 - 2 * x1[(n + m1) % 127]) for n in range(127)], dtype=float)


@pytest.mark.parametrize("nid2", [0, 1, 2])
def test_pss_matches_independent_generator(nid2):
    np.testing.assert_array_equal(gen_pss(nid2).samples, oracle_pss(nid2))


@given(st.integers(0, 335), st.integers(0, 2))
def test_sss_matches_independent_generator(nid1, nid2):
    np.testing.assert_array_equal(gen_sss(nid1, nid2).samples, oracle_sss(nid1, nid2))


def test_pss_known_prefix():
    # first bits of x(n) for nid2 = 0 are the initial state 0110111 -> BPSK 1,-1,-1,1,-1,-1,-1
    np.testing.assert_array_equal(gen_pss(0).samples[:7], [1, -1, -1, 1, -1, -1, -1])


@pytest.mark.parametrize("seq", [gen_pss(1), gen_sss(17, 2), gen_zc(25)])
def test_unit_average_energy(seq):
    assert len(seq) == 127
    assert np.mean(np.abs(seq.samples) ** 2) == pytest.approx(1.0, abs=1e-12)
    assert not seq.samples.flags.writeable


def test_sss_distinct_over_thirty_identities():
    seqs = {tuple(gen_sss(i, l).samples) for i in range(10) for l in range(3)}
    assert len(seqs) == 30


def test_sss_bank_rows():
    bank = sss_bank_matrix(1)
    assert bank.shape == (336, 127)
    np.testing.assert_array_equal(bank[200], gen_sss(200, 1).samples)


@pytest.mark.parametrize("bad", [-1, 3, 1.5, True])
def test_pss_domain(bad):
    with pytest.raises(DomainError):
        gen_pss(bad)


@pytest.mark.parametrize("nid1,nid2", [(336, 0), (-1, 0), (0, 3)])
def test_sss_domain(nid1, nid2):
    with pytest.raises(DomainError):
        gen_sss(nid1, nid2)


@pytest.mark.parametrize("root,n", [(0, 127), (127, 127), (2, 4), (3, 1)])
def test_zc_domain(root, n):
    with pytest.raises(DomainError):
        gen_zc(root, n)


def test_zc_constant_modulus_and_ideal_autocorrelation():
    z = gen_zc(29).samples
    np.testing.assert_allclose(np.abs(z), 1.0, atol=1e-12)
    for lag in (1, 5, 63):
        assert abs(np.vdot(z, np.roll(z, lag))) / 127 < 1e-9


@given(st.sampled_from([1, 25, 29, 34, 126]), st.floats(-0.2, 0.2, allow_nan=False))
def test_constant_modulus_profile_is_dirichlet(root, omega):
    r = autocorr_profile(gen_zc(root), omega)
    assert abs(r) == pytest.approx(float(dirichlet_mag(127, omega)), abs=1e-9)


def test_dirichlet_at_zero_is_one():
    assert float(dirichlet_mag(127, 0.0)) == 1.0


def test_frame_layout_and_gap():
    f = nr_frame(5, 1, mu=1.0)
    wf = f.render()
    assert f.length == 381 and wf.shape == (381,) and f.tau_c == 254
    np.testing.assert_array_equal(wf[:127], gen_pss(1).samples)
    assert np.all(wf[127:254] == 0)
    np.testing.assert_array_equal(wf[254:], gen_sss(5, 1).samples)


def test_second_sequence_scaling_energy():
    base = assemble_frame(gen_pss(0), gen_sss(3, 0), mu=1.0).render()
    scaled = assemble_frame(gen_pss(0), gen_sss(3, 0), mu=2.0).render()
    e1 = np.sum(np.abs(base[254:]) ** 2)
    e2 = np.sum(np.abs(scaled[254:]) ** 2)
    assert e2 == pytest.approx(4 * e1, rel=1e-12)
    np.testing.assert_array_equal(base[:127], scaled[:127])


def test_frame_parts_sum_to_frame_at_unit_scaling():
    f = assemble_frame(gen_zc(1), gen_zc(2), mu=1.0, tau0=10)
    a, b = f.parts()
    np.testing.assert_array_equal(a + b, f.render())


@pytest.mark.parametrize("kwargs", [dict(mu=0.0), dict(mu=-1.0), dict(mu=float("nan")), dict(tau0=-1),
                                    dict(tau0=2.5)])
def test_frame_domain(kwargs):
    with pytest.raises(DomainError):
        assemble_frame(gen_pss(0), gen_sss(0, 0), **kwargs)


def test_frame_length_mismatch():
    with pytest.raises(DomainError):
        assemble_frame(gen_zc(1, 31), gen_zc(1, 127))


@given(st.integers(0, 1007))
def test_pci_roundtrip(pci):
    assert ids_to_pci(*pci_to_ids(pci)) == pci


def test_pci_domain():
    with pytest.raises(DomainError):
        pci_to_ids(1008)
