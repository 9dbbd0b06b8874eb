import numpy as np
import pytest
from scipy import stats

from qbattery.core import QuantumState
from qbattery.sampling import (
    CHUNK,
    SamplerSpec,
    draw,
    fprs_purity_bounds,
    fprs_spectra,
    hamiltonian_for,
    make_rng,
    purity_region,
    sample_fers,
    sample_fprs,
    sample_fprs_batch,
    sample_gue_hamiltonian,
    sample_gue_spectra,
    sample_haar_unitaries,
    sample_haar_unitary,
    sample_hs_state,
    sample_hs_states,
    sample_low_entropy_dephased,
    sample_low_entropy_populations,
)
from qbattery.validation import ValidationError, check_states


def test_hs_states_valid_and_deterministic():
    x = sample_hs_states(2000, 4, make_rng(3))
    check_states(x, 4)
    y = sample_hs_states(2000, 4, make_rng(3))
    assert np.array_equal(x, y)
    assert isinstance(sample_hs_state(3, make_rng(1)), QuantumState)


def test_hs_mean_purity_first_moment():
    x = sample_hs_states(200_000, 3, make_rng(11))
    pur = np.sum(np.abs(x) ** 2, axis=(1, 2))
    # Hilbert-Schmidt: E[Tr rho^2] = 2d / (d^2 + 1)
    assert abs(pur.mean() - 0.6) < 0.005


def test_haar_unitary():
    u = sample_haar_unitary(1, make_rng(0))
    assert u.shape == (1, 1) and abs(abs(u[0, 0]) - 1) < 1e-15
    us = sample_haar_unitaries(500, 5, make_rng(0))
    res = np.abs(np.conj(np.swapaxes(us, 1, 2)) @ us - np.eye(5)).max()
    assert res <= 1e-12


def test_haar_marginal_and_invariance():
    us = sample_haar_unitaries(100_000, 2, make_rng(5))
    x = np.abs(us[:, 0, 0]) ** 2
    assert stats.kstest(x, "uniform").statistic < 0.01
    v = sample_haar_unitary(2, make_rng(99))
    vu = np.einsum("ij,njk->nik", v, sample_haar_unitaries(100_000, 2, make_rng(6)))
    assert stats.ks_2samp(x, np.abs(vu[:, 0, 0]) ** 2).statistic < 0.02


def test_low_entropy_populations():
    p2 = sample_low_entropy_populations(1000, 2, make_rng(1))
    assert np.all(np.sort(p2, axis=1) == [0.0, 1.0])
    p3 = sample_low_entropy_populations(1000, 3, make_rng(1))
    assert np.all(np.min(p3, axis=1) == 0.0)
    np.testing.assert_allclose(p3.sum(axis=1), 1, atol=1e-15)
    # zero positions are shuffled across all slots
    # k ~ U{1, 2} leaves 1.5 zeros per row on average, so each slot is zero half the time
    zero_slots = (p3 == 0).mean(axis=0)
    np.testing.assert_allclose(zero_slots, 0.5, atol=0.06)
    with pytest.raises(ValidationError):
        sample_low_entropy_dephased(1, make_rng(1))


def test_fers_ratio_zero_is_hs_only():
    pops, low = sample_fers(3, 1000, make_rng(2), ratio=0)
    assert not low.any()
    assert np.all(pops.min(axis=1) > 0)


def test_fers_low_entropy_enrichment():
    def entropy(p):
        with np.errstate(divide="ignore", invalid="ignore"):
            return -np.nansum(np.where(p > 0, p * np.log(p), 0), axis=1)

    pops, low = sample_fers(3, 100_000, make_rng(4))
    assert abs(low.mean() - 0.6) < 0.01
    base, _ = sample_fers(3, 100_000, make_rng(4), ratio=0)
    assert np.mean(entropy(pops) < 0.2) > np.mean(entropy(base) < 0.2)


def test_fprs_bounds_examples():
    assert fprs_purity_bounds(3, 0.0) == pytest.approx((1 / 3, 1 / 3), abs=1e-15)
    assert fprs_purity_bounds(3, 2 / 3) == pytest.approx((1, 1), abs=1e-15)
    assert fprs_purity_bounds(3, 0.3)[0] == pytest.approx(1 / 3 + 0.09 * 1.5, abs=1e-15)
    with pytest.raises(ValidationError):
        fprs_purity_bounds(3, 0.7)


def test_purity_regions():
    a = 2 / (np.sqrt(3) * 3)
    assert purity_region("low", 3).high == pytest.approx(a)
    assert purity_region("medium", 3).high == pytest.approx(np.sqrt(2) * a)
    assert purity_region("high", 3).high == pytest.approx(2 / 3)
    with pytest.raises(ValidationError):
        purity_region("extreme", 3)


def test_fprs_spectra_constraints_and_law():
    rng = make_rng(8)
    for dr1 in (0.1, 0.3, 0.5, 0.6):  # both sides of the reflection switch
        r = fprs_spectra(np.full(20_000, dr1), 3, rng)
        np.testing.assert_allclose(r.sum(axis=1), 1, atol=1e-15)
        assert r.min() >= 0 and r.max() <= 1
        shifts = 1 / 3 - r[:, 1:]
        assert shifts.min() >= -1e-15 and shifts.max() <= 1 / 3 + 1e-15
        # for three levels the free shift is uniform on its feasible interval
        lo, hi = max(0.0, dr1 - 1 / 3), min(1 / 3, dr1)
        assert stats.kstest((shifts[:, 0] - lo) / (hi - lo), "uniform").pvalue > 1e-3


def test_fprs_examples():
    s = sample_fprs(3, "low", make_rng(0), delta_r1=0.0)
    np.testing.assert_allclose(s.matrix, np.eye(3) / 3, atol=1e-15)
    states, dr1, labels = sample_fprs_batch(5000, 3, make_rng(1), regions=["low"])
    pur = np.sum(np.abs(states) ** 2, axis=(1, 2))
    a = purity_region("low", 3).high
    assert pur.min() >= 1 / 3 - 1e-12 and pur.max() <= fprs_purity_bounds(3, a)[1] + 1e-12
    assert set(labels) == {"low"}


def test_fprs_containment_all_dims():
    for d in (2, 3, 4, 6):
        states, dr1, _ = sample_fprs_batch(5000, d, make_rng(d))
        check_states(states, d)
        pur = np.sum(np.abs(states) ** 2, axis=(1, 2))
        bounds = np.array([fprs_purity_bounds(d, x) for x in dr1])
        assert np.all(pur >= bounds[:, 0] - 1e-12) and np.all(pur <= bounds[:, 1] + 1e-12)


def test_gue_hamiltonian():
    h = sample_gue_hamiltonian(5, make_rng(0))
    assert h.energies[0] == -1 and h.energies[-1] == 1
    raw = sample_gue_hamiltonian(5, make_rng(0), normalize=False)
    assert not np.isclose(raw.energies[0], -1)
    eq = hamiltonian_for(0, 3, "equal")
    np.testing.assert_array_equal(eq.energies, [-1, 0, 1])


def test_gue_level_repulsion():
    e = sample_gue_spectra(10_000, 4, make_rng(1))
    assert np.diff(e, axis=1).min() > 1e-6


def test_spec_validation():
    with pytest.raises(ValidationError):
        SamplerSpec("Bures", 3, 0)
    with pytest.raises(ValidationError):
        SamplerSpec("HSRS", 1, 0)
    with pytest.raises(ValidationError):
        SamplerSpec("FPRS", 3, 0, fprs_weights=(0, 0, 0))
    with pytest.raises(ValidationError):
        SamplerSpec("FPRS", 3, 0, fprs_weights=(-1, 1, 1))


@pytest.mark.parametrize("method", ["HSRS", "FERS", "FPRS", "GUE", "Haar"])
def test_stream_independent_of_workers_and_offsets(method):
    spec = SamplerSpec(method, 3, 1234)
    n = 2 * CHUNK + 100
    a = draw(spec, n, workers=1)
    b = draw(spec, n, workers=8)
    part = draw(spec, 300, start=CHUNK - 150)
    key = {"HSRS": "states", "FERS": "populations", "FPRS": "states", "GUE": "energies", "Haar": "unitaries"}[method]
    x, y, z = getattr(a, key), getattr(b, key), getattr(part, key)
    assert len(a) == n
    assert np.array_equal(x, y)
    assert np.array_equal(x[CHUNK - 150 : CHUNK + 150], z)


def test_different_seeds_differ():
    a = draw(SamplerSpec("HSRS", 3, 1), 10).states
    b = draw(SamplerSpec("HSRS", 3, 2), 10).states
    assert not np.allclose(a, b)
