import numpy as np
import pytest

from ecmimo import (
    ComplexChannelInstance,
    MomentSet,
    build_constellation,
    capacity_per_antenna,
    count_errors,
    delta_metrics,
    estimate_mi,
    sample_channel,
)
from ecmimo.detectors import EcSingleLoopDetector, ExactDetector, MmseDetector, UniformDetector
from ecmimo.metrics import mi_from_counts, sample_from_rows


def test_capacity_scalar_and_zero_snr():
    ch = ComplexChannelInstance(h=np.eye(1, dtype=complex), sigma_w2=1.0, m=1, r=1)
    assert capacity_per_antenna(ch, 1.0) == pytest.approx(1.0)
    assert capacity_per_antenna(ch, 0.0) == pytest.approx(0.0)


def test_capacity_matches_eigenvalue_oracle():
    rng = np.random.default_rng(1)
    ch = sample_channel(4, 4, 1.0, rng)
    snr = 10.0
    eig = np.linalg.eigvalsh(ch.h @ ch.h.conj().T)
    ref = np.sum(np.log2(1.0 + snr / 4 * eig)) / 4
    assert capacity_per_antenna(ch, snr) == pytest.approx(ref, abs=1e-10)


def test_delta_metrics():
    a = MomentSet(np.zeros(4), np.ones(4))
    assert delta_metrics(a, a) == (0.0, 0.0)
    b = MomentSet(np.full(4, 0.1), np.ones(4))
    du, du2 = delta_metrics(a, b)
    assert du == pytest.approx(0.1)
    assert du2 == pytest.approx(0.0)
    rng = np.random.default_rng(2)
    mx, my = rng.normal(size=6), rng.normal(size=6)
    x = MomentSet(mx, mx**2 + rng.random(6))
    y = MomentSet(my, my**2 + rng.random(6))
    du, du2 = delta_metrics(x, y)
    assert du == pytest.approx(sum(abs(p - q) for p, q in zip(x.mean, y.mean)) / 6, abs=1e-15)
    assert du2 == pytest.approx(sum(abs(p - q) for p, q in zip(x.second, y.second)) / 6, abs=1e-15)
    with pytest.raises(ValueError):
        delta_metrics(a, MomentSet(np.zeros(3), np.ones(3)))


def test_count_errors():
    s = np.array([1, 2, 3])
    b = np.array([0, 1, 0, 1])
    assert count_errors(s, s, b, b) == (0.0, 0.0)
    assert count_errors(s, s + 1, b, b)[0] == 1.0
    s100 = np.zeros(100)
    s100_bad = s100.copy()
    s100_bad[17] = 1
    assert count_errors(s100, s100_bad, b, b)[0] == pytest.approx(0.01)
    with pytest.raises(ValueError):
        count_errors(s, s[:2], b, b)


def test_sample_from_rows_distribution():
    rng = np.random.default_rng(3)
    pmf = np.array([[0.1, 0.2, 0.7]])
    draws = np.array([sample_from_rows(pmf, rng)[0] for _ in range(20000)])
    freq = np.bincount(draws, minlength=3) / draws.size
    assert np.abs(freq - pmf[0]).max() < 0.02


def test_mi_noiseless_saturation(qpsk):
    rng = np.random.default_rng(4)
    ch = sample_channel(2, 2, 2e-12, rng)  # 120 dB: effectively noiseless
    est = estimate_mi(ch, qpsk, ExactDetector(), 10_000, rng)
    assert est.average_mi == pytest.approx(2.0, abs=0.01)
    assert est.joint_histograms.shape == (2, 4, 4)
    assert est.per_antenna_mi.shape == (2,)


def test_mi_uniform_dummy_is_zero(qpsk):
    rng = np.random.default_rng(5)
    ch = sample_channel(2, 2, 1.0, rng)
    est = estimate_mi(ch, qpsk, UniformDetector(), 10_000, rng)
    assert est.average_mi == pytest.approx(0.0, abs=0.01)


def test_mi_exact_beats_mmse_at_moderate_snr(qpsk):
    from ecmimo import snr_to_sigma_w2

    rng = np.random.default_rng(6)
    sigma_w2 = snr_to_sigma_w2(6.0, 5, 4, 1.0)
    gaps = []
    for k in range(4):
        ch = sample_channel(5, 5, sigma_w2, np.random.default_rng(100 + k))
        mi_exact = estimate_mi(ch, qpsk, ExactDetector(), 20_000, np.random.default_rng(k)).average_mi
        mi_mmse = estimate_mi(ch, qpsk, MmseDetector(), 20_000, np.random.default_rng(k)).average_mi
        gaps.append(mi_exact - mi_mmse)
    assert np.mean(gaps) > 0.05


def test_mi_relabeling_invariance():
    rng = np.random.default_rng(7)
    counts = rng.integers(0, 50, size=(2, 4, 4))
    base = mi_from_counts(counts)
    perm = np.array([2, 0, 3, 1])
    relabeled = counts[:, perm][:, :, perm]
    assert np.allclose(mi_from_counts(relabeled), base, atol=1e-12)


def test_mi_repeatability_across_independent_runs(qpsk):
    from ecmimo import snr_to_sigma_w2

    sigma_w2 = snr_to_sigma_w2(6.0, 2, 4, 1.0)
    ch = sample_channel(2, 2, sigma_w2, np.random.default_rng(77))
    a = estimate_mi(ch, qpsk, MmseDetector(), 100_000, np.random.default_rng(1)).average_mi
    b = estimate_mi(ch, qpsk, MmseDetector(), 100_000, np.random.default_rng(2)).average_mi
    assert abs(a - b) < 0.02


def test_mi_bounded_by_capacity_and_alphabet(qpsk):
    from ecmimo import snr_to_sigma_w2

    rng = np.random.default_rng(8)
    for snr_db, det in ((0.0, MmseDetector()), (8.0, EcSingleLoopDetector()), (16.0, ExactDetector())):
        sigma_w2 = snr_to_sigma_w2(snr_db, 2, 4, 1.0)
        ch = sample_channel(2, 2, sigma_w2, rng)
        est = estimate_mi(ch, qpsk, det, 20_000, rng)
        cap = capacity_per_antenna(ch, 10 ** (snr_db / 10))
        assert 0.0 <= est.average_mi <= min(cap, 2.0) + 0.02
