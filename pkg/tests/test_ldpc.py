import numpy as np
import pytest

from ecmimo import (
    build_constellation,
    build_regular_ldpc,
    coded_ber_run,
    decode_bp,
    encode,
    load_code_text,
    save_code_text,
)
from ecmimo.detectors import MmseDetector, UniformDetector
from ecmimo.ldpc import ChannelEnsemble, wilson_interval


@pytest.fixture(scope="module")
def code1024():
    return build_regular_ldpc(1024, 3, 6, 2024)


def test_construction_weights_and_rate(code1024):
    code = code1024
    assert code.n_checks == 512
    assert np.all(np.bincount(code.check_adj.ravel(), minlength=1024) == 3)
    assert code.check_adj.shape == (512, 6)
    # every check touches 6 distinct variables
    assert all(len(set(row)) == 6 for row in code.check_adj)
    assert code.k == 1024 - 512 + code.rank_deficiency
    assert code.rate == pytest.approx(0.5, abs=0.02)


def test_construction_deterministic():
    a = build_regular_ldpc(504, 3, 6, 99)
    b = build_regular_ldpc(504, 3, 6, 99)
    assert np.array_equal(a.check_adj, b.check_adj)
    c = build_regular_ldpc(504, 3, 6, 100)
    assert not np.array_equal(a.check_adj, c.check_adj)


def test_construction_infeasible_parameters():
    with pytest.raises(ValueError):
        build_regular_ldpc(100, 3, 7, 0)


def test_four_cycles_reduced():
    from ecmimo.ldpc import _four_cycle_conflicts

    code = build_regular_ldpc(1024, 3, 6, 7)
    assert len(_four_cycle_conflicts(code.check_adj, code.n)) == 0


def test_encode_properties(code1024):
    code = code1024
    rng = np.random.default_rng(1)
    zero = encode(code, np.zeros(code.k, dtype=np.uint8))
    assert not zero.any()
    a_info = rng.integers(0, 2, size=code.k, dtype=np.uint8)
    b_info = rng.integers(0, 2, size=code.k, dtype=np.uint8)
    a, b = encode(code, a_info), encode(code, b_info)
    assert not code.syndrome(a).any()
    assert not code.syndrome(b).any()
    assert not code.syndrome((a + b) % 2).any()
    # systematic recovery
    assert np.array_equal(a[code.info_positions], a_info)
    with pytest.raises(ValueError):
        encode(code, np.zeros(code.k + 1, dtype=np.uint8))


def test_decode_noiseless_single_iteration(code1024):
    code = code1024
    rng = np.random.default_rng(2)
    word = encode(code, rng.integers(0, 2, size=code.k, dtype=np.uint8))
    llrs = 40.0 * (1.0 - 2.0 * word)
    res = decode_bp(code, llrs)
    assert res.syndrome_satisfied
    assert res.iterations_used == 1
    assert np.array_equal(res.decoded_bits, word)


def test_decode_corrects_single_flip(code1024):
    code = code1024
    rng = np.random.default_rng(3)
    word = encode(code, rng.integers(0, 2, size=code.k, dtype=np.uint8))
    llrs = 12.0 * (1.0 - 2.0 * word)
    llrs[137] = -llrs[137]
    res = decode_bp(code, llrs)
    assert res.syndrome_satisfied
    assert np.array_equal(res.decoded_bits, word)


def test_decode_all_zero_llrs_deterministic(code1024):
    a = decode_bp(code1024, np.zeros(1024), max_iters=5)
    b = decode_bp(code1024, np.zeros(1024), max_iters=5)
    assert np.array_equal(a.decoded_bits, b.decoded_bits)
    assert a.syndrome_satisfied == b.syndrome_satisfied


def test_decode_rejects_bad_input(code1024):
    with pytest.raises(ValueError):
        decode_bp(code1024, np.zeros(10))
    bad = np.zeros(1024)
    bad[0] = np.inf
    with pytest.raises(ValueError):
        decode_bp(code1024, bad)


def test_roundtrip_thousand_words(code1024):
    code = code1024
    rng = np.random.default_rng(4)
    infos = rng.integers(0, 2, size=(1000, code.k), dtype=np.uint8)
    for info in infos:
        word = encode(code, info)
        res = decode_bp(code, 40.0 * (1.0 - 2.0 * word), max_iters=2)
        assert res.syndrome_satisfied
        assert np.array_equal(res.decoded_bits[code.info_positions], info)


def test_bp_sign_symmetry_exact():
    # negating the LLRs on a codeword's support flips the decoded word by
    # exactly that codeword (BP symmetry with matched noise)
    code = build_regular_ldpc(512, 3, 6, 5)
    rng = np.random.default_rng(6)
    word = encode(code, rng.integers(0, 2, size=code.k, dtype=np.uint8))
    base_llr = rng.normal(loc=3.0, scale=2.0, size=code.n)
    res_zero = decode_bp(code, base_llr, max_iters=30)
    res_word = decode_bp(code, base_llr * (1.0 - 2.0 * word), max_iters=30)
    assert np.array_equal(res_word.decoded_bits, (res_zero.decoded_bits + word) % 2)
    assert res_zero.syndrome_satisfied == res_word.syndrome_satisfied


def test_bp_symmetry_statistical():
    # all-zero-codeword BER statistically equals random-codeword BER on a
    # matched AWGN LLR channel, within two binomial standard deviations
    code = build_regular_ldpc(512, 3, 6, 8)
    rng = np.random.default_rng(10)
    sigma = 0.83  # near the waterfall for rate ~1/2 BPSK
    words = 500
    diffs = np.zeros(words)
    for trial in range(words):
        noise = rng.normal(size=code.n)
        info = rng.integers(0, 2, size=code.k, dtype=np.uint8)
        word = encode(code, info)
        errs = []
        for bits in (np.zeros(code.n, dtype=np.uint8), word):
            tx = 1.0 - 2.0 * bits
            llr = 2.0 * (tx + sigma * noise) / sigma**2
            res = decode_bp(code, np.clip(llr, -40, 40), max_iters=40)
            errs.append(np.sum(res.decoded_bits != bits))
        diffs[trial] = errs[0] - errs[1]
    # paired z-test on per-word error differences at two standard errors
    stderr = diffs.std(ddof=1) / np.sqrt(words)
    assert abs(diffs.mean()) <= 2.0 * stderr + 1e-9


def test_text_format_roundtrip(tmp_path, code1024):
    path = tmp_path / "code.txt"
    save_code_text(code1024, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "1024 512"
    assert len(lines) == 513
    loaded = load_code_text(path)
    assert loaded.n == 1024 and loaded.n_checks == 512
    assert np.array_equal(np.sort(loaded.check_adj, axis=1), np.sort(code1024.check_adj, axis=1))
    rng = np.random.default_rng(11)
    info = rng.integers(0, 2, size=loaded.k, dtype=np.uint8)
    assert not loaded.syndrome(encode(loaded, info)).any()


def test_wilson_interval():
    low, high = wilson_interval(0, 1000)
    assert low == 0.0 and high < 0.005
    low, high = wilson_interval(500, 1000)
    assert low < 0.5 < high
    assert wilson_interval(0, 0) == (0.0, 1.0)


def test_coded_ber_noiseless_is_zero():
    cst = build_constellation(4, 1.0)
    code = build_regular_ldpc(120, 3, 6, 12)
    res = coded_ber_run(
        ChannelEnsemble(m=2, r=2), cst, MmseDetector(), code,
        num_words=100, snr_db=120.0, rng=13,
    )
    assert res.ber == 0.0
    assert res.bit_errors == 0
    assert res.wilson_low == 0.0


def test_coded_ber_uniform_detector_is_half():
    cst = build_constellation(4, 1.0)
    code = build_regular_ldpc(120, 3, 6, 14)
    res = coded_ber_run(
        ChannelEnsemble(m=2, r=2), cst, UniformDetector(), code,
        num_words=100, snr_db=6.0, rng=15,
    )
    assert res.ber == pytest.approx(0.5, abs=0.03)
    assert res.wilson_low <= res.ber <= res.wilson_high


def test_coded_ber_fixed_channel_mode():
    cst = build_constellation(4, 1.0)
    code = build_regular_ldpc(120, 3, 6, 16)
    res = coded_ber_run(
        ChannelEnsemble(m=2, r=2, redraw_per_word=False), cst, MmseDetector(),
        code, num_words=10, snr_db=10.0, rng=17,
    )
    assert 0.0 <= res.ber <= 0.5 + 1e-9
