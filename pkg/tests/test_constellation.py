import numpy as np
import pytest

from ecmimo import ModulationError, build_constellation
from ecmimo.constellation import gray_code


def test_qpsk_unit_energy_alphabet():
    cst = build_constellation(4, 1.0)
    assert np.allclose(np.sort(cst.real_alphabet), [-1 / np.sqrt(2), 1 / np.sqrt(2)])
    assert cst.real_energy == pytest.approx(0.5)


def test_16qam_alphabet_from_energy_equation():
    # independent derivation: solve E[a^2] = 1/2 over the equispaced set
    # {-3c, -c, c, 3c}: mean square = 5 c^2, so c = 1/sqrt(10)
    c = np.sqrt(0.5 / np.mean(np.array([-3.0, -1.0, 1.0, 3.0]) ** 2))
    cst = build_constellation(16, 1.0)
    assert np.allclose(cst.real_alphabet, np.array([-3, -1, 1, 3]) * c, atol=1e-15)
    assert np.allclose(cst.real_alphabet, np.array([-3, -1, 1, 3]) / np.sqrt(10))


def test_scaling_to_requested_energy():
    cst = build_constellation(4, 2.0)
    assert np.mean(np.abs(cst.points) ** 2) == pytest.approx(2.0)
    assert np.allclose(np.sort(cst.real_alphabet), [-1.0, 1.0])


@pytest.mark.parametrize("bad", [2, 3, 8, 12, 32, 128, 0, -4])
def test_invalid_orders_rejected(bad):
    with pytest.raises(ModulationError):
        build_constellation(bad, 1.0)


def test_nonpositive_energy_rejected():
    with pytest.raises(ModulationError):
        build_constellation(4, 0.0)


@pytest.mark.parametrize("M", [4, 16, 64, 256])
def test_type_invariants(M):
    cst = build_constellation(M, 1.0)
    assert cst.points.size == M
    assert cst.real_alphabet.size == int(np.sqrt(M))
    assert abs(np.mean(cst.points)) < 1e-12
    # uniform prior energy: sum p |point|^2 == Es
    assert np.mean(np.abs(cst.points) ** 2) == pytest.approx(1.0, abs=1e-12)
    gaps = np.diff(np.sort(cst.real_alphabet))
    assert np.allclose(gaps, gaps[0])
    assert np.allclose(np.sort(cst.real_alphabet), -np.sort(cst.real_alphabet)[::-1])


@pytest.mark.parametrize("M", [4, 16, 64, 256])
def test_gray_map_bijection_and_adjacency(M):
    cst = build_constellation(M, 1.0)
    labels = cst.index_to_bits @ (1 << np.arange(cst.bits_per_symbol - 1, -1, -1))
    assert sorted(labels.tolist()) == list(range(M))
    assert np.array_equal(cst.bits_to_index[labels], np.arange(M))
    # exhaustive adjacency scan along both axes: exactly one differing bit
    levels = cst.levels
    for re in range(levels):
        for im in range(levels):
            s = re * levels + im
            if re + 1 < levels:
                assert np.sum(cst.index_to_bits[s] != cst.index_to_bits[s + levels]) == 1
            if im + 1 < levels:
                assert np.sum(cst.index_to_bits[s] != cst.index_to_bits[s + 1]) == 1


def test_points_pair_real_levels_re_major():
    cst = build_constellation(16, 1.0)
    levels = cst.levels
    for s in range(16):
        assert cst.points[s].real == pytest.approx(cst.real_alphabet[s // levels])
        assert cst.points[s].imag == pytest.approx(cst.real_alphabet[s % levels])


def test_map_bits_roundtrip():
    rng = np.random.default_rng(3)
    cst = build_constellation(64, 1.0)
    bits = rng.integers(0, 2, size=10 * cst.bits_per_symbol)
    symbols = cst.map_bits(bits)
    idx = np.argmin(np.abs(symbols[:, None] - cst.points[None, :]), axis=1)
    assert np.array_equal(cst.bits_of_indices(idx), bits)


def test_gray_code_sequence():
    assert gray_code(2).tolist() == [0, 1, 3, 2]
    g = gray_code(4)
    diff = g[1:] ^ g[:-1]
    assert all(int(d).bit_count() == 1 for d in diff)
