"""Square-QAM constellations with per-axis Gray labeling.

Complex points are indexed re-major: point ``s`` pairs real level
``s // L`` with imaginary level ``s % L`` where ``L = sqrt(M)``.  A bit
label has ``log2(M)`` bits, the first half Gray-coding the real level and
the second half the imaginary level.
"""

from dataclasses import dataclass, field

import numpy as np


class ModulationError(ValueError):
    """Raised for unsupported modulation orders."""


def gray_code(nbits: int) -> np.ndarray:
    """Reflected binary Gray sequence: position i carries label i ^ (i >> 1)."""
    i = np.arange(1 << nbits, dtype=np.int64)
    return i ^ (i >> 1)


@dataclass(frozen=True)
class Constellation:
    order: int
    points: np.ndarray            # (M,) complex, unit-free scaled
    real_alphabet: np.ndarray     # (L,) ascending, symmetric about 0
    symbol_energy: float          # Es, mean |point|^2
    real_energy: float            # Es / 2, mean energy per real dimension
    bits_per_symbol: int
    index_to_bits: np.ndarray     # (M, k) uint8
    bits_to_index: np.ndarray     # (2**k,) int64, bit label -> point index
    real_bits_per_axis: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "real_bits_per_axis", self.bits_per_symbol // 2)

    @property
    def levels(self) -> int:
        return self.real_alphabet.size

    def map_bits(self, bits: np.ndarray) -> np.ndarray:
        """Map a flat bit array (length multiple of k) to complex symbols."""
        bits = np.asarray(bits, dtype=np.int64).reshape(-1, self.bits_per_symbol)
        powers = 1 << np.arange(self.bits_per_symbol - 1, -1, -1, dtype=np.int64)
        labels = bits @ powers
        return self.points[self.bits_to_index[labels]]

    def bits_of_indices(self, indices: np.ndarray) -> np.ndarray:
        """Bit labels of the given point indices, flattened antenna-major."""
        return self.index_to_bits[np.asarray(indices)].reshape(-1)

    def real_indices(self, values: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        """Indices into real_alphabet of (exact) alphabet members."""
        idx = np.argmin(np.abs(np.asarray(values)[..., None] - self.real_alphabet), axis=-1)
        if not np.allclose(self.real_alphabet[idx], values, atol=tol, rtol=0.0):
            raise ValueError("values are not members of the real alphabet")
        return idx


def build_constellation(M: int, es: float = 1.0) -> Constellation:
    """Build a Gray-mapped square M-QAM constellation with mean energy ``es``.

    M must be an even power of two (4, 16, 64, 256, ...); the per-axis
    levels are equispaced, symmetric and shared between both axes.
    """
    if M < 4:
        raise ModulationError(f"modulation order {M} too small for square QAM")
    k = int(round(np.log2(M)))
    if (1 << k) != M or k % 2 != 0:
        raise ModulationError(f"modulation order {M} is not a square power of two")
    if es <= 0:
        raise ModulationError(f"symbol energy must be positive, got {es}")

    L = 1 << (k // 2)
    raw = np.arange(L, dtype=float) * 2.0 - (L - 1)     # -(L-1), ..., +(L-1)
    # mean of raw^2 over the uniform per-axis law is (L^2-1)/3; two axes carry es
    scale = np.sqrt(3.0 * es / (2.0 * (L * L - 1)))
    alphabet = raw * scale

    re_idx, im_idx = np.divmod(np.arange(M), L)
    points = alphabet[re_idx] + 1j * alphabet[im_idx]

    axis_gray = gray_code(k // 2)
    labels = (axis_gray[re_idx] << (k // 2)) | axis_gray[im_idx]
    bits_to_index = np.empty(M, dtype=np.int64)
    bits_to_index[labels] = np.arange(M)
    shift = np.arange(k - 1, -1, -1, dtype=np.int64)
    index_to_bits = ((labels[:, None] >> shift) & 1).astype(np.uint8)

    return Constellation(
        order=M,
        points=points,
        real_alphabet=alphabet,
        symbol_energy=float(es),
        real_energy=float(es) / 2.0,
        bits_per_symbol=k,
        index_to_bits=index_to_bits,
        bits_to_index=bits_to_index,
    )
