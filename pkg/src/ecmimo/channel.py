"""Flat-fading MIMO channel model, SNR bookkeeping and the real-valued form.

The complex model y = H u + w (H of i.i.d. unit-variance complex Gaussian
entries, w circularly symmetric with per-component variance sigma_w2) is
rewritten over stacked real/imaginary parts; the stacked channel matrix has
the block structure [[Re H, -Im H], [Im H, Re H]] and per-component noise
variance sigma_w2 / 2.
"""

from dataclasses import dataclass, replace

import numpy as np

from .constellation import Constellation


class InvalidSymbolError(ValueError):
    """Raised when a transmit vector leaves the constellation alphabet."""


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator, a SeedSequence or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class ComplexChannelInstance:
    h: np.ndarray          # (r, m) complex
    sigma_w2: float        # complex-noise variance per receive antenna
    m: int
    r: int

    def __post_init__(self):
        if self.h.shape != (self.r, self.m):
            raise ValueError(f"channel shape {self.h.shape} != ({self.r}, {self.m})")
        if self.sigma_w2 <= 0:
            raise ValueError("sigma_w2 must be positive")


@dataclass(frozen=True)
class RealChannelInstance:
    """Real linear-Gaussian observation model y = H u + w.

    Instances produced by ``to_real_model`` carry the 2r x 2m complex
    block structure; direct construction is open (e.g. one-dimensional
    toys, row-transformed systems), but detectors that pair real and
    imaginary dimensions require an even number of columns.
    """

    h: np.ndarray
    sigma2: float          # per-real-dimension noise variance
    y: np.ndarray | None = None

    def __post_init__(self):
        if self.h.ndim != 2:
            raise ValueError("channel matrix must be two-dimensional")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if self.y is not None and self.y.shape != (self.h.shape[0],):
            raise ValueError("observation length must match the row count")

    @property
    def n(self) -> int:
        """Number of real symbol dimensions (2m)."""
        return self.h.shape[1]

    def with_observation(self, y: np.ndarray) -> "RealChannelInstance":
        return replace(self, y=np.asarray(y, dtype=float))


def snr_to_sigma_w2(snr_db: float, m: int, M: int, es: float) -> float:
    """Complex noise variance realizing the given SNR in dB.

    The SNR definition is 10 log10(m log2(M) Eb / sigma_w2) with
    Eb = es / log2(M), i.e. sigma_w2 = m * es * 10^(-snr_db / 10).
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if es <= 0:
        raise ValueError("es must be positive")
    return m * es * 10.0 ** (-snr_db / 10.0)


def coded_snr_correction(snr_db: float, rate: float) -> float:
    """Rate-corrected SNR for coded transmission: snr_db + 10 log10(rate)."""
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"code rate must lie in (0, 1], got {rate}")
    return snr_db + 10.0 * np.log10(rate)


def sample_channel(m: int, r: int, sigma_w2: float, rng) -> ComplexChannelInstance:
    """Draw H with i.i.d. zero-mean unit-variance complex Gaussian entries."""
    gen = as_generator(rng)
    h = gen.normal(scale=np.sqrt(0.5), size=(r, m)) + 1j * gen.normal(
        scale=np.sqrt(0.5), size=(r, m)
    )
    return ComplexChannelInstance(h=h, sigma_w2=float(sigma_w2), m=m, r=r)


def real_block_matrix(h: np.ndarray) -> np.ndarray:
    """Stack a complex matrix into its real 2r x 2m block form."""
    return np.block([[h.real, -h.imag], [h.imag, h.real]])


def to_real_model(ch: ComplexChannelInstance) -> RealChannelInstance:
    return RealChannelInstance(h=real_block_matrix(ch.h), sigma2=ch.sigma_w2 / 2.0)


def stack_complex(u: np.ndarray) -> np.ndarray:
    """[Re(u); Im(u)] stacking of a complex vector."""
    u = np.asarray(u)
    return np.concatenate([u.real, u.imag])


def unstack_real(u_real: np.ndarray) -> np.ndarray:
    """Inverse of stack_complex."""
    m = u_real.shape[-1] // 2
    return u_real[..., :m] + 1j * u_real[..., m:]


def transmit(
    ch: RealChannelInstance,
    u_real: np.ndarray,
    rng,
    cst: Constellation | None = None,
) -> np.ndarray:
    """Draw an observation y = H u + w with i.i.d. N(0, sigma2) noise.

    When a constellation is supplied, every entry of ``u_real`` must be a
    member of its real alphabet.
    """
    u_real = np.asarray(u_real, dtype=float)
    if u_real.shape != (ch.n,):
        raise InvalidSymbolError(f"symbol vector length {u_real.shape} != ({ch.n},)")
    if cst is not None:
        dist = np.min(np.abs(u_real[:, None] - cst.real_alphabet), axis=1)
        if np.any(dist > 1e-9):
            raise InvalidSymbolError("transmit vector contains off-alphabet entries")
    gen = as_generator(rng)
    noise = gen.normal(scale=np.sqrt(ch.sigma2), size=ch.h.shape[0])
    return ch.h @ u_real + noise
