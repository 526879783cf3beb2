"""Monte Carlo mutual-information estimation and convergence diagnostics.

The mutual information between a transmitted symbol and a detector output
is estimated from ancestral samples of (u, y, u_hat): draw u uniform over
the constellation, draw y from the channel, then draw u_hat from the
detector's per-antenna posterior table.  A plug-in histogram estimator on
the per-antenna joint counts gives I(u_i, u_hat_i) in bits.
"""

from dataclasses import dataclass

import numpy as np

from .channel import ComplexChannelInstance, as_generator, to_real_model
from .constellation import Constellation
from .expfamily import MomentSet

_MI_CHUNK = 4096


@dataclass
class MiEstimate:
    per_antenna_mi: np.ndarray      # (m,) bits per channel use
    average_mi: float
    sample_count: int
    joint_histograms: np.ndarray    # (m, M, M) counts, rows = transmitted

    def __post_init__(self):
        self.average_mi = float(self.average_mi)


@dataclass
class DeltaTrace:
    delta_u: np.ndarray
    delta_u2: np.ndarray
    averaged_over: int


def capacity_per_antenna(ch: ComplexChannelInstance, snr_linear: float) -> float:
    """log2 det(I + (SNR/m) H H^H) / m, bits per channel use and antenna."""
    gram = np.eye(ch.r) + (snr_linear / ch.m) * (ch.h @ ch.h.conj().T)
    sign, logdet = np.linalg.slogdet(gram)
    if sign.real <= 0:
        raise np.linalg.LinAlgError("capacity Gram matrix not positive definite")
    return float(logdet / np.log(2.0)) / ch.m


def mi_from_counts(counts: np.ndarray) -> np.ndarray:
    """Plug-in mutual information (bits) from (m, M, M) joint count tables."""
    counts = np.asarray(counts, dtype=float)
    totals = counts.sum(axis=(1, 2), keepdims=True)
    pxy = counts / totals
    px = pxy.sum(axis=2, keepdims=True)
    py = pxy.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = pxy * (np.log2(pxy) - np.log2(px) - np.log2(py))
    return np.nansum(terms, axis=(1, 2))


def sample_from_rows(pmf: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one index per row of a (..., M) probability table."""
    cdf = np.cumsum(pmf, axis=-1)
    u = rng.random(pmf.shape[:-1] + (1,))
    idx = np.sum(cdf < u, axis=-1)
    return np.minimum(idx, pmf.shape[-1] - 1)


def estimate_mi(
    ch: ComplexChannelInstance,
    cst: Constellation,
    detector,
    n_samples: int,
    rng,
) -> MiEstimate:
    """Ancestral-sampling MI estimate for one channel realization.

    The detector must expose ``detect_batch(h, sigma2, ys, cst)``; trials
    are processed in chunks through it.  For factorized detectors the
    sampled u_hat combines independently drawn real and imaginary
    components (their tables are outer products); the exact detector's
    tables are true joint marginals, so its samples follow the true
    posterior.
    """
    gen = as_generator(rng)
    real = to_real_model(ch)
    m, M = ch.m, cst.order
    levels = cst.levels
    counts = np.zeros((m, M, M), dtype=np.int64)

    done = 0
    while done < n_samples:
        b = min(_MI_CHUNK, n_samples - done)
        sym_idx = gen.integers(M, size=(b, m))
        u_cplx = cst.points[sym_idx]
        u_real = np.concatenate([u_cplx.real, u_cplx.imag], axis=1)
        noise = gen.normal(scale=np.sqrt(real.sigma2), size=(b, real.h.shape[0]))
        ys = u_real @ real.h.T + noise
        det = detector.detect_batch(real.h, real.sigma2, ys, cst)
        hat_idx = sample_from_rows(det.symbol_pmf, gen)
        code = (sym_idx * M + hat_idx).astype(np.int64)
        for i in range(m):
            counts[i] += np.bincount(code[:, i], minlength=M * M).reshape(M, M)
        done += b

    per_antenna = mi_from_counts(counts)
    return MiEstimate(
        per_antenna_mi=per_antenna,
        average_mi=float(per_antenna.mean()),
        sample_count=n_samples,
        joint_histograms=counts,
    )


def delta_metrics(q_mom: MomentSet, r_mom: MomentSet) -> tuple[float, float]:
    """Mean absolute first/second-moment mismatch between two moment sets."""
    if q_mom.mean.shape != r_mom.mean.shape:
        raise ValueError("moment sets have mismatched lengths")
    du = float(np.mean(np.abs(q_mom.mean - r_mom.mean)))
    du2 = float(np.mean(np.abs(q_mom.second - r_mom.second)))
    return du, du2


def count_errors(
    true_symbols: np.ndarray,
    detected_symbols: np.ndarray,
    true_bits: np.ndarray,
    detected_bits: np.ndarray,
) -> tuple[float, float]:
    """Fractions of mismatched symbols and bits."""
    true_symbols = np.asarray(true_symbols)
    detected_symbols = np.asarray(detected_symbols)
    true_bits = np.asarray(true_bits)
    detected_bits = np.asarray(detected_bits)
    if true_symbols.shape != detected_symbols.shape:
        raise ValueError("symbol vectors have mismatched lengths")
    if true_bits.shape != detected_bits.shape:
        raise ValueError("bit vectors have mismatched lengths")
    ser = float(np.mean(true_symbols != detected_symbols))
    ber = float(np.mean(true_bits != detected_bits))
    return ser, ber
