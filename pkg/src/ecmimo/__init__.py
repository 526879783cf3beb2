"""Probabilistic MIMO symbol detection via expectation-consistent inference.

The package provides square-QAM constellations with Gray labeling, complex
and real-valued flat-fading channel models, exact / MMSE / EC detectors
producing per-antenna posteriors and bit LLRs, Monte Carlo mutual-information
estimation, a (j,k)-regular LDPC coding chain, and a CLI experiment runner.
"""

__version__ = "0.1.0"

from .constellation import Constellation, ModulationError, build_constellation
from .channel import (
    ComplexChannelInstance,
    InvalidSymbolError,
    RealChannelInstance,
    coded_snr_correction,
    sample_channel,
    snr_to_sigma_w2,
    to_real_model,
    transmit,
)
from .expfamily import (
    DegenerateMomentError,
    DiscreteSite,
    GaussianPosterior,
    IndefinitePrecisionError,
    MomentSet,
    NaturalParams,
    ec_free_energy,
    ec_gradients,
    log_zs,
    q_moments,
    r_moments,
    s_moments,
    s_params_from_moments,
)
from .detectors import (
    EcConfig,
    EcDoubleLoopDetector,
    EcSingleLoopDetector,
    EnumerationBudgetError,
    ExactDetector,
    MmseDetector,
    SoftOutput,
    UniformDetector,
    ec_double_loop,
    ec_single_loop,
    exact_detector,
    mmse_detector,
    soft_output_from_site,
)
from .metrics import (
    MiEstimate,
    capacity_per_antenna,
    count_errors,
    delta_metrics,
    estimate_mi,
)
from .ldpc import (
    DecodeResult,
    LdpcCode,
    build_regular_ldpc,
    coded_ber_run,
    decode_bp,
    encode,
    load_code_text,
    save_code_text,
)
