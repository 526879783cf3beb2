"""MIMO soft detectors: exact enumeration, MMSE, and the two EC variants.

Every detector consumes a real-valued channel instance carrying an
observation and returns per-antenna posterior tables over the complex
alphabet, per-real-dimension tables, Gray-mapped bit LLRs (convention:
LLR = log p(bit=0) / p(bit=1), clamped) and a hard decision.

The MMSE detector is by definition the EC single loop stopped at zero
iterations: a Gaussian posterior with the prior replaced by independent
zero-mean Gaussians of the per-dimension symbol energy, discretized onto
the alphabet.  The EC detectors run Algorithm-1 (damped single loop) or
Algorithm-2 (double loop with an inner convex solve) dynamics and emit the
discrete r-site pmf computed in their final iteration.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .channel import RealChannelInstance
from .constellation import Constellation
from .expfamily import DiscreteSite

DEFAULT_LLR_CLAMP = 40.0
DEFAULT_ENUMERATION_BUDGET = 2**20


class EnumerationBudgetError(ValueError):
    """Exact enumeration would exceed the configured candidate budget."""


@dataclass(frozen=True)
class EcConfig:
    """Knobs of the EC iterations.

    beta is the damping factor of the parameter updates; the variance floor
    follows the schedule max(2^-max(iter - floor_start_iter, 1), Var_r)
    while enabled (0.5 for the first five iterations, then halving).
    variance_eps is a hard numerical floor that keeps floorless runs
    finite.  The dl_* fields drive the double loop's inner gradient
    descent.  literal_step6 switches the single-loop update to the
    superscript-literal reading of the update equation (A/B testing only).
    """

    beta: float = 0.95
    max_iters: int = 10
    variance_floor: bool = True
    floor_start_iter: int = 4
    variance_eps: float = 1e-12
    dl_inner_steps: int = 2000
    dl_step_size: float = 1e-3
    dl_grad_tol: float = 0.1
    convergence_tol: float = 1e-6
    llr_clamp: float = DEFAULT_LLR_CLAMP
    record_trace: bool = False
    record_energy: bool = False
    literal_step6: bool = False

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.literal_step6 and self.beta >= 1.0:
            raise ValueError("the literal step-6 reading requires beta < 1")


@dataclass
class Diagnostics:
    iterations: int = 0
    delta_u: float | None = None
    delta_u2: float | None = None
    rejected_updates: int = 0
    converged: bool = False
    trace: np.ndarray | None = None          # (iters, 2): delta_u, delta_u2
    energy_trace: np.ndarray | None = None   # (iters, 3): logzec, |grad_q|, |grad_s|
    inner_steps: int | None = None
    inner_objective: np.ndarray | None = None


@dataclass
class SoftOutput:
    symbol_pmf: np.ndarray | None      # (m, M) rows over the complex alphabet
    real_pmf: np.ndarray               # (n, L) rows over the real alphabet
    bit_llrs: np.ndarray | None        # (m * log2 M,) antenna-major
    hard_decision: np.ndarray | None   # (m,) complex
    diagnostics: Diagnostics


@dataclass
class BatchDetection:
    """Array-valued detector output for a batch of observations."""

    symbol_pmf: np.ndarray             # (B, m, M)
    real_pmf: np.ndarray               # (B, n, L)
    bit_llrs: np.ndarray               # (B, m * log2 M)
    diagnostics: _kernels.EcBatchResult | None = None


def _bit_masks(cst: Constellation) -> tuple[np.ndarray, np.ndarray]:
    mask0 = (cst.index_to_bits.T == 0).astype(float)
    return mask0, 1.0 - mask0


def _llrs_from_symbol_pmf(symbol_pmf, cst, clamp):
    mask0, mask1 = _bit_masks(cst)
    p0 = np.einsum("...a,ka->...k", symbol_pmf, mask0)
    p1 = np.einsum("...a,ka->...k", symbol_pmf, mask1)
    with np.errstate(divide="ignore"):
        llr = np.log(p0) - np.log(p1)
    llr = np.clip(llr, -clamp, clamp)
    return llr.reshape(*symbol_pmf.shape[:-2], -1)


def _symbol_pmf_from_real(real_pmf: np.ndarray) -> np.ndarray:
    """Outer product of the paired real/imaginary rows, re-major indexing."""
    n = real_pmf.shape[-2]
    m = n // 2
    re = real_pmf[..., :m, :]
    im = real_pmf[..., m:, :]
    prod = re[..., :, :, None] * im[..., :, None, :]
    return prod.reshape(*real_pmf.shape[:-2], m, re.shape[-1] ** 2)


def _hard_decision(symbol_pmf: np.ndarray, cst: Constellation) -> np.ndarray:
    return cst.points[np.argmax(symbol_pmf, axis=-1)]


def _require_observation(ch: RealChannelInstance) -> np.ndarray:
    if ch.y is None:
        raise ValueError("channel instance carries no observation")
    return ch.y


def _diag_from_batch(res: _kernels.EcBatchResult) -> Diagnostics:
    trace = None
    if res.trace_u is not None:
        trace = np.stack([res.trace_u[:, 0], res.trace_u2[:, 0]], axis=1)
    energy = res.energy[:, 0, :] if res.energy is not None else None
    du = float(res.delta_u[0]) if np.isfinite(res.delta_u[0]) else None
    du2 = float(res.delta_u2[0]) if np.isfinite(res.delta_u2[0]) else None
    return Diagnostics(
        iterations=int(res.iterations[0]),
        delta_u=du,
        delta_u2=du2,
        rejected_updates=int(res.rejected[0]),
        converged=bool(res.converged[0]),
        trace=trace,
        energy_trace=energy,
        inner_steps=int(res.inner_steps[0]) if res.inner_steps is not None else None,
        inner_objective=res.inner_objective,
    )


def soft_output_from_site(
    site: DiscreteSite,
    cst: Constellation,
    diagnostics: Diagnostics | None = None,
    llr_clamp: float = DEFAULT_LLR_CLAMP,
) -> SoftOutput:
    """Assemble the full soft output from a normalized per-dimension site."""
    real_pmf = np.asarray(site.pmf, dtype=float)
    if real_pmf.shape[0] % 2:
        raise ValueError("site must cover an even number of real dimensions")
    symbol_pmf = _symbol_pmf_from_real(real_pmf)
    return SoftOutput(
        symbol_pmf=symbol_pmf,
        real_pmf=real_pmf,
        bit_llrs=_llrs_from_symbol_pmf(symbol_pmf, cst, llr_clamp),
        hard_decision=_hard_decision(symbol_pmf, cst),
        diagnostics=diagnostics or Diagnostics(),
    )


def exact_detector(
    ch: RealChannelInstance,
    cst: Constellation,
    enumeration_budget: int = DEFAULT_ENUMERATION_BUDGET,
) -> SoftOutput:
    """Exact posterior marginals by full enumeration of the symbol lattice.

    The per-antenna symbol table pairs the real and imaginary digits inside
    the joint sum, so its rows are the true complex-symbol marginals (they
    do not factorize).  Cost is |alphabet|^n = M^m; instances above the
    budget are refused.  Channels with an odd number of real dimensions
    (diagnostic toys) get only the real-dimension table.
    """
    y = _require_observation(ch)
    n = ch.n
    if float(cst.levels) ** n > enumeration_budget:
        raise EnumerationBudgetError(
            f"enumeration of {cst.levels}^{n} candidates exceeds the budget "
            f"of {enumeration_budget}"
        )
    if n % 2:
        real_pmf = _kernels.exact_real_pmf(ch.h, ch.sigma2, y, cst)
        return SoftOutput(
            symbol_pmf=None,
            real_pmf=real_pmf,
            bit_llrs=None,
            hard_decision=None,
            diagnostics=Diagnostics(),
        )
    digits, u_cands = _kernels.enumerate_real_candidates(cst, n)
    symbol_pmf, real_pmf = _kernels.exact_joint_pmf(
        ch.h, ch.sigma2, y[None], cst, digits, u_cands
    )
    symbol_pmf, real_pmf = symbol_pmf[0], real_pmf[0]
    return SoftOutput(
        symbol_pmf=symbol_pmf,
        real_pmf=real_pmf,
        bit_llrs=_llrs_from_symbol_pmf(symbol_pmf, cst, DEFAULT_LLR_CLAMP),
        hard_decision=_hard_decision(symbol_pmf, cst),
        diagnostics=Diagnostics(),
    )


def ec_single_loop(
    ch: RealChannelInstance, cst: Constellation, cfg: EcConfig
) -> SoftOutput:
    """Damped single-loop EC detection (Algorithm-1 dynamics)."""
    y = _require_observation(ch)
    problem = _kernels.build_problem(ch.h, ch.sigma2, y[None])
    res = _kernels.run_single_loop(problem, cst, cfg)
    site = DiscreteSite(pmf=res.site_pmf[0], log_z=0.0)
    return soft_output_from_site(
        site, cst, diagnostics=_diag_from_batch(res), llr_clamp=cfg.llr_clamp
    )


def ec_double_loop(
    ch: RealChannelInstance, cst: Constellation, cfg: EcConfig
) -> SoftOutput:
    """Double-loop EC detection: inner convex solve, damped s update."""
    y = _require_observation(ch)
    problem = _kernels.build_problem(ch.h, ch.sigma2, y[None])
    res = _kernels.run_double_loop(problem, cst, cfg)
    site = DiscreteSite(pmf=res.site_pmf[0], log_z=0.0)
    return soft_output_from_site(
        site, cst, diagnostics=_diag_from_batch(res), llr_clamp=cfg.llr_clamp
    )


def mmse_detector(
    ch: RealChannelInstance,
    cst: Constellation,
    llr_clamp: float = DEFAULT_LLR_CLAMP,
) -> SoftOutput:
    """Gaussian-prior (MMSE) detection: the EC initialization, discretized."""
    return ec_single_loop(ch, cst, EcConfig(max_iters=0, llr_clamp=llr_clamp))


def _batch_from_site(res, cst, clamp) -> BatchDetection:
    symbol_pmf = _symbol_pmf_from_real(res.site_pmf)
    return BatchDetection(
        symbol_pmf=symbol_pmf,
        real_pmf=res.site_pmf,
        bit_llrs=_llrs_from_symbol_pmf(symbol_pmf, cst, clamp),
        diagnostics=res,
    )


@dataclass(frozen=True)
class ExactDetector:
    enumeration_budget: int = DEFAULT_ENUMERATION_BUDGET
    name: str = "exact"

    def __call__(self, ch, cst):
        return exact_detector(ch, cst, self.enumeration_budget)

    def feasible(self, cst: Constellation, n: int) -> bool:
        return float(cst.levels) ** n <= self.enumeration_budget

    def detect_batch(self, h, sigma2, ys, cst) -> BatchDetection:
        n = h.shape[1]
        if not self.feasible(cst, n):
            raise EnumerationBudgetError(
                f"enumeration of {cst.levels}^{n} candidates exceeds the "
                f"budget of {self.enumeration_budget}"
            )
        digits, u_cands = _kernels.enumerate_real_candidates(cst, n)
        symbol_pmf, real_pmf = _kernels.exact_joint_pmf(
            h, sigma2, ys, cst, digits, u_cands
        )
        return BatchDetection(
            symbol_pmf=symbol_pmf,
            real_pmf=real_pmf,
            bit_llrs=_llrs_from_symbol_pmf(symbol_pmf, cst, DEFAULT_LLR_CLAMP),
        )


@dataclass(frozen=True)
class MmseDetector:
    llr_clamp: float = DEFAULT_LLR_CLAMP
    name: str = "mmse"

    def __call__(self, ch, cst):
        return mmse_detector(ch, cst, self.llr_clamp)

    def detect_batch(self, h, sigma2, ys, cst) -> BatchDetection:
        cfg = EcConfig(max_iters=0, llr_clamp=self.llr_clamp)
        problem = _kernels.build_problem(h, sigma2, ys)
        res = _kernels.run_single_loop(problem, cst, cfg)
        return _batch_from_site(res, cst, self.llr_clamp)


@dataclass(frozen=True)
class EcSingleLoopDetector:
    cfg: EcConfig = field(default_factory=EcConfig)
    name: str = "ec-sl"

    def __call__(self, ch, cst):
        return ec_single_loop(ch, cst, self.cfg)

    def detect_batch(self, h, sigma2, ys, cst) -> BatchDetection:
        problem = _kernels.build_problem(h, sigma2, ys)
        res = _kernels.run_single_loop(problem, cst, self.cfg)
        return _batch_from_site(res, cst, self.cfg.llr_clamp)


@dataclass(frozen=True)
class EcDoubleLoopDetector:
    cfg: EcConfig = field(default_factory=EcConfig)
    name: str = "ec-dl"

    def __call__(self, ch, cst):
        return ec_double_loop(ch, cst, self.cfg)

    def detect_batch(self, h, sigma2, ys, cst) -> BatchDetection:
        problem = _kernels.build_problem(h, sigma2, ys)
        res = _kernels.run_double_loop(problem, cst, self.cfg)
        return _batch_from_site(res, cst, self.cfg.llr_clamp)


@dataclass(frozen=True)
class UniformDetector:
    """Ignores the observation; useful as an independence baseline."""

    name: str = "uniform"

    def __call__(self, ch, cst):
        n = ch.n
        real_pmf = np.full((n, cst.levels), 1.0 / cst.levels)
        site = DiscreteSite(pmf=real_pmf, log_z=0.0)
        return soft_output_from_site(site, cst)

    def detect_batch(self, h, sigma2, ys, cst) -> BatchDetection:
        b, n = np.atleast_2d(ys).shape[0], h.shape[1]
        m = n // 2
        real_pmf = np.full((b, n, cst.levels), 1.0 / cst.levels)
        return BatchDetection(
            symbol_pmf=np.full((b, m, cst.order), 1.0 / cst.order),
            real_pmf=real_pmf,
            bit_llrs=np.zeros((b, m * cst.bits_per_symbol)),
        )
