"""Exponential-family machinery for expectation-consistent MIMO inference.

Every distribution here is tilted by exp(gamma^T u - u^T diag(lam) u / 2),
i.e. the sufficient statistics are phi(u) = (u_1..u_n, -u_1^2/2..-u_n^2/2)
and the natural parameters are (gamma, lam).  Three families appear:

* q(u): the Gaussian channel likelihood times the tilt.  Its precision is
  S = H^T H / sigma2 + diag(lam_q) and its potential g = H^T y / sigma2 +
  gamma_q, so q = N(mu, Sigma) with Sigma = S^-1 and mu = Sigma g.
* r(u): the alphabet-indicator prior times the tilt, an independent
  discrete pmf over the per-dimension real alphabet.
* s(u): the pure tilt, an independent Gaussian with variance 1/lam and
  mean gamma/lam per component.

log-partition gradients obey d log Z / d gamma_i = E[u_i] and
d log Z / d lam_i = -E[u_i^2] / 2 for all three families.  The EC energy is

    log Z_EC(lq, ls) = log Z_q(lq) + log Z_r(ls - lq) - log Z_s(ls)

whose stationary points enforce equal first and second moments of q, r, s.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .channel import RealChannelInstance
from .constellation import Constellation


class IndefinitePrecisionError(np.linalg.LinAlgError):
    """The q precision matrix S lost positive definiteness."""

    def __init__(self, min_eigenvalue: float):
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(
            f"precision matrix not positive definite (min eigenvalue "
            f"{self.min_eigenvalue:.3e})"
        )


class DegenerateMomentError(ValueError):
    """A moment set or parameter vector implies a nonpositive variance."""


@dataclass(frozen=True)
class NaturalParams:
    gamma: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=float))
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float))
        if self.gamma.shape != self.lam.shape:
            raise ValueError("gamma and lam must have equal shapes")
        if not (np.all(np.isfinite(self.gamma)) and np.all(np.isfinite(self.lam))):
            raise ValueError("natural parameters must be finite")

    def __add__(self, other: "NaturalParams") -> "NaturalParams":
        return NaturalParams(self.gamma + other.gamma, self.lam + other.lam)

    def __sub__(self, other: "NaturalParams") -> "NaturalParams":
        return NaturalParams(self.gamma - other.gamma, self.lam - other.lam)

    def as_vector(self) -> np.ndarray:
        """Concatenated (gamma, lam) vector, the lambda ordering of phi(u)."""
        return np.concatenate([self.gamma, self.lam])

    @staticmethod
    def from_vector(v: np.ndarray) -> "NaturalParams":
        n = v.size // 2
        return NaturalParams(v[:n], v[n:])


@dataclass(frozen=True)
class MomentSet:
    mean: np.ndarray
    second: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "second", np.asarray(self.second, dtype=float))
        if np.any(self.second < self.mean**2 - 1e-12):
            raise DegenerateMomentError("second moments imply negative variance")

    @property
    def variance(self) -> np.ndarray:
        return self.second - self.mean**2

    def phi_vector(self) -> np.ndarray:
        """E[phi(u)] in the (gamma, lam) coordinate order."""
        return np.concatenate([self.mean, -0.5 * self.second])


@dataclass(frozen=True)
class GaussianPosterior:
    mu: np.ndarray
    sigma: np.ndarray
    log_z: float


@dataclass(frozen=True)
class DiscreteSite:
    pmf: np.ndarray        # (n, L) rows over the real alphabet
    log_z: float


def q_moments(
    ch: RealChannelInstance,
    params: NaturalParams,
    include_constants: bool = False,
) -> tuple[GaussianPosterior, MomentSet]:
    """Moments and log partition of the Gaussian-likelihood tilted family.

    ``include_constants`` adds the lambda-independent Gaussian normalizer
    terms (the likelihood prefactor and the 2*pi integration constant) to
    log Z; all gradients and EC energy differences are unaffected by it.
    Raises IndefinitePrecisionError when S is not positive definite.
    """
    if ch.y is None:
        raise ValueError("channel instance carries no observation")
    h, sigma2, y = ch.h, ch.sigma2, ch.y
    n = ch.n
    s_mat = h.T @ h / sigma2 + np.diag(params.lam)
    g = h.T @ y / sigma2 + params.gamma
    try:
        factor = cho_factor(s_mat, lower=True)
    except np.linalg.LinAlgError:
        raise IndefinitePrecisionError(np.linalg.eigvalsh(s_mat).min()) from None
    sigma = cho_solve(factor, np.eye(n))
    sigma = 0.5 * (sigma + sigma.T)
    mu = sigma @ g
    log_det_sigma = -2.0 * np.sum(np.log(np.diag(factor[0])))
    log_z = 0.5 * float(g @ mu) + 0.5 * log_det_sigma
    if include_constants:
        log_z += 0.5 * n * np.log(2.0 * np.pi)
        log_z += -0.5 * h.shape[0] * np.log(2.0 * np.pi * sigma2) - float(y @ y) / (
            2.0 * sigma2
        )
    post = GaussianPosterior(mu=mu, sigma=sigma, log_z=log_z)
    return post, MomentSet(mean=mu, second=np.diag(sigma) + mu**2)


def r_moments(
    cst: Constellation, params: NaturalParams
) -> tuple[DiscreteSite, MomentSet]:
    """Moments and log partition of the tilted per-dimension discrete prior.

    Row i of the pmf is proportional to exp(gamma_i a - lam_i a^2 / 2) over
    the real alphabet; all arithmetic is done in the log domain with
    per-row max subtraction, so arbitrarily large tilts stay finite.
    """
    a = cst.real_alphabet
    logw = np.outer(params.gamma, a) - 0.5 * np.outer(params.lam, a * a)
    mx = logw.max(axis=1, keepdims=True)
    w = np.exp(logw - mx)
    z = w.sum(axis=1, keepdims=True)
    pmf = w / z
    log_z = float(np.sum(mx[:, 0] + np.log(z[:, 0])))
    mean = pmf @ a
    second = pmf @ (a * a)
    return DiscreteSite(pmf=pmf, log_z=log_z), MomentSet(mean=mean, second=second)


def s_params_from_moments(mom: MomentSet) -> NaturalParams:
    """Natural parameters of the factorized Gaussian with the given moments."""
    var = mom.variance
    if np.any(var <= 0.0):
        raise DegenerateMomentError(
            f"nonpositive variance (min {var.min():.3e}); apply a variance floor first"
        )
    lam = 1.0 / var
    return NaturalParams(gamma=mom.mean * lam, lam=lam)


def s_moments(params: NaturalParams) -> MomentSet:
    """First and second moments of the factorized Gaussian s."""
    if np.any(params.lam <= 0.0):
        raise DegenerateMomentError("s requires strictly positive lam")
    var = 1.0 / params.lam
    mean = params.gamma * var
    return MomentSet(mean=mean, second=var + mean**2)


def log_zs(params: NaturalParams) -> float:
    """log partition of s: sum_i gamma_i^2/(2 lam_i) + log(2 pi / lam_i)/2."""
    if np.any(params.lam <= 0.0):
        raise DegenerateMomentError("s requires strictly positive lam")
    return float(
        np.sum(params.gamma**2 / (2.0 * params.lam))
        + 0.5 * np.sum(np.log(2.0 * np.pi / params.lam))
    )


def ec_free_energy(
    ch: RealChannelInstance,
    cst: Constellation,
    params_q: NaturalParams,
    params_s: NaturalParams,
    include_constants: bool = False,
) -> float:
    """EC energy log Z_q(lq) + log Z_r(ls - lq) - log Z_s(ls)."""
    post, _ = q_moments(ch, params_q, include_constants=include_constants)
    site, _ = r_moments(cst, params_s - params_q)
    return post.log_z + site.log_z - log_zs(params_s)


def ec_gradients(
    ch: RealChannelInstance,
    cst: Constellation,
    params_q: NaturalParams,
    params_s: NaturalParams,
) -> tuple[NaturalParams, NaturalParams]:
    """Gradient blocks of the EC energy in natural-parameter coordinates.

    Returns (d/d lambda_q, d/d lambda_s) packed as NaturalParams-shaped
    pairs; the first block is E_q[phi] - E_r[phi], the second
    E_r[phi] - E_s[phi], both zero exactly at moment matching.
    """
    _, qm = q_moments(ch, params_q)
    _, rm = r_moments(cst, params_s - params_q)
    sm = s_moments(params_s)
    grad_q = NaturalParams(
        gamma=qm.mean - rm.mean, lam=-0.5 * (qm.second - rm.second)
    )
    grad_s = NaturalParams(
        gamma=rm.mean - sm.mean, lam=-0.5 * (rm.second - sm.second)
    )
    return grad_q, grad_s
