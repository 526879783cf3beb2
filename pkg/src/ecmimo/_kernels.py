"""Batched numerical kernels behind the detectors.

Everything here operates on a batch of real-valued channel problems that
share a constellation: parameter arrays are (B, n), the Gram matrix is
(B, n, n) or (1, n, n) broadcast.  The public per-instance detector API
wraps these kernels with B = 1; the Monte Carlo harnesses call them with
thousands of elements per batch, which is what makes desk-scale runs
feasible on one core.
"""

from dataclasses import dataclass, field

import numpy as np

from .constellation import Constellation

_VAR_EPS_DEFAULT = 1e-12


@dataclass(frozen=True)
class BatchProblem:
    """Precomputed quadratic data of a batch of observations.

    gram = H^T H / sigma2 (shared across the batch when shape (1, n, n)),
    hty = H^T y / sigma2 per element.
    """

    gram: np.ndarray
    hty: np.ndarray
    n: int = field(init=False)
    size: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "n", self.hty.shape[1])
        object.__setattr__(self, "size", self.hty.shape[0])


def build_problem(h: np.ndarray, sigma2: float, ys: np.ndarray) -> BatchProblem:
    """Batch of observations ``ys`` (B, 2r) sharing one channel matrix."""
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    gram = (h.T @ h / sigma2)[None]
    return BatchProblem(gram=gram, hty=ys @ h / sigma2)


def build_problem_multi(hs: np.ndarray, sigma2: float, ys: np.ndarray) -> BatchProblem:
    """Batch with a distinct channel matrix per element: hs (B, 2r, n)."""
    gram = np.einsum("bri,brj->bij", hs, hs) / sigma2
    hty = np.einsum("bri,br->bi", hs, ys) / sigma2
    return BatchProblem(gram=gram, hty=hty)


def _cholesky_mask(s_mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched Cholesky with per-element failure localization."""
    try:
        return np.linalg.cholesky(s_mat), np.ones(s_mat.shape[0], dtype=bool)
    except np.linalg.LinAlgError:
        chol = np.zeros_like(s_mat)
        ok = np.zeros(s_mat.shape[0], dtype=bool)
        for b in range(s_mat.shape[0]):
            try:
                chol[b] = np.linalg.cholesky(s_mat[b])
                ok[b] = True
            except np.linalg.LinAlgError:
                pass
        return chol, ok


@dataclass
class QBatch:
    ok: np.ndarray        # (B,) bool, positive definite precision
    mean: np.ndarray      # (B, n), NaN where not ok
    var: np.ndarray       # (B, n) marginal variances Sigma_ii
    second: np.ndarray    # (B, n)
    log_z: np.ndarray     # (B,) lambda-dependent part of log Z_q


def q_stats(problem: BatchProblem, gamma: np.ndarray, lam: np.ndarray) -> QBatch:
    b, n = gamma.shape
    s_mat = np.broadcast_to(problem.gram, (b, n, n)).copy()
    idx = np.arange(n)
    s_mat[:, idx, idx] += lam
    chol, ok = _cholesky_mask(s_mat)

    mean = np.full((b, n), np.nan)
    var = np.full((b, n), np.nan)
    second = np.full((b, n), np.nan)
    log_z = np.full(b, np.nan)
    if np.any(ok):
        sigma = np.linalg.inv(s_mat[ok])
        g = problem.hty[ok] + gamma[ok]
        mu = np.einsum("bij,bj->bi", sigma, g)
        v = np.diagonal(sigma, axis1=1, axis2=2)
        mean[ok] = mu
        var[ok] = v
        second[ok] = v + mu**2
        dlog = np.sum(np.log(np.diagonal(chol[ok], axis1=1, axis2=2)), axis=1)
        log_z[ok] = 0.5 * np.einsum("bi,bi->b", g, mu) - dlog
    return QBatch(ok=ok, mean=mean, var=var, second=second, log_z=log_z)


@dataclass
class RBatch:
    pmf: np.ndarray       # (B, n, L)
    mean: np.ndarray
    second: np.ndarray
    log_z: np.ndarray     # (B,)


def r_stats(alphabet: np.ndarray, gamma: np.ndarray, lam: np.ndarray) -> RBatch:
    a = alphabet
    logw = gamma[..., None] * a - 0.5 * lam[..., None] * (a * a)
    mx = logw.max(axis=-1, keepdims=True)
    w = np.exp(logw - mx)
    z = w.sum(axis=-1, keepdims=True)
    pmf = w / z
    log_z = np.sum(mx[..., 0] + np.log(z[..., 0]), axis=-1)
    return RBatch(pmf=pmf, mean=pmf @ a, second=pmf @ (a * a), log_z=log_z)


def gaussian_site_pmf(alphabet: np.ndarray, mean: np.ndarray, var: np.ndarray) -> np.ndarray:
    """Per-dimension discretization of independent Gaussians onto the alphabet."""
    logw = -((alphabet - mean[..., None]) ** 2) / (2.0 * var[..., None])
    logw -= logw.max(axis=-1, keepdims=True)
    w = np.exp(logw)
    return w / w.sum(axis=-1, keepdims=True)


def log_zs_batch(gamma: np.ndarray, lam: np.ndarray) -> np.ndarray:
    return np.sum(
        gamma**2 / (2.0 * lam) + 0.5 * np.log(2.0 * np.pi / lam), axis=-1
    )


def _grad_norm(dmean: np.ndarray, dsecond: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(dmean**2, axis=-1) + np.sum(0.25 * dsecond**2, axis=-1))


def floor_value(iteration: int, start: int) -> float:
    """Iteration-dependent variance floor: 0.5 plateau, then halving."""
    return 2.0 ** (-max(iteration - start, 1))


@dataclass
class EcBatchResult:
    site_pmf: np.ndarray          # (B, n, L)
    iterations: np.ndarray        # (B,) completed iterations
    delta_u: np.ndarray           # (B,) final per-iteration moment mismatch
    delta_u2: np.ndarray
    rejected: np.ndarray          # (B,) reverted update components
    converged: np.ndarray         # (B,) bool
    trace_u: np.ndarray | None = None       # (iters, B)
    trace_u2: np.ndarray | None = None
    energy: np.ndarray | None = None        # (iters, B, 3): logzec, |grad_q|, |grad_s|
    inner_steps: np.ndarray | None = None   # (B,) DL: accepted descent steps
    inner_objective: np.ndarray | None = None  # DL, B == 1: first-outer objective trace


def _guarded_q_update(
    problem: BatchProblem,
    gamma_prev: np.ndarray,
    lam_prev: np.ndarray,
    gamma_cand: np.ndarray,
    lam_cand: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Accept the candidate q parameters component-wise, keeping S positive
    definite.  Components whose candidate lam is negative are reverted on
    elements where the full candidate fails; if that is still not enough the
    whole element keeps its previous parameters.  Returns the accepted
    (gamma, lam) and the per-element count of reverted components."""
    b, n = gamma_cand.shape
    rejected = np.zeros(b, dtype=np.int64)
    suspect = np.flatnonzero((lam_cand < 1e-12).any(axis=1))
    if suspect.size == 0:
        return gamma_cand, lam_cand, rejected

    idx = np.arange(n)
    s_mat = np.broadcast_to(problem.gram, (b, n, n))[suspect].copy()
    s_mat[:, idx, idx] += lam_cand[suspect]
    _, ok = _cholesky_mask(s_mat)

    gamma_new = gamma_cand.copy()
    lam_new = lam_cand.copy()
    for j, elem in enumerate(suspect[~ok]):
        bad = lam_cand[elem] < 0.0
        gamma_new[elem, bad] = gamma_prev[elem, bad]
        lam_new[elem, bad] = lam_prev[elem, bad]
        rejected[elem] = int(bad.sum())
        s_elem = (
            np.broadcast_to(problem.gram, (b, n, n))[elem] + np.diag(lam_new[elem])
        )
        try:
            np.linalg.cholesky(s_elem)
        except np.linalg.LinAlgError:
            gamma_new[elem] = gamma_prev[elem]
            lam_new[elem] = lam_prev[elem]
            rejected[elem] = n
    return gamma_new, lam_new, rejected


def run_single_loop(
    problem: BatchProblem, cst: Constellation, cfg
) -> EcBatchResult:
    """Vectorized Algorithm-1 style single-loop EC over a batch.

    Per iteration: q moments at the current (gamma_q, lam_q); s matched to
    q; the r tilt is the difference of naturals; r moments; s re-matched to
    r under the variance floor; damped q update with the positive
    definiteness guard.  With max_iters == 0 the returned site is the
    per-dimension discretization of the initial q, i.e. the MMSE output.
    """
    a = cst.real_alphabet
    b, n = problem.size, problem.n
    gamma_q = np.zeros((b, n))
    lam_q = np.full((b, n), 1.0 / cst.real_energy)
    eps = cfg.variance_eps

    site_pmf = np.empty((b, n, a.size))
    delta_u = np.full(b, np.nan)
    delta_u2 = np.full(b, np.nan)
    iterations = np.zeros(b, dtype=np.int64)
    rejected = np.zeros(b, dtype=np.int64)
    converged = np.zeros(b, dtype=bool)

    if cfg.max_iters == 0:
        q = q_stats(problem, gamma_q, lam_q)
        if not q.ok.all():
            raise np.linalg.LinAlgError("initial MMSE precision not positive definite")
        site_pmf[:] = gaussian_site_pmf(a, q.mean, q.var)
        return EcBatchResult(
            site_pmf=site_pmf,
            iterations=iterations,
            delta_u=delta_u,
            delta_u2=delta_u2,
            rejected=rejected,
            converged=converged,
        )

    trace_u = np.zeros((cfg.max_iters, b)) if cfg.record_trace else None
    trace_u2 = np.zeros((cfg.max_iters, b)) if cfg.record_trace else None
    energy = np.zeros((cfg.max_iters, b, 3)) if cfg.record_energy else None

    active = np.arange(b)
    last_iter = 0
    for it in range(1, cfg.max_iters + 1):
        last_iter = it
        ga, la = gamma_q[active], lam_q[active]
        sub = BatchProblem(
            gram=problem.gram if problem.gram.shape[0] == 1 else problem.gram[active],
            hty=problem.hty[active],
        )

        q = q_stats(sub, ga, la)                                   # step 1
        if not q.ok.all():
            raise np.linalg.LinAlgError("q precision lost positive definiteness")
        # the schedule floors every matching of s within the iteration; the
        # very first q-side matching is exempt so that all variants share
        # the initialization
        floor2 = (
            floor_value(it, cfg.floor_start_iter)
            if (cfg.variance_floor and it > 1)
            else 0.0
        )
        var_q = np.maximum(q.var, max(floor2, eps))
        lam_s2 = 1.0 / var_q                                       # step 2
        gamma_s2 = q.mean * lam_s2
        gamma_r = gamma_s2 - ga                                    # step 3
        lam_r = lam_s2 - la
        r = r_stats(a, gamma_r, lam_r)                             # step 4
        var_r = np.maximum(r.second - r.mean**2, 0.0)
        floor = floor_value(it, cfg.floor_start_iter) if cfg.variance_floor else 0.0
        var_s = np.maximum(var_r, max(floor, eps))                 # step 5
        lam_s5 = 1.0 / var_s
        gamma_s5 = r.mean * lam_s5

        du = np.mean(np.abs(q.mean - r.mean), axis=1)
        du2 = np.mean(np.abs(q.second - r.second), axis=1)
        delta_u[active] = du
        delta_u2[active] = du2
        if trace_u is not None:
            trace_u[it - 1] = np.nan
            trace_u2[it - 1] = np.nan
            trace_u[it - 1, active] = du
            trace_u2[it - 1, active] = du2

        if cfg.literal_step6:                                      # step 6
            scale = cfg.beta / (1.0 - cfg.beta)
            gamma_cand = ga + scale * (gamma_s5 - gamma_s2)
            lam_cand = la + scale * (lam_s5 - lam_s2)
        else:
            gamma_cand = cfg.beta * (gamma_s5 - gamma_r) + (1.0 - cfg.beta) * ga
            lam_cand = cfg.beta * (lam_s5 - lam_r) + (1.0 - cfg.beta) * la
        gamma_new, lam_new, rej = _guarded_q_update(
            sub, ga, la, gamma_cand, lam_cand
        )
        rejected[active] += rej

        change = np.maximum(
            np.abs(gamma_new - ga).max(axis=1), np.abs(lam_new - la).max(axis=1)
        )
        # a reverted update is not a fixed point: keep those elements live
        change[rej > 0] = np.inf
        gamma_q[active] = gamma_new
        lam_q[active] = lam_new
        site_pmf[active] = r.pmf
        iterations[active] = it

        if energy is not None:
            q_post = q_stats(sub, gamma_new, lam_new)
            r_post = r_stats(a, gamma_s5 - gamma_new, lam_s5 - lam_new)
            mean_s = gamma_s5 / lam_s5
            second_s = 1.0 / lam_s5 + mean_s**2
            logzec = q_post.log_z + r_post.log_z - log_zs_batch(gamma_s5, lam_s5)
            gq = _grad_norm(q_post.mean - r_post.mean, q_post.second - r_post.second)
            gs = _grad_norm(r_post.mean - mean_s, r_post.second - second_s)
            energy[it - 1] = np.nan
            energy[it - 1, active] = np.stack([logzec, gq, gs], axis=-1)

        if cfg.convergence_tol > 0.0:
            done = change < cfg.convergence_tol                    # step 7
            converged[active[done]] = True
            active = active[~done]
            if active.size == 0:
                break

    if trace_u is not None and last_iter < cfg.max_iters:
        trace_u = trace_u[:last_iter]
        trace_u2 = trace_u2[:last_iter]
        if energy is not None:
            energy = energy[:last_iter]

    return EcBatchResult(
        site_pmf=site_pmf,
        iterations=iterations,
        delta_u=delta_u,
        delta_u2=delta_u2,
        rejected=rejected,
        converged=converged,
        trace_u=trace_u,
        trace_u2=trace_u2,
        energy=energy,
    )


def _inner_objective(
    problem: BatchProblem,
    alphabet: np.ndarray,
    gamma_s: np.ndarray,
    lam_s: np.ndarray,
    gamma_q: np.ndarray,
    lam_q: np.ndarray,
):
    """Objective, gradient and moments of the convex inner problem
    log Z_q(l_q) + log Z_r(l_s - l_q).  Elements with an indefinite q
    precision come back with ok = False and +inf objective."""
    q = q_stats(problem, gamma_q, lam_q)
    r = r_stats(alphabet, gamma_s - gamma_q, lam_s - lam_q)
    obj = np.where(q.ok, q.log_z + r.log_z, np.inf)
    grad_gamma = q.mean - r.mean
    grad_lam = -0.5 * (q.second - r.second)
    return obj, grad_gamma, grad_lam, q, r


def run_double_loop(
    problem: BatchProblem, cst: Constellation, cfg
) -> EcBatchResult:
    """Vectorized double-loop EC over a batch.

    Each outer iteration minimizes log Z_q + log Z_r over the q naturals by
    gradient descent with backtracking (trial step cfg.dl_step_size, halved
    until the objective does not increase), stopping at gradient norm
    cfg.dl_grad_tol or cfg.dl_inner_steps accepted steps; then s is matched
    to the q moments and damped with cfg.beta.
    """
    a = cst.real_alphabet
    b, n = problem.size, problem.n
    eps = cfg.variance_eps
    gamma_s = np.zeros((b, n))
    lam_s = np.full((b, n), 1.0 / cst.real_energy)
    gamma_q = np.zeros((b, n))
    lam_q = np.full((b, n), 1.0 / cst.real_energy)

    site_pmf = np.empty((b, n, a.size))
    delta_u = np.full(b, np.nan)
    delta_u2 = np.full(b, np.nan)
    iterations = np.zeros(b, dtype=np.int64)
    inner_steps_total = np.zeros(b, dtype=np.int64)
    converged = np.zeros(b, dtype=bool)

    if cfg.max_iters == 0:
        q = q_stats(problem, gamma_q, lam_q)
        site_pmf[:] = gaussian_site_pmf(a, q.mean, q.var)
        return EcBatchResult(
            site_pmf=site_pmf,
            iterations=iterations,
            delta_u=delta_u,
            delta_u2=delta_u2,
            rejected=np.zeros(b, dtype=np.int64),
            converged=converged,
            inner_steps=inner_steps_total,
        )

    trace_u = np.zeros((cfg.max_iters, b)) if cfg.record_trace else None
    trace_u2 = np.zeros((cfg.max_iters, b)) if cfg.record_trace else None
    energy = np.zeros((cfg.max_iters, b, 3)) if cfg.record_energy else None
    objective_log: list[float] | None = [] if (cfg.record_trace and b == 1) else None

    active = np.arange(b)
    last_iter = 0
    for it in range(1, cfg.max_iters + 1):
        last_iter = it
        sub = BatchProblem(
            gram=problem.gram if problem.gram.shape[0] == 1 else problem.gram[active],
            hty=problem.hty[active],
        )
        gs, ls = gamma_s[active], lam_s[active]
        gq, lq = gamma_q[active], lam_q[active]

        obj, ggrad, lgrad, q, r = _inner_objective(sub, a, gs, ls, gq, lq)
        if np.any(np.isinf(obj)):
            raise np.linalg.LinAlgError("double loop warm start not positive definite")
        steps = np.zeros(active.size, dtype=np.int64)
        live = np.flatnonzero(_grad_norm(ggrad, -2.0 * lgrad) >= cfg.dl_grad_tol)
        if objective_log is not None and it == 1:
            objective_log.append(float(obj[0]))

        while live.size > 0:
            sub_live = BatchProblem(
                gram=sub.gram if sub.gram.shape[0] == 1 else sub.gram[live],
                hty=sub.hty[live],
            )
            step = np.full(live.size, cfg.dl_step_size)
            pending = np.arange(live.size)
            cand_g, cand_l = gq[live].copy(), lq[live].copy()
            cand_obj = obj[live].copy()
            cand_q_mean = q.mean[live].copy()
            cand_q_var = q.var[live].copy()
            cand_q_second = q.second[live].copy()
            cand_r_mean = r.mean[live].copy()
            cand_r_second = r.second[live].copy()
            cand_pmf = r.pmf[live].copy()
            cand_ggrad, cand_lgrad = ggrad[live].copy(), lgrad[live].copy()
            stuck = np.zeros(live.size, dtype=bool)
            while pending.size > 0:
                p_prob = BatchProblem(
                    gram=sub_live.gram
                    if sub_live.gram.shape[0] == 1
                    else sub_live.gram[pending],
                    hty=sub_live.hty[pending],
                )
                g_try = cand_g[pending] - step[pending, None] * cand_ggrad[pending]
                l_try = cand_l[pending] - step[pending, None] * cand_lgrad[pending]
                o_try, gg_try, lg_try, q_try, r_try = _inner_objective(
                    p_prob, a, gs[live][pending], ls[live][pending], g_try, l_try
                )
                good = o_try <= cand_obj[pending] + 1e-12
                acc = pending[good]
                cand_g[acc] = g_try[good]
                cand_l[acc] = l_try[good]
                cand_obj[acc] = o_try[good]
                cand_ggrad[acc] = gg_try[good]
                cand_lgrad[acc] = lg_try[good]
                cand_q_mean[acc] = q_try.mean[good]
                cand_q_var[acc] = q_try.var[good]
                cand_q_second[acc] = q_try.second[good]
                cand_r_mean[acc] = r_try.mean[good]
                cand_r_second[acc] = r_try.second[good]
                cand_pmf[acc] = r_try.pmf[good]
                bad = pending[~good]
                step[bad] *= 0.5
                dead = bad[step[bad] < 1e-18]
                stuck[dead] = True
                pending = bad[step[bad] >= 1e-18]

            gq[live], lq[live] = cand_g, cand_l
            obj[live] = cand_obj
            ggrad[live], lgrad[live] = cand_ggrad, cand_lgrad
            q.mean[live], q.var[live] = cand_q_mean, cand_q_var
            q.second[live] = cand_q_second
            r.mean[live], r.second[live] = cand_r_mean, cand_r_second
            r.pmf[live] = cand_pmf
            steps[live] += 1
            if objective_log is not None and it == 1:
                objective_log.append(float(obj[0]))

            norms = _grad_norm(ggrad[live], -2.0 * lgrad[live])
            keep = (norms >= cfg.dl_grad_tol) & (steps[live] < cfg.dl_inner_steps)
            keep &= ~stuck
            live = live[keep]
            stuck = stuck[keep]

        inner_steps_total[active] += steps
        du = np.mean(np.abs(q.mean - r.mean), axis=1)
        du2 = np.mean(np.abs(q.second - r.second), axis=1)
        delta_u[active] = du
        delta_u2[active] = du2
        site_pmf[active] = r.pmf
        iterations[active] = it
        gamma_q[active], lam_q[active] = gq, lq
        if trace_u is not None:
            trace_u[it - 1] = np.nan
            trace_u2[it - 1] = np.nan
            trace_u[it - 1, active] = du
            trace_u2[it - 1, active] = du2
        if energy is not None:
            mean_s = gs / ls
            second_s = 1.0 / ls + mean_s**2
            logzec = obj - log_zs_batch(gs, ls)
            gqn = _grad_norm(q.mean - r.mean, q.second - r.second)
            gsn = _grad_norm(r.mean - mean_s, r.second - second_s)
            energy[it - 1] = np.nan
            energy[it - 1, active] = np.stack([logzec, gqn, gsn], axis=-1)

        var_q = np.maximum(q.var, eps)                             # step 2
        lam_match = 1.0 / var_q
        gamma_match = q.mean * lam_match
        gamma_s_new = cfg.beta * gamma_match + (1.0 - cfg.beta) * gs   # step 3
        lam_s_new = cfg.beta * lam_match + (1.0 - cfg.beta) * ls

        change = np.maximum(
            np.abs(gamma_s_new - gs).max(axis=1), np.abs(lam_s_new - ls).max(axis=1)
        )
        gamma_s[active], lam_s[active] = gamma_s_new, lam_s_new

        if cfg.convergence_tol > 0.0:
            done = change < cfg.convergence_tol
            converged[active[done]] = True
            active = active[~done]
            if active.size == 0:
                break

    if trace_u is not None and last_iter < cfg.max_iters:
        trace_u = trace_u[:last_iter]
        trace_u2 = trace_u2[:last_iter]
        if energy is not None:
            energy = energy[:last_iter]

    return EcBatchResult(
        site_pmf=site_pmf,
        iterations=iterations,
        delta_u=delta_u,
        delta_u2=delta_u2,
        rejected=np.zeros(b, dtype=np.int64),
        converged=converged,
        trace_u=trace_u,
        trace_u2=trace_u2,
        energy=energy,
        inner_steps=inner_steps_total,
        inner_objective=np.asarray(objective_log) if objective_log else None,
    )


def enumerate_real_candidates(cst: Constellation, n: int) -> tuple[np.ndarray, np.ndarray]:
    """All |alphabet|^n real symbol vectors as (digits, values) arrays."""
    levels = cst.levels
    count = levels**n
    idx = np.arange(count)
    digits = np.empty((count, n), dtype=np.int64)
    for j in range(n):
        digits[:, j] = (idx // levels ** (n - 1 - j)) % levels
    return digits, cst.real_alphabet[digits]


def exact_joint_pmf(
    h: np.ndarray,
    sigma2: float,
    ys: np.ndarray,
    cst: Constellation,
    digits: np.ndarray,
    u_cands: np.ndarray,
    chunk: int = 8192,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact posterior tables by full enumeration over real symbol vectors.

    Returns (symbol_pmf (B, m, M), real_pmf (B, n, L)); the symbol table
    pairs each antenna's real and imaginary digits inside the joint sum, so
    its rows are the true per-antenna complex marginals.  Requires n even.
    """
    ys = np.atleast_2d(ys)
    n = h.shape[1]
    m = n // 2
    levels = cst.levels
    hu = u_cands @ h.T                       # (cands, 2r)
    e = np.einsum("cr,cr->c", hu, hu)
    pair_onehot = [
        np.eye(cst.order)[digits[:, i] * levels + digits[:, m + i]] for i in range(m)
    ]

    b = ys.shape[0]
    symbol_pmf = np.empty((b, m, cst.order))
    for lo in range(0, b, chunk):
        hi = min(lo + chunk, b)
        logw = (2.0 * ys[lo:hi] @ hu.T - e) / (2.0 * sigma2)
        logw -= logw.max(axis=1, keepdims=True)
        w = np.exp(logw)
        w /= w.sum(axis=1, keepdims=True)
        for i in range(m):
            symbol_pmf[lo:hi, i] = w @ pair_onehot[i]

    grid = symbol_pmf.reshape(b, m, levels, levels)
    real_pmf = np.concatenate([grid.sum(axis=3), grid.sum(axis=2)], axis=1)
    return symbol_pmf, real_pmf


def exact_real_pmf(
    h: np.ndarray,
    sigma2: float,
    y: np.ndarray,
    cst: Constellation,
) -> np.ndarray:
    """Exact per-real-dimension marginals for any (possibly odd) n."""
    n = h.shape[1]
    digits, u_cands = enumerate_real_candidates(cst, n)
    resid = y[None, :] - u_cands @ h.T
    logw = -np.einsum("cr,cr->c", resid, resid) / (2.0 * sigma2)
    logw -= logw.max()
    w = np.exp(logw)
    w /= w.sum()
    levels = cst.levels
    pmf = np.empty((n, levels))
    for j in range(n):
        pmf[j] = np.bincount(digits[:, j], weights=w, minlength=levels)
    return pmf
