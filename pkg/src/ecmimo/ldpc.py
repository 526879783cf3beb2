"""Regular LDPC code construction, encoding, sum-product decoding and the
coded-BER harness that exercises detector soft outputs end to end.

LLR convention throughout: LLR = log p(bit=0) / p(bit=1); a bit decodes to
1 when its posterior LLR is negative.
"""

from dataclasses import dataclass

import numpy as np

from .channel import (
    as_generator,
    sample_channel,
    snr_to_sigma_w2,
    to_real_model,
)
from .constellation import Constellation

_BP_CLAMP = 40.0
_TANH_LIMIT = 1.0 - 1e-15


@dataclass(frozen=True)
class LdpcCode:
    n: int
    n_checks: int
    col_weight: int
    row_weight: int
    check_adj: np.ndarray        # (n_checks, row_weight) variable indices
    var_edge_idx: np.ndarray     # (n, col_weight) flat edge positions per variable
    info_positions: np.ndarray   # (k,) free columns of the reduced parity matrix
    pivot_positions: np.ndarray  # (rank,) pivot columns
    parity_map: np.ndarray       # (rank, k) uint8, x_pivot = parity_map @ x_info mod 2
    k: int
    rank_deficiency: int

    @property
    def rate(self) -> float:
        return self.k / self.n

    def dense_parity(self) -> np.ndarray:
        h = np.zeros((self.n_checks, self.n), dtype=np.uint8)
        rows = np.repeat(np.arange(self.n_checks), self.row_weight)
        h[rows, self.check_adj.ravel()] = 1
        return h

    def syndrome(self, bits: np.ndarray) -> np.ndarray:
        return np.asarray(bits)[self.check_adj].sum(axis=1) % 2


@dataclass
class DecodeResult:
    decoded_bits: np.ndarray
    iterations_used: int
    syndrome_satisfied: bool


def _four_cycle_conflicts(check_adj: np.ndarray, n: int) -> list[tuple[int, int]]:
    """(check, variable) pairs participating in 4-cycles."""
    n_checks, wr = check_adj.shape
    pair_codes = {}
    conflicts = []
    for c in range(n_checks):
        row = np.sort(check_adj[c])
        for i in range(wr):
            for j in range(i + 1, wr):
                key = int(row[i]) * n + int(row[j])
                if key in pair_codes:
                    conflicts.append((c, int(row[i])))
                else:
                    pair_codes[key] = c
    return conflicts


def _swap_partner(check_of_edge, var_of_edge, edge_set, e, rng, attempts=64):
    """Swap the check endpoints of edge e and a random edge, keeping the
    degree sequence and refusing swaps that create duplicate edges."""
    n_edges = check_of_edge.size
    for _ in range(attempts):
        f = int(rng.integers(n_edges))
        if f == e:
            continue
        ce, cf = check_of_edge[e], check_of_edge[f]
        ve, vf = var_of_edge[e], var_of_edge[f]
        if ce == cf:
            continue
        if (cf, ve) in edge_set or (ce, vf) in edge_set:
            continue
        edge_set.discard((ce, ve))
        edge_set.discard((cf, vf))
        edge_set.add((cf, ve))
        edge_set.add((ce, vf))
        check_of_edge[e], check_of_edge[f] = cf, ce
        return True
    return False


def build_regular_ldpc(
    n: int, col_weight: int, row_weight: int, rng
) -> LdpcCode:
    """Random (col_weight, row_weight)-regular code, deterministic under the
    seed.  A configuration-model matching is repaired by degree-preserving
    edge swaps until no duplicate edges remain, then bounded swap passes
    remove 4-cycles where possible."""
    if (n * col_weight) % row_weight:
        raise ValueError("n * col_weight must be divisible by row_weight")
    gen = as_generator(rng)
    n_checks = n * col_weight // row_weight
    n_edges = n * col_weight

    var_of_edge = np.repeat(np.arange(n), col_weight)
    check_of_edge = np.repeat(np.arange(n_checks), row_weight)[gen.permutation(n_edges)]

    edge_set = set()
    duplicates = []
    for e in range(n_edges):
        key = (int(check_of_edge[e]), int(var_of_edge[e]))
        if key in edge_set:
            duplicates.append(e)
        else:
            edge_set.add(key)
    for e in duplicates:
        if not _swap_partner(check_of_edge, var_of_edge, edge_set, e, gen):
            raise RuntimeError("could not repair duplicate edges; infeasible parameters")

    check_adj = np.empty((n_checks, row_weight), dtype=np.int64)
    fill = np.zeros(n_checks, dtype=np.int64)

    def _rebuild_adj():
        fill[:] = 0
        for e in range(n_edges):
            c = check_of_edge[e]
            check_adj[c, fill[c]] = var_of_edge[e]
            fill[c] += 1

    for _ in range(30):
        _rebuild_adj()
        conflicts = _four_cycle_conflicts(check_adj, n)
        if not conflicts:
            break
        edge_of = {}
        for e in range(n_edges):
            edge_of[(int(check_of_edge[e]), int(var_of_edge[e]))] = e
        moved = 0
        for c, v in conflicts:
            e = edge_of.get((c, v))
            if e is not None and _swap_partner(
                check_of_edge, var_of_edge, edge_set, e, gen
            ):
                moved += 1
        if moved == 0:
            break
    _rebuild_adj()

    return _finish_code(check_adj, n, col_weight, row_weight)


def _finish_code(check_adj, n, col_weight, row_weight) -> LdpcCode:
    n_checks = check_adj.shape[0]
    order = np.argsort(check_adj.ravel(), kind="stable")
    var_edge_idx = order.reshape(n, col_weight)

    h = np.zeros((n_checks, n), dtype=np.uint8)
    rows = np.repeat(np.arange(n_checks), row_weight)
    h[rows, check_adj.ravel()] = 1

    # GF(2) reduced row echelon form
    work = h.copy()
    pivots = []
    rank = 0
    for col in range(n):
        hit = np.flatnonzero(work[rank:, col])
        if hit.size == 0:
            continue
        piv = rank + hit[0]
        if piv != rank:
            work[[rank, piv]] = work[[piv, rank]]
        others = np.flatnonzero(work[:, col])
        others = others[others != rank]
        work[others] ^= work[rank]
        pivots.append(col)
        rank += 1
        if rank == n_checks:
            break
    pivot_positions = np.asarray(pivots, dtype=np.int64)
    free_mask = np.ones(n, dtype=bool)
    free_mask[pivot_positions] = False
    info_positions = np.flatnonzero(free_mask)
    parity_map = work[:rank][:, info_positions].copy()

    return LdpcCode(
        n=n,
        n_checks=n_checks,
        col_weight=col_weight,
        row_weight=row_weight,
        check_adj=check_adj,
        var_edge_idx=var_edge_idx,
        info_positions=info_positions,
        pivot_positions=pivot_positions,
        parity_map=parity_map,
        k=int(info_positions.size),
        rank_deficiency=int(n_checks - rank),
    )


def encode(code: LdpcCode, info_bits: np.ndarray) -> np.ndarray:
    """Systematic encoding: info bits occupy the free columns, parities are
    solved from the reduced parity matrix so the syndrome is exactly zero."""
    info_bits = np.asarray(info_bits, dtype=np.uint8)
    if info_bits.shape != (code.k,):
        raise ValueError(f"expected {code.k} information bits, got {info_bits.shape}")
    word = np.zeros(code.n, dtype=np.uint8)
    word[code.info_positions] = info_bits
    word[code.pivot_positions] = (code.parity_map @ info_bits) % 2
    return word


def decode_bp(
    code: LdpcCode, llrs: np.ndarray, max_iters: int = 100
) -> DecodeResult:
    """Flooding sum-product decoding in the LLR domain with the tanh rule.

    Messages are clamped to +-40 consistently with the detector LLR clamp;
    exits early as soon as the hard decision satisfies every check.
    """
    llrs = np.asarray(llrs, dtype=float)
    if llrs.shape != (code.n,) or not np.all(np.isfinite(llrs)):
        raise ValueError("llrs must be a finite length-n vector")
    adj = code.check_adj
    c_msgs = np.zeros(adj.shape)
    bits = (llrs < 0).astype(np.uint8)
    iterations = 0
    for iterations in range(1, max_iters + 1):
        totals = llrs + c_msgs.ravel()[code.var_edge_idx].sum(axis=1)
        v_msgs = np.clip(totals[adj] - c_msgs, -_BP_CLAMP, _BP_CLAMP)

        t = np.tanh(0.5 * v_msgs)
        prefix = np.cumprod(np.concatenate([np.ones((adj.shape[0], 1)), t], axis=1), axis=1)
        suffix = np.cumprod(
            np.concatenate([np.ones((adj.shape[0], 1)), t[:, ::-1]], axis=1), axis=1
        )[:, ::-1]
        loo = prefix[:, :-1] * suffix[:, 1:]
        c_msgs = 2.0 * np.arctanh(np.clip(loo, -_TANH_LIMIT, _TANH_LIMIT))
        c_msgs = np.clip(c_msgs, -_BP_CLAMP, _BP_CLAMP)

        posterior = llrs + c_msgs.ravel()[code.var_edge_idx].sum(axis=1)
        bits = (posterior < 0).astype(np.uint8)
        if not np.any(code.syndrome(bits)):
            return DecodeResult(bits, iterations, True)
    return DecodeResult(bits, iterations, False)


def save_code_text(code: LdpcCode, path) -> None:
    """Plain-text sparse format: header "n n_checks", then one line of
    space-separated column indices per check."""
    lines = [f"{code.n} {code.n_checks}"]
    for row in code.check_adj:
        lines.append(" ".join(str(int(v)) for v in sorted(row)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_code_text(path) -> LdpcCode:
    with open(path, "r", encoding="utf-8") as fh:
        tokens = [line.split() for line in fh if line.strip()]
    n, n_checks = int(tokens[0][0]), int(tokens[0][1])
    rows = [np.asarray([int(t) for t in row], dtype=np.int64) for row in tokens[1:]]
    if len(rows) != n_checks:
        raise ValueError("check count does not match header")
    widths = {row.size for row in rows}
    if len(widths) != 1:
        raise ValueError("irregular row weights in file")
    check_adj = np.stack(rows)
    col_weight = int(np.bincount(check_adj.ravel(), minlength=n).max())
    counts = np.bincount(check_adj.ravel(), minlength=n)
    if not np.all(counts == col_weight):
        raise ValueError("irregular column weights in file")
    return _finish_code(check_adj, n, col_weight, check_adj.shape[1])


def wilson_interval(errors: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials == 0:
        return 0.0, 1.0
    p = errors / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * np.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    low = 0.0 if errors == 0 else max(center - half, 0.0)
    high = 1.0 if errors == trials else min(center + half, 1.0)
    return low, high


@dataclass(frozen=True)
class ChannelEnsemble:
    m: int
    r: int
    redraw_per_word: bool = True


@dataclass
class CodedBerResult:
    ber: float
    bit_errors: int
    bit_trials: int
    words: int
    wilson_low: float
    wilson_high: float


def coded_ber_run(
    ensemble: ChannelEnsemble,
    cst: Constellation,
    detector,
    code: LdpcCode,
    num_words: int,
    snr_db: float,
    rng,
    decoder_iters: int = 100,
) -> CodedBerResult:
    """Encode, Gray-map, transmit over consecutive channel uses, detect,
    decode, and count information-bit errors.

    The frame is padded with known zero bits when n is not a multiple of
    the bits per channel use; pad positions are outside the codeword and
    their LLRs are dropped before decoding.  The channel matrix is redrawn
    per word when the ensemble says so, the noise always.
    """
    gen = as_generator(rng)
    m, r = ensemble.m, ensemble.r
    kbits = cst.bits_per_symbol
    bits_per_use = m * kbits
    uses = -(-code.n // bits_per_use)
    pad = uses * bits_per_use - code.n
    sigma_w2 = snr_to_sigma_w2(snr_db, m, cst.order, cst.symbol_energy)

    real = None
    bit_errors = 0
    for word in range(num_words):
        if real is None or ensemble.redraw_per_word:
            real = to_real_model(sample_channel(m, r, sigma_w2, gen))
        info = gen.integers(0, 2, size=code.k, dtype=np.uint8)
        cw = encode(code, info)
        frame = np.concatenate([cw, np.zeros(pad, dtype=np.uint8)])
        symbols = cst.map_bits(frame).reshape(uses, m)
        u_real = np.concatenate([symbols.real, symbols.imag], axis=1)
        noise = gen.normal(scale=np.sqrt(real.sigma2), size=(uses, real.h.shape[0]))
        ys = u_real @ real.h.T + noise
        det = detector.detect_batch(real.h, real.sigma2, ys, cst)
        llrs = det.bit_llrs.reshape(-1)[: code.n]
        dec = decode_bp(code, llrs, max_iters=decoder_iters)
        info_hat = dec.decoded_bits[code.info_positions]
        bit_errors += int(np.sum(info_hat != info))

    bit_trials = num_words * code.k
    low, high = wilson_interval(bit_errors, bit_trials)
    return CodedBerResult(
        ber=bit_errors / bit_trials,
        bit_errors=bit_errors,
        bit_trials=bit_trials,
        words=num_words,
        wilson_low=low,
        wilson_high=high,
    )
