"""Experiment runners reproducing the reference figures at desk scale.

Each experiment is described by a flat key-value config file (dotted keys,
``key = value`` lines, ``#`` comments).  Unknown keys are hard errors.
Work is split into fixed-size shards seeded by shard index, so results are
bit-identical for any worker count; every detector inside a shard is fed
the same random stream, giving paired comparisons.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import coded_snr_correction, sample_channel, snr_to_sigma_w2, to_real_model
from .constellation import build_constellation
from .detectors import (
    EcConfig,
    EcDoubleLoopDetector,
    EcSingleLoopDetector,
    ExactDetector,
    MmseDetector,
    UniformDetector,
)
from . import _kernels
from .ldpc import ChannelEnsemble, build_regular_ldpc, coded_ber_run, wilson_interval
from .metrics import capacity_per_antenna, estimate_mi

log = logging.getLogger("ecmimo")

KIND_RATE = "rate-sweep"
KIND_CONVERGE = "convergence-trace"
KIND_BER = "coded-ber"
KIND_ENERGY = "free-energy-trace"

_CONVERGE_SHARD = 250
_BER_SHARD = 50
DETECTOR_NAMES = ("exact", "mmse", "ec-sl", "ec-dl", "uniform")


class ConfigError(ValueError):
    """Config syntax or schema violation, carrying file/line/field context."""

    def __init__(self, path, line, field_name, message):
        self.path, self.line, self.field = path, line, field_name
        where = f"{path}:{line}" if line else str(path)
        super().__init__(f"{where}: field '{field_name}': {message}")


def parse_config_text(path) -> dict[str, tuple[str, int]]:
    """Read ``key = value`` lines into {key: (value, line_number)}."""
    entries: dict[str, tuple[str, int]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(path, lineno, line.split()[0], "expected 'key = value'")
            key, value = line.split("=", 1)
            key, value = key.strip(), value.strip()
            if key in entries:
                raise ConfigError(path, lineno, key, f"duplicate key (first at line {entries[key][1]})")
            entries[key] = (value, lineno)
    return entries


def _to_bool(s):
    if s.lower() in ("true", "yes", "1"):
        return True
    if s.lower() in ("false", "no", "0"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _to_float_list(s):
    return [float(t) for t in s.split(",") if t.strip()]


def _to_str_list(s):
    return [t.strip() for t in s.split(",") if t.strip()]


_REQUIRED = object()

_COMMON_SCHEMA = {
    "kind": (str, _REQUIRED),
    "m": (int, _REQUIRED),
    "r": (int, _REQUIRED),
    "modulation": (int, 4),
    "es": (float, 1.0),
    "seed": (int, None),
}

_EC_SCHEMA = {
    "ec.beta": (float, 0.95),
    "ec.iters": (int, 10),
    "ec.floor": (_to_bool, True),
    "ec.floor_start": (int, 4),
    "ec.tol": (float, 1e-6),
    "dl.iters": (int, 10),
    "dl.beta": (float, 0.95),
    "dl.inner_steps": (int, 2000),
    "dl.step_size": (float, 1e-3),
    "dl.grad_tol": (float, 0.1),
}

_SCHEMAS = {
    KIND_RATE: {
        **_COMMON_SCHEMA,
        **_EC_SCHEMA,
        "snr_db": (_to_float_list, _REQUIRED),
        "detectors": (_to_str_list, _REQUIRED),
        "samples": (int, _REQUIRED),
        "realizations": (int, _REQUIRED),
        "enumeration_budget": (int, 2**20),
    },
    KIND_CONVERGE: {
        **_COMMON_SCHEMA,
        "snr_db": (_to_float_list, _REQUIRED),
        "instances": (int, _REQUIRED),
    },
    KIND_BER: {
        **_COMMON_SCHEMA,
        **_EC_SCHEMA,
        "snr_db": (_to_float_list, _REQUIRED),
        "detectors": (_to_str_list, _REQUIRED),
        "words": (int, _REQUIRED),
        "code.n": (int, 1024),
        "code.col_weight": (int, 3),
        "code.row_weight": (int, 6),
        "decoder_iters": (int, 100),
        "redraw_per_word": (_to_bool, True),
        "enumeration_budget": (int, 2**20),
    },
    KIND_ENERGY: {
        **_COMMON_SCHEMA,
        **_EC_SCHEMA,
        "snr_db": (_to_float_list, _REQUIRED),
        "instances": (int, _REQUIRED),
    },
}

_VARIANT_FIELDS = {
    "kind": str,
    "label": str,
    "beta": float,
    "iters": int,
    "floor": _to_bool,
    "floor_start": int,
    "dl_inner_steps": int,
    "dl_step_size": float,
    "dl_grad_tol": float,
}


@dataclass(frozen=True)
class VariantSpec:
    kind: str                 # "ec-sl" | "ec-dl"
    label: str
    cfg: EcConfig


@dataclass
class ExperimentConfig:
    kind: str
    path: str
    values: dict = field(default_factory=dict)
    variants: list = field(default_factory=list)

    def __getitem__(self, key):
        return self.values[key]

    def resolved_items(self) -> list[tuple[str, str]]:
        """Flat (key, value) pairs embedding the full resolved config."""
        out = []
        for key in sorted(self.values):
            v = self.values[key]
            if isinstance(v, list):
                out.append((key, ",".join(str(x) for x in v)))
            elif isinstance(v, bool):
                out.append((key, "true" if v else "false"))
            else:
                out.append((key, str(v)))
        return out


def load_config(path, kind: str, seed_override: int | None = None) -> ExperimentConfig:
    raw = parse_config_text(path)
    schema = _SCHEMAS[kind]
    if "kind" in raw and raw["kind"][0] != kind:
        raise ConfigError(
            path, raw["kind"][1], "kind", f"expected {kind!r}, got {raw['kind'][0]!r}"
        )
    values = {}
    variant_raw: dict[int, dict[str, str]] = {}
    for key, (text, lineno) in raw.items():
        if key in schema:
            conv = schema[key][0]
            try:
                values[key] = conv(text)
            except (ValueError, TypeError) as exc:
                raise ConfigError(path, lineno, key, str(exc)) from None
            continue
        if kind == KIND_CONVERGE and key.startswith("variant."):
            parts = key.split(".")
            if len(parts) == 3 and parts[1].isdigit() and parts[2] in _VARIANT_FIELDS:
                conv = _VARIANT_FIELDS[parts[2]]
                try:
                    variant_raw.setdefault(int(parts[1]), {})[parts[2]] = conv(text)
                except (ValueError, TypeError) as exc:
                    raise ConfigError(path, lineno, key, str(exc)) from None
                continue
        raise ConfigError(path, lineno, key, "unknown key")

    for key, (conv, default) in schema.items():
        if key not in values:
            if default is _REQUIRED:
                raise ConfigError(path, 0, key, "required key missing")
            values[key] = default
    if values["kind"] != kind:
        raise ConfigError(path, raw["kind"][1], "kind", f"expected {kind!r}, got {values['kind']!r}")
    if seed_override is not None:
        values["seed"] = seed_override
    if values.get("seed") is None:
        raise ConfigError(path, 0, "seed", "seed missing (set it in the config or pass --seed)")
    if "detectors" in values:
        for name in values["detectors"]:
            if name not in DETECTOR_NAMES:
                raise ConfigError(path, 0, "detectors", f"unknown detector {name!r}")
    if "snr_db" in values and not values["snr_db"]:
        raise ConfigError(path, 0, "snr_db", "SNR grid must not be empty")

    cfg = ExperimentConfig(kind=kind, path=str(path), values=values)
    if kind == KIND_CONVERGE:
        if not variant_raw:
            raise ConfigError(path, 0, "variant", "at least one variant.N.kind entry required")
        for idx in sorted(variant_raw):
            cfg.variants.append(_variant_from_fields(path, idx, variant_raw[idx]))
        for idx in sorted(variant_raw):
            for fname, fval in sorted(variant_raw[idx].items()):
                v = "true" if fval is True else "false" if fval is False else str(fval)
                cfg.values[f"variant.{idx}.{fname}"] = v
    return cfg


def _variant_from_fields(path, idx, fields_map) -> VariantSpec:
    vkind = fields_map.get("kind")
    if vkind not in ("ec-sl", "ec-dl"):
        raise ConfigError(path, 0, f"variant.{idx}.kind", "must be ec-sl or ec-dl")
    beta = fields_map.get("beta", 0.95)
    iters = fields_map.get("iters", 10)
    floor = fields_map.get("floor", False)
    ec_cfg = EcConfig(
        beta=beta,
        max_iters=iters,
        variance_floor=floor,
        floor_start_iter=fields_map.get("floor_start", 4),
        dl_inner_steps=fields_map.get("dl_inner_steps", 2000),
        dl_step_size=fields_map.get("dl_step_size", 1e-3),
        dl_grad_tol=fields_map.get("dl_grad_tol", 0.1),
        convergence_tol=0.0,
        record_trace=True,
    )
    default_label = f"{vkind}-b{beta:g}" + ("-floor" if floor else "")
    return VariantSpec(kind=vkind, label=fields_map.get("label", default_label), cfg=ec_cfg)


def _ec_configs(cfg: ExperimentConfig) -> tuple[EcConfig, EcConfig]:
    sl = EcConfig(
        beta=cfg["ec.beta"],
        max_iters=cfg["ec.iters"],
        variance_floor=cfg["ec.floor"],
        floor_start_iter=cfg["ec.floor_start"],
        convergence_tol=cfg["ec.tol"],
    )
    dl = EcConfig(
        beta=cfg["dl.beta"],
        max_iters=cfg["dl.iters"],
        dl_inner_steps=cfg["dl.inner_steps"],
        dl_step_size=cfg["dl.step_size"],
        dl_grad_tol=cfg["dl.grad_tol"],
        convergence_tol=cfg["ec.tol"],
    )
    return sl, dl


def build_detector(name: str, cfg: ExperimentConfig):
    sl_cfg, dl_cfg = _ec_configs(cfg)
    if name == "exact":
        return ExactDetector(enumeration_budget=cfg["enumeration_budget"])
    if name == "mmse":
        return MmseDetector()
    if name == "ec-sl":
        return EcSingleLoopDetector(cfg=sl_cfg)
    if name == "ec-dl":
        return EcDoubleLoopDetector(cfg=dl_cfg)
    if name == "uniform":
        return UniformDetector()
    raise ValueError(f"unknown detector {name!r}")


def _run_units(worker_fn, unit_args, workers: int):
    """Run shard units preserving unit order regardless of worker count."""
    if workers <= 1:
        return [worker_fn(a) for a in unit_args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker_fn, unit_args, chunksize=1))


# ---------------------------------------------------------------- rate sweep

def _rate_unit(args):
    (m, r, mod, es, snr_db, det_specs, samples, budget, unit_ss) = args
    cst = build_constellation(mod, es)
    sigma_w2 = snr_to_sigma_w2(snr_db, m, mod, es)
    chan_ss, trial_ss = unit_ss.spawn(2)
    ch = sample_channel(m, r, sigma_w2, np.random.default_rng(chan_ss))
    cap = capacity_per_antenna(ch, 10.0 ** (snr_db / 10.0))
    out = {}
    for name, det in det_specs:
        # identical trial stream per detector: paired comparisons
        est = estimate_mi(ch, cst, det, samples, np.random.default_rng(trial_ss))
        out[name] = est.average_mi
    return cap, out


def run_rate_sweep(cfg: ExperimentConfig, workers: int = 1):
    """Average mutual information per detector over an SNR grid.

    Returns (header, rows); one row per (snr, detector) with the Monte
    Carlo standard error over channel realizations and the mean capacity.
    """
    m, r, mod, es = cfg["m"], cfg["r"], cfg["modulation"], cfg["es"]
    cst = build_constellation(mod, es)
    names = list(cfg["detectors"])
    if "exact" in names:
        budget_ok = ExactDetector(cfg["enumeration_budget"]).feasible(cst, 2 * m)
        if not budget_ok:
            log.warning(
                "exact detector omitted: %d^%d candidates exceed the budget %d",
                cst.levels, 2 * m, cfg["enumeration_budget"],
            )
            names = [n for n in names if n != "exact"]
    det_specs = [(n, build_detector(n, cfg)) for n in names]

    snrs = cfg["snr_db"]
    reals = cfg["realizations"]
    root = np.random.SeedSequence(cfg["seed"])
    children = root.spawn(len(snrs) * reals)
    units = []
    for si, snr in enumerate(snrs):
        for ri in range(reals):
            units.append((m, r, mod, es, snr, det_specs, cfg["samples"], cfg["enumeration_budget"], children[si * reals + ri]))
    results = _run_units(_rate_unit, units, workers)

    header = ["snr_db", "detector", "avg_mi", "stderr", "capacity"]
    rows = []
    for si, snr in enumerate(snrs):
        chunk = results[si * reals : (si + 1) * reals]
        caps = np.array([c for c, _ in chunk])
        for name in names:
            mis = np.array([d[name] for _, d in chunk])
            stderr = float(mis.std(ddof=1) / np.sqrt(reals)) if reals > 1 else 0.0
            rows.append([snr, name, float(mis.mean()), stderr, float(caps.mean())])
    return header, rows


# ---------------------------------------------------------- convergence trace

def _converge_unit(args):
    (m, r, mod, es, snr_db, count, variants, unit_ss) = args
    cst = build_constellation(mod, es)
    sigma_w2 = snr_to_sigma_w2(snr_db, m, mod, es)
    rng = np.random.default_rng(unit_ss)
    hs = np.empty((count, 2 * r, 2 * m))
    ys = np.empty((count, 2 * r))
    for b in range(count):
        ch = sample_channel(m, r, sigma_w2, rng)
        real = to_real_model(ch)
        idx = rng.integers(mod, size=m)
        u = cst.points[idx]
        u_real = np.concatenate([u.real, u.imag])
        noise = rng.normal(scale=np.sqrt(real.sigma2), size=2 * r)
        hs[b] = real.h
        ys[b] = real.h @ u_real + noise
    problem = _kernels.build_problem_multi(hs, sigma_w2 / 2.0, ys)
    sums = {}
    for var in variants:
        runner = _kernels.run_single_loop if var.kind == "ec-sl" else _kernels.run_double_loop
        res = runner(problem, cst, var.cfg)
        sums[var.label] = (res.trace_u.sum(axis=1), res.trace_u2.sum(axis=1))
    return count, sums


def run_convergence_trace(cfg: ExperimentConfig, workers: int = 1):
    """Per-iteration mean moment mismatches for each configured variant."""
    m, r, mod, es = cfg["m"], cfg["r"], cfg["modulation"], cfg["es"]
    snr_db = cfg["snr_db"][0]
    total = cfg["instances"]
    root = np.random.SeedSequence(cfg["seed"])
    starts = list(range(0, total, _CONVERGE_SHARD))
    children = root.spawn(len(starts))
    units = []
    for ui, lo in enumerate(starts):
        count = min(_CONVERGE_SHARD, total - lo)
        units.append((m, r, mod, es, snr_db, count, tuple(cfg.variants), children[ui]))
    results = _run_units(_converge_unit, units, workers)

    header = ["detector", "iter", "delta_u", "delta_u2"]
    rows = []
    for var in cfg.variants:
        du = np.zeros(var.cfg.max_iters)
        du2 = np.zeros(var.cfg.max_iters)
        n = 0
        for count, sums in results:
            du += sums[var.label][0]
            du2 += sums[var.label][1]
            n += count
        for it in range(var.cfg.max_iters):
            rows.append([var.label, it, du[it] / n, du2[it] / n])
    return header, rows


# -------------------------------------------------------------- coded BER

def _ber_unit(args):
    (m, r, mod, es, snr_db, det_specs, code, words, decoder_iters, redraw, unit_ss) = args
    cst = build_constellation(mod, es)
    ensemble = ChannelEnsemble(m=m, r=r, redraw_per_word=redraw)
    out = {}
    for name, det in det_specs:
        # identical stream per detector: same words, channels and noise
        rng = np.random.default_rng(unit_ss)
        res = coded_ber_run(ensemble, cst, det, code, words, snr_db, rng, decoder_iters)
        out[name] = (res.bit_errors, res.bit_trials, res.words)
    return out


def run_coded_ber(cfg: ExperimentConfig, workers: int = 1):
    """Coded BER per detector over a rate-corrected SNR grid."""
    m, r, mod, es = cfg["m"], cfg["r"], cfg["modulation"], cfg["es"]
    cst = build_constellation(mod, es)
    names = list(cfg["detectors"])
    if "exact" in names and not ExactDetector(cfg["enumeration_budget"]).feasible(cst, 2 * m):
        log.warning("exact detector omitted from coded BER: enumeration over budget")
        names = [n for n in names if n != "exact"]
    det_specs = [(n, build_detector(n, cfg)) for n in names]

    root = np.random.SeedSequence(cfg["seed"])
    code_ss, units_ss = root.spawn(2)
    code = build_regular_ldpc(
        cfg["code.n"], cfg["code.col_weight"], cfg["code.row_weight"],
        np.random.default_rng(code_ss),
    )
    snrs = cfg["snr_db"]
    words = cfg["words"]
    starts = list(range(0, words, _BER_SHARD))
    children = units_ss.spawn(len(snrs) * len(starts))
    units = []
    for si, snr in enumerate(snrs):
        for wi, lo in enumerate(starts):
            count = min(_BER_SHARD, words - lo)
            units.append((m, r, mod, es, snr, det_specs, code, count,
                          cfg["decoder_iters"], cfg["redraw_per_word"],
                          children[si * len(starts) + wi]))
    results = _run_units(_ber_unit, units, workers)

    header = ["snr_c_db", "detector", "ber", "word_count", "wilson_low", "wilson_high"]
    rows = []
    per_point = len(starts)
    for si, snr in enumerate(snrs):
        chunk = results[si * per_point : (si + 1) * per_point]
        snr_c = coded_snr_correction(snr, code.rate)
        for name in names:
            errs = sum(c[name][0] for c in chunk)
            trials = sum(c[name][1] for c in chunk)
            wcount = sum(c[name][2] for c in chunk)
            low, high = wilson_interval(errs, trials)
            rows.append([snr_c, name, errs / trials, wcount, low, high])
    return header, rows


# ---------------------------------------------------------- free energy trace

def run_free_energy_trace(cfg: ExperimentConfig, workers: int = 1):
    """Per-iteration EC energy and gradient-block norms on fixed instances."""
    m, r, mod, es = cfg["m"], cfg["r"], cfg["modulation"], cfg["es"]
    cst = build_constellation(mod, es)
    snr_db = cfg["snr_db"][0]
    sigma_w2 = snr_to_sigma_w2(snr_db, m, mod, es)
    count = cfg["instances"]
    rng = np.random.default_rng(np.random.SeedSequence(cfg["seed"]))
    hs = np.empty((count, 2 * r, 2 * m))
    ys = np.empty((count, 2 * r))
    for b in range(count):
        ch = sample_channel(m, r, sigma_w2, rng)
        real = to_real_model(ch)
        u = cst.points[rng.integers(mod, size=m)]
        u_real = np.concatenate([u.real, u.imag])
        ys[b] = real.h @ u_real + rng.normal(scale=np.sqrt(real.sigma2), size=2 * r)
        hs[b] = real.h
    problem = _kernels.build_problem_multi(hs, sigma_w2 / 2.0, ys)

    sl_cfg, dl_cfg = _ec_configs(cfg)
    sl_cfg = EcConfig(
        beta=sl_cfg.beta, max_iters=sl_cfg.max_iters,
        variance_floor=sl_cfg.variance_floor, floor_start_iter=sl_cfg.floor_start_iter,
        convergence_tol=0.0, record_trace=True, record_energy=True,
    )
    dl_cfg = EcConfig(
        beta=dl_cfg.beta, max_iters=dl_cfg.max_iters,
        dl_inner_steps=dl_cfg.dl_inner_steps, dl_step_size=dl_cfg.dl_step_size,
        dl_grad_tol=dl_cfg.dl_grad_tol,
        convergence_tol=0.0, record_trace=True, record_energy=True,
    )

    header = ["detector", "instance", "iter", "logzec", "grad_q_norm", "grad_s_norm"]
    rows = []
    for name, runner, rcfg in (
        ("ec-sl", _kernels.run_single_loop, sl_cfg),
        ("ec-dl", _kernels.run_double_loop, dl_cfg),
    ):
        res = runner(problem, cst, rcfg)
        for b in range(count):
            for it in range(res.energy.shape[0]):
                logzec, gq, gs = res.energy[it, b]
                rows.append([name, b, it, float(logzec), float(gq), float(gs)])
    return header, rows


RUNNERS = {
    KIND_RATE: run_rate_sweep,
    KIND_CONVERGE: run_convergence_trace,
    KIND_BER: run_coded_ber,
    KIND_ENERGY: run_free_energy_trace,
}
