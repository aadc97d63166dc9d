"""Synthetic data, training loops, metrics files, batch-size sweeps, and the
bundled gradient checks.

A run is described by one flat RunConfig. Config files are plain text with
one `key = value` per line, '#' comments, and dotted section keys
(`optimizer.eta = 0.05`). Metrics are emitted as CSV or JSONL with a fixed
column order; floats are serialized with repr so files round-trip exactly and
identical configs yield byte-identical files (wall_clock_ms stays 0.0 unless
timing is enabled).
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, replace

import numpy as np

from . import bimodal
from .bimodal import (PairedDataset, make_bimodal_state, twoway_estimator,
                      twoway_oracle_F, twoway_oracle_value, twoway_step)
from .embed_core import (SAMPLING_MODES, Dataset, MiniBatch, MinibatchSampler,
                         IndexSampler, make_augmentation_family,
                         sample_minibatch)
from .encoder import (ARCHITECTURES, finite_diff_flat, finite_diff_grad,
                      flatten_params, init_encoder, save_encoder)
from .objective import (VERSIONS, GlobalObjectiveConfig,
                        aug_consistency_eps_mean, oracle_F, oracle_value)
from .optimizers import (U_LAG_MODES, NumericError, dcl_surrogate,
                         make_simclr_state, make_sogclr_state,
                         simclr_batch_loss, simclr_estimator, simclr_step,
                         sogclr_estimator, sogclr_step, sogclr_update_u)

ALGORITHMS = ("simclr", "simclr_momentum", "sogclr", "sogclr_adam",
              "bimodal_sogclr")
METRICS_FORMATS = ("csv", "jsonl")
METRICS_COLUMNS = ("step", "objective_value", "oracle_grad_norm_sq",
                   "u_tracking_mse", "eps_sq_mean", "wall_clock_ms")
DEFAULT_TAU = 0.1
GRADCHECK_GUARD = 200


class ConfigError(ValueError):
    """A run configuration is malformed or internally inconsistent."""


@dataclass
class MetricsRecord:
    """One cadence tick: objective value and oracle gradient norm under the
    configured version, u-tracking error, augmentation-consistency mean, and
    elapsed milliseconds (0.0 when timing is off)."""

    step: int
    objective_value: float
    oracle_grad_norm_sq: float
    u_tracking_mse: float
    eps_sq_mean: float
    wall_clock_ms: float


@dataclass(frozen=True)
class RunConfig:
    """Everything one experiment needs, flat. tau = None picks the
    per-algorithm default (0.1 unimodal, 0.07 bimodal)."""

    n: int = 32
    d_in: int = 8
    clusters: int = 2
    separation: float = 3.0
    data_seed: int = 7
    d_text: int = 8
    aug_k: int = 2
    aug_scale: float = 0.1
    aug_seed: int = 11
    arch: str = "linear"
    d_hidden: int = 8
    m_embed: int = 4
    encoder_seed: int = 3
    init_scale: float = 1.0
    tau: float | None = None
    eps0: float = 0.0
    version: str = "v1"
    algo: str = "sogclr"
    eta: float = 0.3
    beta: float = 0.9
    gamma: float = 0.8
    batch_size: int = 8
    steps: int = 500
    sampling: str = "epoch_shuffle"
    u_lag: str = "fresh"
    train_seed: int = 5
    cadence: int = 10
    timing: bool = False
    metrics_path: str = ""
    metrics_format: str = "csv"
    checkpoint_path: str = ""
    sweep_batch_sizes: tuple[int, ...] = (4, 16, 64)
    sweep_seeds: tuple[int, ...] = (1, 2, 3)
    sweep_path: str = ""


def _parse_int(raw: str) -> int:
    return int(raw)


def _parse_float(raw: str) -> float:
    return float(raw)


def _parse_opt_float(raw: str):
    return None if raw.lower() in ("none", "auto") else float(raw)


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_str(raw: str) -> str:
    return raw


def _parse_int_tuple(raw: str) -> tuple[int, ...]:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty integer list")
    return tuple(int(p) for p in parts)


KEY_MAP = {
    "dataset.n": ("n", _parse_int),
    "dataset.d_in": ("d_in", _parse_int),
    "dataset.clusters": ("clusters", _parse_int),
    "dataset.separation": ("separation", _parse_float),
    "dataset.seed": ("data_seed", _parse_int),
    "dataset.d_text": ("d_text", _parse_int),
    "aug.k": ("aug_k", _parse_int),
    "aug.scale": ("aug_scale", _parse_float),
    "aug.seed": ("aug_seed", _parse_int),
    "encoder.arch": ("arch", _parse_str),
    "encoder.d_hidden": ("d_hidden", _parse_int),
    "encoder.m": ("m_embed", _parse_int),
    "encoder.seed": ("encoder_seed", _parse_int),
    "encoder.init_scale": ("init_scale", _parse_float),
    "objective.tau": ("tau", _parse_opt_float),
    "objective.eps0": ("eps0", _parse_float),
    "objective.version": ("version", _parse_str),
    "optimizer.algo": ("algo", _parse_str),
    "optimizer.eta": ("eta", _parse_float),
    "optimizer.beta": ("beta", _parse_float),
    "optimizer.gamma": ("gamma", _parse_float),
    "optimizer.batch_size": ("batch_size", _parse_int),
    "optimizer.steps": ("steps", _parse_int),
    "optimizer.sampling": ("sampling", _parse_str),
    "optimizer.u_lag": ("u_lag", _parse_str),
    "optimizer.seed": ("train_seed", _parse_int),
    "metrics.cadence": ("cadence", _parse_int),
    "metrics.timing": ("timing", _parse_bool),
    "metrics.path": ("metrics_path", _parse_str),
    "metrics.format": ("metrics_format", _parse_str),
    "checkpoint.path": ("checkpoint_path", _parse_str),
    "sweep.batch_sizes": ("sweep_batch_sizes", _parse_int_tuple),
    "sweep.seeds": ("sweep_seeds", _parse_int_tuple),
    "sweep.path": ("sweep_path", _parse_str),
}


def _apply_pairs(config: RunConfig, pairs, where: str) -> RunConfig:
    updates = {}
    for key, raw in pairs:
        if key not in KEY_MAP:
            raise ConfigError(f"unknown config key {key!r} in {where}")
        name, parse = KEY_MAP[key]
        try:
            updates[name] = parse(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key} in {where}: {exc}") from exc
    return replace(config, **updates)


def load_config(path: str, base: RunConfig | None = None) -> RunConfig:
    """Read a flat `key = value` file ( '#' comments, blank lines allowed )."""
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected key = value, "
                                  f"got {text!r}")
            key, raw = text.split("=", 1)
            pairs.append((key.strip(), raw.strip()))
    return _apply_pairs(base if base is not None else RunConfig(), pairs, path)


def apply_overrides(config: RunConfig, overrides) -> RunConfig:
    """Apply command-line `KEY=VALUE` strings on top of a config."""
    pairs = []
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        key, raw = item.split("=", 1)
        pairs.append((key.strip(), raw.strip()))
    return _apply_pairs(config, pairs, "overrides")


def resolved_tau(config: RunConfig) -> float:
    if config.tau is not None:
        return config.tau
    return bimodal.DEFAULT_TAU if config.algo == "bimodal_sogclr" else DEFAULT_TAU


def validate_config(config: RunConfig) -> None:
    """Raise ConfigError on any invalid or inconsistent field."""
    def need(cond: bool, msg: str) -> None:
        if not cond:
            raise ConfigError(msg)

    need(config.n >= 2, "dataset.n must be >= 2")
    need(config.d_in >= 1, "dataset.d_in must be >= 1")
    need(config.clusters >= 1, "dataset.clusters must be >= 1")
    need(config.n >= config.clusters, "dataset.n must be >= dataset.clusters")
    need(config.separation >= 0, "dataset.separation must be >= 0")
    need(config.d_text >= 1, "dataset.d_text must be >= 1")
    need(config.aug_k >= 1, "aug.k must be >= 1")
    need(config.aug_scale >= 0, "aug.scale must be >= 0")
    need(config.arch in ARCHITECTURES,
         f"encoder.arch must be one of {ARCHITECTURES}")
    need(config.d_hidden >= 1, "encoder.d_hidden must be >= 1")
    need(config.m_embed >= 2, "encoder.m must be >= 2")
    need(config.init_scale > 0, "encoder.init_scale must be > 0")
    need(config.tau is None or config.tau > 0, "objective.tau must be > 0")
    need(config.eps0 >= 0, "objective.eps0 must be >= 0")
    need(config.version in VERSIONS,
         f"objective.version must be one of {VERSIONS}")
    need(config.algo in ALGORITHMS,
         f"optimizer.algo must be one of {ALGORITHMS}")
    need(config.eta >= 0, "optimizer.eta must be >= 0")
    need(0 < config.beta <= 1, "optimizer.beta must lie in (0, 1]")
    need(0 < config.gamma <= 1, "optimizer.gamma must lie in (0, 1]")
    need(config.batch_size >= 2, "optimizer.batch_size must be >= 2")
    need(config.steps >= 1, "optimizer.steps must be >= 1")
    need(config.sampling in SAMPLING_MODES,
         f"optimizer.sampling must be one of {SAMPLING_MODES}")
    need(config.u_lag in U_LAG_MODES,
         f"optimizer.u_lag must be one of {U_LAG_MODES}")
    need(config.sampling != "epoch_shuffle" or config.batch_size <= config.n,
         "optimizer.batch_size must be <= dataset.n under epoch_shuffle")
    need(config.train_seed >= 0, "optimizer.seed must be >= 0")
    need(config.cadence >= 1, "metrics.cadence must be >= 1")
    need(config.metrics_format in METRICS_FORMATS,
         f"metrics.format must be one of {METRICS_FORMATS}")
    need(len(config.sweep_batch_sizes) >= 1, "sweep.batch_sizes must be nonempty")
    need(all(b >= 2 for b in config.sweep_batch_sizes),
         "sweep.batch_sizes entries must be >= 2")
    need(len(config.sweep_seeds) >= 1, "sweep.seeds must be nonempty")


def generate_synthetic(n: int, d_in: int, clusters: int, separation: float,
                       seed: int) -> Dataset:
    """Cluster centers on a seeded sphere of radius `separation`, points =
    center + unit-variance noise, labels assigned round robin."""
    if clusters < 1:
        raise ConfigError("clusters must be >= 1")
    if n < clusters:
        raise ConfigError("need at least one point per cluster")
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((clusters, d_in))
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    centers = separation * raw / norms
    labels = tuple(int(i % clusters) for i in range(n))
    noise = rng.standard_normal((n, d_in))
    points = centers[np.array(labels)] + noise
    return Dataset(points=points, labels=labels)


def generate_synthetic_pairs(n: int, d_in: int, d_text: int, clusters: int,
                             separation: float, seed: int) -> PairedDataset:
    """Image side as generate_synthetic; text side is a fixed seeded linear
    map of the image vector plus small noise, so pairs are genuinely
    related but not identical."""
    ds = generate_synthetic(n, d_in, clusters, separation, seed)
    rng = np.random.default_rng(seed + 1)
    mix = rng.standard_normal((d_text, d_in)) / math.sqrt(d_in)
    text = ds.points @ mix.T + 0.1 * rng.standard_normal((n, d_text))
    return PairedDataset(image=ds.points, text=text,
                         labels=tuple(int(v) for v in ds.labels))


def _objective_config(config: RunConfig) -> GlobalObjectiveConfig:
    return GlobalObjectiveConfig(tau=resolved_tau(config), eps0=config.eps0,
                                 version=config.version)


def plateau(records) -> float:
    """Mean oracle_grad_norm_sq over the final 10% of records (at least one)."""
    if not records:
        raise ValueError("no records to average")
    k = max(1, math.ceil(0.1 * len(records)))
    return float(np.mean([r.oracle_grad_norm_sq for r in records[-k:]]))


def _train_unimodal(config: RunConfig):
    ds = generate_synthetic(config.n, config.d_in, config.clusters,
                            config.separation, config.data_seed)
    fam = make_augmentation_family(config.d_in, config.aug_k,
                                   config.aug_scale, config.aug_seed)
    params = init_encoder(config.arch, config.d_in, config.m_embed,
                          config.d_hidden, config.encoder_seed,
                          config.init_scale)
    ocfg = _objective_config(config)
    rng = np.random.default_rng(config.train_seed)
    sampler = MinibatchSampler(ds, fam, config.batch_size, rng, config.sampling)
    d = flatten_params(params).shape[0]

    if config.algo == "simclr":
        state = make_simclr_state(d, config.eta, beta=1.0)
    elif config.algo == "simclr_momentum":
        state = make_simclr_state(d, config.eta, beta=config.beta)
    else:
        rule = "adam_style" if config.algo == "sogclr_adam" else "momentum"
        state = make_sogclr_state(config.n, d, config.eta, gamma=config.gamma,
                                  beta=config.beta, step_rule=rule,
                                  u_lag=config.u_lag)
    has_u = config.algo in ("sogclr", "sogclr_adam")

    records = []
    start = time.perf_counter()

    def record(step: int, params) -> None:
        res = oracle_F(params, ocfg, ds, fam)
        gsq = float(res.grad @ res.grad)
        if has_u:
            target = res.per_sample_g.mean(axis=1)
            umse = float(np.mean((state.u - target) ** 2))
        else:
            umse = 0.0
        eps = aug_consistency_eps_mean(params, ds, fam)
        ms = (time.perf_counter() - start) * 1000.0 if config.timing else 0.0
        records.append(MetricsRecord(step=step, objective_value=res.value,
                                     oracle_grad_norm_sq=gsq,
                                     u_tracking_mse=umse, eps_sq_mean=eps,
                                     wall_clock_ms=ms))

    record(0, params)
    for t in range(1, config.steps + 1):
        batch = sampler.next_batch()
        try:
            if has_u:
                params = sogclr_step(state, params, ocfg, batch, ds, fam)
            else:
                params = simclr_step(state, params, ocfg, batch, ds, fam)
        except NumericError as exc:
            raise NumericError(f"step {t}: {exc}") from exc
        if t % config.cadence == 0 or t == config.steps:
            record(t, params)

    if config.metrics_path:
        emit_metrics(records, config.metrics_path, config.metrics_format)
    if config.checkpoint_path:
        save_encoder(params, config.checkpoint_path)
    return records


def _train_bimodal(config: RunConfig):
    ds = generate_synthetic_pairs(config.n, config.d_in, config.d_text,
                                  config.clusters, config.separation,
                                  config.data_seed)
    params_i = init_encoder(config.arch, config.d_in, config.m_embed,
                            config.d_hidden, config.encoder_seed,
                            config.init_scale)
    params_t = init_encoder(config.arch, config.d_text, config.m_embed,
                            config.d_hidden, config.encoder_seed + 1,
                            config.init_scale)
    ocfg = _objective_config(config)
    rng = np.random.default_rng(config.train_seed)
    sampler = IndexSampler(config.n, config.batch_size, rng, config.sampling)
    d = (flatten_params(params_i).shape[0]
         + flatten_params(params_t).shape[0])
    state = make_bimodal_state(config.n, d, config.eta, gamma=config.gamma,
                               beta=config.beta, u_lag=config.u_lag)

    records = []
    start = time.perf_counter()

    def record(step: int, params_i, params_t) -> None:
        res = twoway_oracle_F(params_i, params_t, ocfg, ds)
        gsq = float(res.grad @ res.grad)
        umse = 0.5 * (float(np.mean((state.u_image - res.g_image) ** 2))
                      + float(np.mean((state.u_text - res.g_text) ** 2)))
        ms = (time.perf_counter() - start) * 1000.0 if config.timing else 0.0
        records.append(MetricsRecord(step=step, objective_value=res.value,
                                     oracle_grad_norm_sq=gsq,
                                     u_tracking_mse=umse, eps_sq_mean=0.0,
                                     wall_clock_ms=ms))

    record(0, params_i, params_t)
    for t in range(1, config.steps + 1):
        idx = sampler.next_indices()
        try:
            params_i, params_t = twoway_step(state, params_i, params_t, ocfg,
                                             idx, ds)
        except NumericError as exc:
            raise NumericError(f"step {t}: {exc}") from exc
        if t % config.cadence == 0 or t == config.steps:
            record(t, params_i, params_t)

    if config.metrics_path:
        emit_metrics(records, config.metrics_path, config.metrics_format)
    if config.checkpoint_path:
        save_encoder(params_i, config.checkpoint_path + ".image")
        save_encoder(params_t, config.checkpoint_path + ".text")
    return records


def train(config: RunConfig):
    """Run the configured optimizer and return the metrics records.

    Emits a baseline record at step 0, one per cadence tick, and one at the
    final step; writes metrics and checkpoint files when paths are set."""
    validate_config(config)
    if config.algo == "bimodal_sogclr":
        return _train_bimodal(config)
    return _train_unimodal(config)


@dataclass(frozen=True)
class SweepRow:
    batch_size: int
    plateau_mean: float
    plateau_std: float
    plateaus: tuple[float, ...]


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]


def sweep_batch_size(config: RunConfig, batch_sizes=None,
                     seeds=None) -> SweepResult:
    """Train one run per (batch size, seed) cell and aggregate the plateau
    gradient norms per batch size. Each seed shifts both the sampling stream
    and the encoder init so cells are independent repetitions."""
    validate_config(config)
    sizes = tuple(batch_sizes) if batch_sizes is not None else config.sweep_batch_sizes
    the_seeds = tuple(seeds) if seeds is not None else config.sweep_seeds
    if not sizes or not the_seeds:
        raise ConfigError("sweep needs at least one batch size and one seed")
    for b in sizes:
        if config.sampling == "epoch_shuffle" and b > config.n:
            raise ConfigError(f"sweep batch size {b} exceeds dataset.n "
                              f"under epoch_shuffle")
    rows = []
    for b in sizes:
        values = []
        for seed in the_seeds:
            cell = replace(config, batch_size=b, train_seed=seed,
                           encoder_seed=config.encoder_seed + seed,
                           metrics_path="", checkpoint_path="", sweep_path="")
            values.append(plateau(train(cell)))
        arr = np.array(values)
        std = float(arr.std(ddof=1)) if arr.size >= 2 else 0.0
        rows.append(SweepRow(batch_size=int(b), plateau_mean=float(arr.mean()),
                             plateau_std=std, plateaus=tuple(values)))
    result = SweepResult(rows=tuple(rows))
    if config.sweep_path:
        save_sweep(result, config.sweep_path)
    return result


def save_sweep(result: SweepResult, path: str) -> None:
    try:
        with open(path, "w", encoding="ascii", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["batch_size", "plateau_mean", "plateau_std"])
            for row in result.rows:
                writer.writerow([row.batch_size, repr(row.plateau_mean),
                                 repr(row.plateau_std)])
    except OSError as exc:
        raise OSError(f"cannot write sweep results to {path}: {exc}") from exc


@dataclass(frozen=True)
class GradcheckResult:
    name: str
    rel_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.rel_err <= self.tol


@dataclass(frozen=True)
class GradcheckReport:
    checks: tuple[GradcheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1e-30)
    return float(np.linalg.norm(a - b)) / scale


FD_TOL = 1e-5
EXACT_TOL = 1e-8


def gradcheck(config: RunConfig) -> GradcheckReport:
    """Check every analytic gradient on the configured (small) instance.

    Finite-difference comparisons run at tolerance 1e-5, estimator-vs-
    estimator identities at 1e-8. Guards against instances with more than
    200 encoder parameters, where central differencing gets slow and noisy.
    """
    validate_config(config)
    tau = config.tau if config.tau is not None else DEFAULT_TAU
    tau_bi = config.tau if config.tau is not None else bimodal.DEFAULT_TAU

    ds = generate_synthetic(config.n, config.d_in, config.clusters,
                            config.separation, config.data_seed)
    fam = make_augmentation_family(config.d_in, config.aug_k,
                                   config.aug_scale, config.aug_seed)
    params = init_encoder(config.arch, config.d_in, config.m_embed,
                          config.d_hidden, config.encoder_seed,
                          config.init_scale)
    pds = generate_synthetic_pairs(config.n, config.d_in, config.d_text,
                                   config.clusters, config.separation,
                                   config.data_seed)
    params_ti = init_encoder(config.arch, config.d_text, config.m_embed,
                             config.d_hidden, config.encoder_seed + 1,
                             config.init_scale)
    d_uni = flatten_params(params).shape[0]
    d_pair = d_uni + flatten_params(params_ti).shape[0]
    if max(d_uni, d_pair) > GRADCHECK_GUARD:
        raise ConfigError(f"gradcheck instance has {max(d_uni, d_pair)} "
                          f"parameters, guard is {GRADCHECK_GUARD}")

    checks = []

    # Exact oracles against central differences, both versions.
    for version in VERSIONS:
        cfg_v = GlobalObjectiveConfig(tau=tau, eps0=config.eps0, version=version)
        res = oracle_F(params, cfg_v, ds, fam)
        fd = finite_diff_grad(lambda p: oracle_value(p, cfg_v, ds, fam), params)
        checks.append(GradcheckResult(name=f"oracle_{version}_grad",
                                      rel_err=_rel_err(res.grad, fd),
                                      tol=FD_TOL))

    # Two-way oracle against central differences over both encoders jointly.
    cfg_bi = GlobalObjectiveConfig(tau=tau_bi, eps0=config.eps0)
    res_bi = twoway_oracle_F(params, params_ti, cfg_bi, pds)
    w0 = bimodal.pair_to_flat(params, params_ti)

    def bi_value(vec: np.ndarray) -> float:
        pi, pt = bimodal.flat_to_pair(params, params_ti, vec)
        return twoway_oracle_value(pi, pt, cfg_bi, pds)

    fd_bi = finite_diff_flat(bi_value, w0)
    checks.append(GradcheckResult(name="twoway_oracle_grad",
                                  rel_err=_rel_err(res_bi.grad, fd_bi),
                                  tol=FD_TOL))

    # In-batch estimator against differences of its own batch loss.
    cfg_u = GlobalObjectiveConfig(tau=tau, eps0=config.eps0,
                                  version=config.version)
    rng = np.random.default_rng(config.train_seed)
    batch = sample_minibatch(ds, fam, min(config.batch_size, config.n), rng,
                             "epoch_shuffle")
    est = simclr_estimator(params, cfg_u, batch, ds, fam)
    fd_loss = finite_diff_grad(
        lambda p: simclr_batch_loss(p, cfg_u, batch, ds, fam), params)
    checks.append(GradcheckResult(name="simclr_estimator_vs_loss",
                                  rel_err=_rel_err(est, fd_loss), tol=FD_TOL))

    # Frozen-weight surrogate against the moving-average estimator.
    state = make_sogclr_state(config.n, d_uni, eta=config.eta,
                              gamma=config.gamma, beta=config.beta)
    sogclr_update_u(state, params, cfg_u, batch, ds, fam)
    report = sogclr_estimator(state, params, cfg_u, batch, ds, fam)
    _, eval_fn = dcl_surrogate(state, params, cfg_u, batch, ds, fam)
    fd_sur = finite_diff_grad(eval_fn, params)
    checks.append(GradcheckResult(name="dcl_surrogate_vs_sogclr",
                                  rel_err=_rel_err(report.estimator, fd_sur),
                                  tol=FD_TOL))

    # Full-batch single-view moving-average estimator against the exact
    # version-2 oracle gradient (an algebraic identity, so 1e-8).
    fam1 = make_augmentation_family(config.d_in, 1, config.aug_scale,
                                    config.aug_seed)
    full = MiniBatch(indices=np.arange(config.n),
                     aug_a=np.zeros(config.n, dtype=int),
                     aug_b=np.zeros(config.n, dtype=int))
    cfg_v2 = GlobalObjectiveConfig(tau=tau, eps0=0.0, version="v2")
    state1 = make_sogclr_state(config.n, d_uni, eta=config.eta, gamma=1.0)
    m_full = sogclr_estimator(state1, params, cfg_v2, full, ds, fam1).estimator
    oracle_full = oracle_F(params, cfg_v2, ds, fam1).grad
    checks.append(GradcheckResult(name="sogclr_vs_oracle_v2",
                                  rel_err=_rel_err(m_full, oracle_full),
                                  tol=EXACT_TOL))

    # Two-way estimator with statistics planted at their exact values.
    state_bi = make_bimodal_state(config.n, d_pair, eta=config.eta)
    state_bi.u_image[:] = res_bi.g_image
    state_bi.u_text[:] = res_bi.g_text
    est_bi = twoway_estimator(state_bi, params, params_ti, cfg_bi,
                              np.arange(config.n), pds)
    checks.append(GradcheckResult(name="twoway_planted_u",
                                  rel_err=_rel_err(est_bi, res_bi.grad),
                                  tol=EXACT_TOL))

    return GradcheckReport(checks=tuple(checks))


def emit_metrics(records, path: str, fmt: str = "csv") -> None:
    """Write records in the documented column order; floats via repr so the
    file round-trips exactly."""
    if fmt not in METRICS_FORMATS:
        raise ConfigError(f"metrics format must be one of {METRICS_FORMATS}")
    try:
        with open(path, "w", encoding="ascii", newline="") as fh:
            if fmt == "csv":
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(METRICS_COLUMNS)
                for r in records:
                    writer.writerow([r.step, repr(r.objective_value),
                                     repr(r.oracle_grad_norm_sq),
                                     repr(r.u_tracking_mse),
                                     repr(r.eps_sq_mean),
                                     repr(r.wall_clock_ms)])
            else:
                for r in records:
                    fh.write(json.dumps({
                        "step": r.step,
                        "objective_value": r.objective_value,
                        "oracle_grad_norm_sq": r.oracle_grad_norm_sq,
                        "u_tracking_mse": r.u_tracking_mse,
                        "eps_sq_mean": r.eps_sq_mean,
                        "wall_clock_ms": r.wall_clock_ms,
                    }) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write metrics to {path}: {exc}") from exc


def read_metrics(path: str, fmt: str = "csv"):
    """Parse a metrics file written by emit_metrics."""
    if fmt not in METRICS_FORMATS:
        raise ConfigError(f"metrics format must be one of {METRICS_FORMATS}")
    records = []
    with open(path, "r", encoding="ascii") as fh:
        if fmt == "csv":
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != list(METRICS_COLUMNS):
                raise ValueError(f"unexpected metrics header in {path}: {header}")
            rows = ({col: cell for col, cell in zip(METRICS_COLUMNS, row)}
                    for row in reader)
        else:
            rows = (json.loads(line) for line in fh if line.strip())
        for row in rows:
            records.append(MetricsRecord(
                step=int(row["step"]),
                objective_value=float(row["objective_value"]),
                oracle_grad_norm_sq=float(row["oracle_grad_norm_sq"]),
                u_tracking_mse=float(row["u_tracking_mse"]),
                eps_sq_mean=float(row["eps_sq_mean"]),
                wall_clock_ms=float(row["wall_clock_ms"])))
    return records
