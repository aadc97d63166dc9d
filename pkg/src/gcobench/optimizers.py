"""Mini-batch optimizers: the plain and momentum in-batch estimators, and the
moving-average-corrected estimator with per-sample statistics u.

Batch estimator layout: a batch of B slots yields 2B embedded views (first
views then second views). For anchor view (slot t, view a) the in-batch
negative members are both views of every slot whose dataset index differs,
and the averaged in-batch mass is

  gbar_a[t] = (1/|B_t|) * sum_members exp(sim / tau).

The per-slot estimator term is

  -grad sim(positive pair)
  + 1/2 * [ tau/(eps0 + D_a[t]) * grad gbar_a[t] + tau/(eps0 + D_b[t]) * grad gbar_b[t] ]

averaged over slots, where the denominators D depend on the method:

  simclr:        D = the batch masses gbar themselves
  sogclr fresh:  D = per-view moving averages refreshed with this batch,
                 u1 = (1-gamma) u_prev + gamma gbar_a (and u2 likewise)
  sogclr lagged: D = u_prev for both views (cold entries seeded with the
                 first batch estimate so no division by zero occurs)

The stored statistic after a sogclr step is (u1 + u2)/2, i.e.
u <- (1-gamma) u + gamma (gbar_a + gbar_b)/2. With gamma = 1 the fresh mode
reproduces the simclr denominators exactly, so sogclr(gamma=1, beta=1)
degenerates to simclr(beta=1) bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import encoder
from .embed_core import (AugmentationFamily, Dataset, MiniBatch, batch_views)
from .objective import GlobalObjectiveConfig

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

STEP_RULES = ("momentum", "adam_style")
U_LAG_MODES = ("fresh", "lagged")


class NumericError(RuntimeError):
    """A step produced or consumed a non-finite or invalid numeric state."""


@dataclass
class SimclrState:
    """Step size, momentum coefficient, and the momentum buffer."""

    eta: float
    beta: float = 1.0
    v: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if not self.eta >= 0:
            raise ValueError("eta must be nonnegative")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1]")


def make_simclr_state(d: int, eta: float, beta: float = 1.0) -> SimclrState:
    return SimclrState(eta=eta, beta=beta, v=np.zeros(d))


@dataclass
class SogclrState:
    """Per-sample moving averages u plus the shared step machinery."""

    u: np.ndarray
    eta: float
    gamma: float = 0.8
    beta: float = 0.9
    v: np.ndarray = field(default_factory=lambda: np.zeros(0))
    step_rule: str = "momentum"
    u_lag: str = "fresh"
    adam_m: np.ndarray | None = None
    adam_v: np.ndarray | None = None
    adam_t: int = 0

    def __post_init__(self):
        if not self.eta >= 0:
            raise ValueError("eta must be nonnegative")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1]")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"unknown step rule: {self.step_rule!r}")
        if self.u_lag not in U_LAG_MODES:
            raise ValueError(f"unknown u_lag mode: {self.u_lag!r}")
        u = np.asarray(self.u, dtype=float)
        if np.any(~np.isfinite(u)) or np.any(u < 0):
            raise ValueError("u entries must be finite and nonnegative")
        self.u = u


def make_sogclr_state(n: int, d: int, eta: float, gamma: float = 0.8,
                      beta: float = 0.9, step_rule: str = "momentum",
                      u_lag: str = "fresh") -> SogclrState:
    """Zero-initialized statistics and buffers for n samples and d parameters."""
    state = SogclrState(u=np.zeros(n), eta=eta, gamma=gamma, beta=beta,
                        v=np.zeros(d), step_rule=step_rule, u_lag=u_lag)
    if step_rule == "adam_style":
        state.adam_m = np.zeros(d)
        state.adam_v = np.zeros(d)
    return state


@dataclass
class StepReport:
    """Estimator output of one batch: the gradient estimate m_t, the
    post-update u values of the batch members, and the frozen-weight
    surrogate loss whose params-gradient equals m_t."""

    estimator: np.ndarray
    u_batch_values: np.ndarray
    surrogate_loss: float


@dataclass
class _BatchStats:
    """Shared per-batch quantities for estimator assembly."""

    E: np.ndarray               # (2B, m)
    cache: object
    S: np.ndarray               # (2B, 2B) similarities
    EA: np.ndarray              # (B, 2B) masked exp(sim/tau), first-view anchors
    EB: np.ndarray              # (B, 2B) same for second-view anchors
    cnt: np.ndarray             # (B,) member counts |B_t|
    gbar_a: np.ndarray          # (B,)
    gbar_b: np.ndarray          # (B,)
    X: np.ndarray               # (2B, d_in) view rows


def _batch_stats(params, cfg: GlobalObjectiveConfig, batch: MiniBatch,
                 ds: Dataset, fam: AugmentationFamily) -> _BatchStats:
    B = batch.B
    X = batch_views(ds, fam, batch)
    E, cache = encoder.encode_batch(params, X)
    S = E @ E.T
    idx = batch.indices
    member = idx[:, None] != idx[None, :]            # (B, B) slot mask
    M = np.concatenate([member, member], axis=1)     # (B, 2B)
    cnt = M.sum(axis=1)
    if np.any(cnt == 0):
        bad = int(np.argmin(cnt))
        raise ValueError(f"batch slot {bad} has no negatives (all indices equal)")
    expS = np.exp(S / cfg.tau)
    EA = expS[:B] * M
    EB = expS[B:] * M
    gbar_a = EA.sum(axis=1) / cnt
    gbar_b = EB.sum(axis=1) / cnt
    return _BatchStats(E=E, cache=cache, S=S, EA=EA, EB=EB, cnt=cnt,
                       gbar_a=gbar_a, gbar_b=gbar_b, X=X)


def _assemble_estimator(params, cfg, stats: _BatchStats,
                        denom_a: np.ndarray, denom_b: np.ndarray) -> np.ndarray:
    B = stats.cnt.shape[0]
    C = np.zeros((2 * B, 2 * B))
    sl = np.arange(B)
    C[sl, B + sl] = -1.0 / B
    C[:B] += stats.EA / ((cfg.eps0 + denom_a)[:, None] * stats.cnt[:, None] * 2 * B)
    C[B:] += stats.EB / ((cfg.eps0 + denom_b)[:, None] * stats.cnt[:, None] * 2 * B)
    cot = (C + C.T) @ stats.E
    return encoder.backward_batch(params, stats.cache, cot)


def simclr_estimator(params, cfg: GlobalObjectiveConfig, batch: MiniBatch,
                     ds: Dataset, fam: AugmentationFamily) -> np.ndarray:
    """Symmetrized in-batch gradient estimate; the exact params-gradient of
    simclr_batch_loss."""
    stats = _batch_stats(params, cfg, batch, ds, fam)
    return _assemble_estimator(params, cfg, stats, stats.gbar_a, stats.gbar_b)


def simclr_batch_loss(params, cfg: GlobalObjectiveConfig, batch: MiniBatch,
                      ds: Dataset, fam: AugmentationFamily) -> float:
    """Symmetrized averaged batch loss
    (1/B) sum_t [ -sim(pos_t) + 1/2 (f(gbar_a[t]) + f(gbar_b[t])) ]
    with f(g) = tau ln(eps0 + g)."""
    stats = _batch_stats(params, cfg, batch, ds, fam)
    B = stats.cnt.shape[0]
    pos = stats.S[np.arange(B), B + np.arange(B)]
    f_a = cfg.tau * np.log(cfg.eps0 + stats.gbar_a)
    f_b = cfg.tau * np.log(cfg.eps0 + stats.gbar_b)
    return float(np.mean(-pos + 0.5 * (f_a + f_b)))


def _check_finite(vec: np.ndarray, what: str) -> None:
    if not np.isfinite(vec).all():
        raise NumericError(f"non-finite {what}")


def simclr_step(state: SimclrState, params, cfg: GlobalObjectiveConfig,
                batch: MiniBatch, ds: Dataset, fam: AugmentationFamily):
    """v <- (1-beta) v + beta estimator; w <- w - eta v. beta = 1 is the plain update."""
    est = simclr_estimator(params, cfg, batch, ds, fam)
    _check_finite(est, "simclr estimator")
    state.v = (1.0 - state.beta) * state.v + state.beta * est
    w = encoder.flatten_params(params) - state.eta * state.v
    return encoder.unflatten_params(params, w)


def _sogclr_denoms(state: SogclrState, stats: _BatchStats, batch: MiniBatch):
    """Per-view estimator denominators and the post-update stored u values."""
    u_prev = state.u[batch.indices]
    est = 0.5 * (stats.gbar_a + stats.gbar_b)
    if state.u_lag == "fresh":
        u1 = (1.0 - state.gamma) * u_prev + state.gamma * stats.gbar_a
        u2 = (1.0 - state.gamma) * u_prev + state.gamma * stats.gbar_b
        denom_a, denom_b = u1, u2
        u_new = 0.5 * (u1 + u2)
    else:
        seeded = np.where(u_prev > 0, u_prev, est)   # cold entries take the batch estimate
        denom_a = denom_b = seeded
        u_new = (1.0 - state.gamma) * seeded + state.gamma * est
    if np.any(denom_a <= 0) or np.any(denom_b <= 0):
        raise NumericError("nonpositive u statistic at use time (update ordering bug)")
    return denom_a, denom_b, u_new


def sogclr_update_u(state: SogclrState, params, cfg: GlobalObjectiveConfig,
                    batch: MiniBatch, ds: Dataset, fam: AugmentationFamily) -> np.ndarray:
    """u_i <- (1-gamma) u_i + gamma (gbar_a + gbar_b)/2 for batch members only.

    Returns the new values in slot order and writes them into state.u. When a
    with-replacement batch repeats an index, the last slot's value wins.
    """
    stats = _batch_stats(params, cfg, batch, ds, fam)
    _, _, u_new = _sogclr_denoms(state, stats, batch)
    state.u[batch.indices] = u_new
    return u_new


def _surrogate_value(stats_S: np.ndarray, PA: np.ndarray, PB: np.ndarray,
                     cnt: np.ndarray) -> float:
    B = cnt.shape[0]
    sl = np.arange(B)
    pos = stats_S[sl, B + sl]
    neg = 0.5 * ((PA * stats_S[:B]).sum(axis=1) / cnt
                 + (PB * stats_S[B:]).sum(axis=1) / cnt)
    return float(np.mean(-pos + neg))


def sogclr_estimator(state: SogclrState, params, cfg: GlobalObjectiveConfig,
                     batch: MiniBatch, ds: Dataset,
                     fam: AugmentationFamily) -> StepReport:
    """Moving-average-corrected gradient estimate m_t. Does not mutate state."""
    stats = _batch_stats(params, cfg, batch, ds, fam)
    denom_a, denom_b, u_new = _sogclr_denoms(state, stats, batch)
    est = _assemble_estimator(params, cfg, stats, denom_a, denom_b)
    PA = stats.EA / (cfg.eps0 + denom_a)[:, None]
    PB = stats.EB / (cfg.eps0 + denom_b)[:, None]
    sur = _surrogate_value(stats.S, PA, PB, stats.cnt)
    return StepReport(estimator=est, u_batch_values=u_new, surrogate_loss=sur)


def dcl_surrogate(state: SogclrState, params, cfg: GlobalObjectiveConfig,
                  batch: MiniBatch, ds: Dataset, fam: AugmentationFamily):
    """Frozen-weight scalar surrogate loss.

    Returns (value, eval_fn). eval_fn re-evaluates the surrogate at other
    params while keeping the member weights p = exp(sim/tau)/(eps0 + u) frozen
    at their current values, so the params-gradient of eval_fn equals the
    estimator m_t of sogclr_estimator for the same state and batch.
    """
    stats = _batch_stats(params, cfg, batch, ds, fam)
    denom_a, denom_b, _ = _sogclr_denoms(state, stats, batch)
    PA = stats.EA / (cfg.eps0 + denom_a)[:, None]
    PB = stats.EB / (cfg.eps0 + denom_b)[:, None]
    cnt = stats.cnt
    X = stats.X
    value = _surrogate_value(stats.S, PA, PB, cnt)

    def eval_fn(other_params) -> float:
        E2, _ = encoder.encode_batch(other_params, X)
        S2 = E2 @ E2.T
        return _surrogate_value(S2, PA, PB, cnt)

    return value, eval_fn


def sogclr_step(state: SogclrState, params, cfg: GlobalObjectiveConfig,
                batch: MiniBatch, ds: Dataset, fam: AugmentationFamily):
    """Update u from this batch, form m_t, then apply the configured step rule."""
    report = sogclr_estimator(state, params, cfg, batch, ds, fam)
    state.u[batch.indices] = report.u_batch_values
    est = report.estimator
    _check_finite(est, "sogclr estimator")
    w = encoder.flatten_params(params)
    if state.step_rule == "momentum":
        state.v = (1.0 - state.beta) * state.v + state.beta * est
        w = w - state.eta * state.v
    else:
        # Bias-corrected moments on the estimator itself; the momentum buffer
        # is unused under this rule.
        state.adam_t += 1
        state.adam_m = ADAM_BETA1 * state.adam_m + (1.0 - ADAM_BETA1) * est
        state.adam_v = ADAM_BETA2 * state.adam_v + (1.0 - ADAM_BETA2) * est ** 2
        m_hat = state.adam_m / (1.0 - ADAM_BETA1 ** state.adam_t)
        v_hat = state.adam_v / (1.0 - ADAM_BETA2 ** state.adam_t)
        w = w - state.eta * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    _check_finite(w, "parameter vector")
    return encoder.unflatten_params(params, w)


def save_sogclr_state(state: SogclrState, path: str) -> None:
    """Text checkpoint: hyperparameter header, then u, v, and adam moments."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"sogclr {state.u.shape[0]} {state.v.shape[0]} "
                 f"{repr(state.eta)} {repr(state.gamma)} {repr(state.beta)} "
                 f"{state.step_rule} {state.u_lag} {state.adam_t}\n")
        for name in ("u", "v"):
            vec = getattr(state, name)
            fh.write(" ".join(repr(float(x)) for x in vec) + "\n")
        for name in ("adam_m", "adam_v"):
            vec = getattr(state, name)
            if vec is None:
                fh.write("-\n")
            else:
                fh.write(" ".join(repr(float(x)) for x in vec) + "\n")


def load_sogclr_state(path: str) -> SogclrState:
    """Read a checkpoint written by save_sogclr_state."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        lines = [fh.readline().rstrip("\n") for _ in range(4)]
    if not header or header[0] != "sogclr":
        raise ValueError(f"not a sogclr state checkpoint: {path}")
    n, d = int(header[1]), int(header[2])
    eta, gamma, beta = float(header[3]), float(header[4]), float(header[5])
    step_rule, u_lag, adam_t = header[6], header[7], int(header[8])

    def parse(line):
        return None if line == "-" else np.array([float(x) for x in line.split()])

    u, v, adam_m, adam_v = (parse(line) for line in lines)
    if u.shape[0] != n or v.shape[0] != d:
        raise ValueError(f"checkpoint vector lengths do not match header in {path}")
    state = SogclrState(u=u, eta=eta, gamma=gamma, beta=beta, v=v,
                        step_rule=step_rule, u_lag=u_lag,
                        adam_m=adam_m, adam_v=adam_v, adam_t=adam_t)
    return state
