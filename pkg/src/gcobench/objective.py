"""Contrastive losses, the mini-batch g estimator, and the exact enumeration oracle.

Conventions used throughout the package:

- g quantities are AVERAGED over their index set:
  gbar(w; i, k, S) = (1/|S|) * sum_{z in S} exp(sim(E(x_i + delta_k), E(z)) / tau),
  where S is the negative set of sample i (all (n-1)*K views of other samples).
- The outer compositional function is f(g) = tau * ln(eps0 + g).
- The objective value drops the additive constant that does not depend on the
  encoder, so reported values can be negative.
- local_loss alone keeps the unaveraged SUM normalizer (the classical in-batch
  softmax form); everything global uses averaged g.

Version "v1" averages f over the augmentation draw outside the log; "v2" moves
the augmentation average inside the log. The two coincide when K = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import encoder
from .embed_core import (AugmentationFamily, Dataset, MiniBatch, all_views,
                         apply_augmentation, batch_views)

ORACLE_GUARD = 10_000
VERSIONS = ("v1", "v2")


class OracleSizeError(ValueError):
    """The requested exact enumeration exceeds the size guard."""


@dataclass(frozen=True)
class GlobalObjectiveConfig:
    """Temperature, normalizer shift, and objective version."""

    tau: float = 0.1
    eps0: float = 0.0
    version: str = "v1"

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.eps0 < 0:
            raise ValueError("eps0 must be nonnegative")
        if self.version not in VERSIONS:
            raise ValueError(f"unknown objective version: {self.version!r}")


@dataclass
class OracleResult:
    """Exact objective value, exact gradient, and the (n, K) matrix of averaged g."""

    value: float
    grad: np.ndarray
    per_sample_g: np.ndarray


def _member_views(ds: Dataset, fam: AugmentationFamily, i: int, batch: MiniBatch):
    """Both augmented views of every batch slot whose dataset index differs from i."""
    keep = batch.indices != i
    if not keep.any():
        raise ValueError(f"batch holds no negatives for sample {i}")
    pts = ds.points[batch.indices[keep]]
    va = pts + fam.deltas[batch.aug_a[keep]]
    vb = pts + fam.deltas[batch.aug_b[keep]]
    return np.concatenate([va, vb], axis=0)


def g_minibatch(params, cfg: GlobalObjectiveConfig, i: int, aug_k: int,
                batch: MiniBatch, ds: Dataset, fam: AugmentationFamily) -> float:
    """In-batch averaged exp-similarity mass for anchor view (i, aug_k).

    Members are both augmented views of every batch slot with dataset index
    different from i (masking is by dataset index, which keeps the estimator
    unbiased for g_exact under uniform sampling).
    """
    members = _member_views(ds, fam, i, batch)
    anchor = apply_augmentation(fam, aug_k, ds.points[i])
    E, _ = encoder.encode_batch(params, np.concatenate([anchor[None, :], members]))
    sims = E[1:] @ E[0]
    return float(np.mean(np.exp(sims / cfg.tau)))


def g_exact(params, cfg: GlobalObjectiveConfig, i: int, aug_k: int,
            ds: Dataset, fam: AugmentationFamily) -> float:
    """Exact averaged exp-similarity mass over all (n-1)*K negative views."""
    X = all_views(ds, fam)
    E, _ = encoder.encode_batch(params, X)
    anchor = E[i * fam.K + aug_k]
    sims = E @ anchor
    block = np.zeros(ds.n * fam.K, dtype=bool)
    block[i * fam.K:(i + 1) * fam.K] = True
    return float(np.mean(np.exp(sims[~block] / cfg.tau)))


def local_loss(params, cfg: GlobalObjectiveConfig, i: int, aug_a: int, aug_b: int,
               batch: MiniBatch, ds: Dataset, fam: AugmentationFamily) -> float:
    """Classical in-batch softmax loss with the SUM normalizer.

    -sim(pos)/tau + ln( sum over in-batch negative views of exp(sim/tau) ),
    anchored at view aug_a with positive partner view aug_b.
    """
    members = _member_views(ds, fam, i, batch)
    va = apply_augmentation(fam, aug_a, ds.points[i])
    vb = apply_augmentation(fam, aug_b, ds.points[i])
    E, _ = encoder.encode_batch(params, np.concatenate([va[None, :], vb[None, :], members]))
    pos = float(E[0] @ E[1])
    sims = E[2:] @ E[0]
    return -pos / cfg.tau + float(np.log(np.sum(np.exp(sims / cfg.tau))))


def global_loss_v1(params, cfg: GlobalObjectiveConfig, i: int, aug_a: int, aug_b: int,
                   ds: Dataset, fam: AugmentationFamily) -> float:
    """Tau-scaled per-pair global loss with the augmentation average outside the log."""
    va = apply_augmentation(fam, aug_a, ds.points[i])
    vb = apply_augmentation(fam, aug_b, ds.points[i])
    E, _ = encoder.encode_batch(params, np.stack([va, vb]))
    pos = float(E[0] @ E[1])
    g = g_exact(params, cfg, i, aug_a, ds, fam)
    return -pos + cfg.tau * float(np.log(cfg.eps0 + g))


def global_loss_v2(params, cfg: GlobalObjectiveConfig, i: int, aug_a: int, aug_b: int,
                   ds: Dataset, fam: AugmentationFamily) -> float:
    """As global_loss_v1 but the log argument averages g over all K views first."""
    va = apply_augmentation(fam, aug_a, ds.points[i])
    vb = apply_augmentation(fam, aug_b, ds.points[i])
    E, _ = encoder.encode_batch(params, np.stack([va, vb]))
    pos = float(E[0] @ E[1])
    gmean = np.mean([g_exact(params, cfg, i, k, ds, fam) for k in range(fam.K)])
    return -pos + cfg.tau * float(np.log(cfg.eps0 + gmean))


def _oracle_core(params, cfg: GlobalObjectiveConfig, ds: Dataset,
                 fam: AugmentationFamily, want_grad: bool):
    n, K = ds.n, fam.K
    if n * K > ORACLE_GUARD:
        raise OracleSizeError(f"oracle enumeration needs n*K <= {ORACLE_GUARD}, got {n * K}")
    X = all_views(ds, fam)
    E, cache = encoder.encode_batch(params, X)
    S = E @ E.T
    block = np.repeat(np.arange(n), K)
    same = block[:, None] == block[None, :]
    neg_exp = np.where(same, 0.0, np.exp(S / cfg.tau))
    set_size = (n - 1) * K
    gbar = neg_exp.sum(axis=1) / set_size            # (nK,)
    per_sample_g = gbar.reshape(n, K)
    ubar = per_sample_g.mean(axis=1)                 # (n,)

    align = -(S * same).sum() / (n * K * K)
    if cfg.version == "v1":
        contrast = cfg.tau * float(np.mean(np.log(cfg.eps0 + gbar)))
        denom_row = cfg.eps0 + gbar
    else:
        contrast = cfg.tau * float(np.mean(np.log(cfg.eps0 + ubar)))
        denom_row = cfg.eps0 + ubar[block]
    value = float(align + contrast)
    if not want_grad:
        return value, None, per_sample_g

    C = np.where(same, -1.0 / (n * K * K), 0.0)
    C += neg_exp / (denom_row[:, None] * set_size * n * K)
    cot = (C + C.T) @ E
    grad = encoder.backward_batch(params, cache, cot)
    return value, grad, per_sample_g


def oracle_F(params, cfg: GlobalObjectiveConfig, ds: Dataset,
             fam: AugmentationFamily) -> OracleResult:
    """Exact full-enumeration objective value and gradient.

    value = -(1/(n K^2)) sum_{i,k,k'} sim(e_ik, e_ik')
            + (1/n) sum_i  [ v1: (1/K) sum_k f(gbar_ik) | v2: f(mean_k gbar_ik) ]

    The alignment term averages over ordered view pairs including k = k'.
    Refuses instances with n*K above the enumeration guard.
    """
    value, grad, per_sample_g = _oracle_core(params, cfg, ds, fam, want_grad=True)
    return OracleResult(value=value, grad=grad, per_sample_g=per_sample_g)


def oracle_value(params, cfg: GlobalObjectiveConfig, ds: Dataset,
                 fam: AugmentationFamily) -> float:
    """Objective value only (cheaper path for finite-difference checks)."""
    value, _, _ = _oracle_core(params, cfg, ds, fam, want_grad=False)
    return value


def aug_consistency_eps(params, ds: Dataset, fam: AugmentationFamily, i: int) -> float:
    """Mean squared spread of sample i's view similarities against its negatives.

    Exact triple average over ordered view pairs (k, k') including k = k' and
    all members z of the negative set:
    (1/K^2) sum_{k,k'} (1/|S_i|) sum_z (sim(e_ik, z) - sim(e_ik', z))^2.
    Zero when K = 1 or all perturbations coincide.
    """
    X = all_views(ds, fam)
    E, _ = encoder.encode_batch(params, X)
    n, K = ds.n, fam.K
    block_rows = E[i * K:(i + 1) * K]
    sims = block_rows @ E.T                           # (K, nK)
    mask = np.ones(n * K, dtype=bool)
    mask[i * K:(i + 1) * K] = False
    R = sims[:, mask]                                 # (K, (n-1)K)
    # (1/K^2) sum_{k,k'} (a_k - a_k')^2 = 2 * population variance over k
    return float(np.mean(2.0 * R.var(axis=0)))


def aug_consistency_eps_mean(params, ds: Dataset, fam: AugmentationFamily) -> float:
    """Mean of aug_consistency_eps over all samples (one shared embedding pass)."""
    X = all_views(ds, fam)
    E, _ = encoder.encode_batch(params, X)
    n, K = ds.n, fam.K
    S = E @ E.T
    total = 0.0
    for i in range(n):
        rows = S[i * K:(i + 1) * K]
        mask = np.ones(n * K, dtype=bool)
        mask[i * K:(i + 1) * K] = False
        total += float(np.mean(2.0 * rows[:, mask].var(axis=0)))
    return total / n
