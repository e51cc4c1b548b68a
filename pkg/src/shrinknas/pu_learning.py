"""PU objectives (variational primary; unbiased-risk and PN baselines)
and the filter-training loop over positive (weak-path) and unlabeled sets.

The positive class is ALWAYS "weak path" here and in every metric
downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .filter import accumulate, adam_step


@dataclass
class PUDatasets:
    """Positive (confidently weak) and unlabeled architecture pools.

    Duplicates are legal: pools are sampled with replacement.  provenance
    records the evaluation round that produced each positive.
    """

    positives: list = field(default_factory=list)
    unlabeled: list = field(default_factory=list)
    provenance: list = field(default_factory=list)
    unlabeled_cap: int = 50_000

    def extend(self, new_positives, new_unlabeled, round_idx=0):
        self.positives.extend(tuple(a) for a in new_positives)
        self.provenance.extend([round_idx] * len(new_positives))
        self.unlabeled.extend(tuple(a) for a in new_unlabeled)
        if len(self.unlabeled) > self.unlabeled_cap:  # FIFO eviction
            self.unlabeled = self.unlabeled[-self.unlabeled_cap:]

    def to_obj(self):
        return {
            "positives": [list(a) for a in self.positives],
            "unlabeled": [list(a) for a in self.unlabeled],
            "provenance": list(self.provenance),
            "unlabeled_cap": self.unlabeled_cap,
        }

    @classmethod
    def from_obj(cls, obj):
        return cls(
            positives=[tuple(a) for a in obj["positives"]],
            unlabeled=[tuple(a) for a in obj["unlabeled"]],
            provenance=list(obj["provenance"]),
            unlabeled_cap=obj.get("unlabeled_cap", 50_000),
        )


@dataclass
class VPUConfig:
    mix_beta: float = 0.3       # Beta(sigma, sigma) mix-weight distribution
    reg_weight: float = 0.2     # lambda on the consistency term
    batch_size: int = 1024
    iterations: int = 3000

    def __post_init__(self):
        if self.mix_beta <= 0 or self.reg_weight < 0 or self.batch_size < 2:
            raise ValueError("invalid VPU configuration")


@dataclass
class UPUConfig:
    class_prior: float = 0.9  # proportion of positives (weak) in unlabeled data

    def __post_init__(self):
        if not 0.0 < self.class_prior < 1.0:
            raise ValueError("class prior must lie in (0, 1)")


# -- losses ------------------------------------------------------------------

def vpu_variational_loss(net, batch_p, batch_u):
    """log(mean_U[phi]) - mean_P[log phi], with analytic parameter gradients."""
    if not len(batch_p) or not len(batch_u):
        raise ValueError("variational loss needs nonempty positive and unlabeled batches")
    phi_p, cache_p = net.forward(batch_p)
    phi_u, cache_u = net.forward(batch_u)
    loss = float(np.log(np.mean(phi_u)) - np.mean(np.log(phi_p)))
    grads = net.backward(cache_u, np.full(len(batch_u), 1.0 / phi_u.sum()))
    accumulate(grads, net.backward(cache_p, -1.0 / (len(batch_p) * phi_p)))
    return loss, grads


def vpu_mixup_regularizer(net, pairs_p, pairs_u, gammas):
    """Consistency term on embedding-level mixes of (positive, unlabeled) pairs.

    Per pair: target = gamma * 1 + (1 - gamma) * phi(unlabeled), held
    constant (stop-gradient); loss = (log target - log phi(mix))^2,
    averaged over pairs.  Gradient flows only through the mixed forward.
    """
    gammas = np.asarray(gammas, dtype=float)
    n = len(gammas)
    phi_u = net.predict(pairs_u)  # detached target component
    target = gammas + (1.0 - gammas) * phi_u
    phi_mix, cache = net.forward_mixed(pairs_p, pairs_u, gammas)
    diff = np.log(target) - np.log(phi_mix)
    loss = float(np.mean(diff * diff))
    grads = net.backward(cache, -2.0 * diff / (phi_mix * n))
    return loss, grads


def vpu_total_loss(net, batch_p, batch_u, gammas, cfg, frozen_targets=None):
    """Complete objective: L_var + lambda * L_reg, with gradients.

    frozen_targets overrides the stop-gradient targets of the
    consistency term (used by finite-difference audits, which must hold
    the detached values fixed while perturbing parameters).
    """
    l_var, grads = vpu_variational_loss(net, batch_p, batch_u)
    n = min(len(batch_p), len(batch_u), len(gammas))
    gam = np.asarray(gammas[:n], dtype=float)
    pp, uu = batch_p[:n], batch_u[:n]
    if frozen_targets is None:
        phi_u = net.predict(uu)
        target = gam + (1.0 - gam) * phi_u
    else:
        target = np.asarray(frozen_targets[:n], dtype=float)
    phi_mix, cache = net.forward_mixed(pp, uu, gam)
    diff = np.log(target) - np.log(phi_mix)
    l_reg = float(np.mean(diff * diff))
    if cfg.reg_weight:
        accumulate(grads, net.backward(cache, -2.0 * diff / (phi_mix * n)),
                   scale=cfg.reg_weight)
    return l_var + cfg.reg_weight * l_reg, l_var, l_reg, grads


def upu_risk(net, batch_p, batch_u, cfg):
    """Unbiased PU risk: pi * mean_P[l+ - l-] + mean_U[l-]; may go negative.

    l+(phi) = -log phi, l-(phi) = -log(1 - phi).  The unclamped estimator
    is kept as the documented overfitting-prone baseline.
    """
    pi = cfg.class_prior
    phi_p, cache_p = net.forward(batch_p)
    phi_u, cache_u = net.forward(batch_u)
    loss = float(pi * np.mean(-np.log(phi_p) + np.log(1.0 - phi_p))
                 - np.mean(np.log(1.0 - phi_u)))
    grads = net.backward(
        cache_p, pi / len(batch_p) * (-1.0 / phi_p - 1.0 / (1.0 - phi_p))
    )
    accumulate(grads, net.backward(cache_u, 1.0 / (len(batch_u) * (1.0 - phi_u))))
    return loss, grads


def pn_supervised_loss(net, batch_p, batch_n, class_prior=0.5):
    """Class-weighted binary cross-entropy against ground-truth labels."""
    if batch_n is None:
        raise ValueError("PN training needs ground-truth negatives")
    pi = class_prior
    phi_p, cache_p = net.forward(batch_p)
    phi_n, cache_n = net.forward(batch_n)
    loss = float(-pi * np.mean(np.log(phi_p)) - (1 - pi) * np.mean(np.log(1.0 - phi_n)))
    grads = net.backward(cache_p, -pi / (len(batch_p) * phi_p))
    accumulate(grads, net.backward(cache_n, (1 - pi) / (len(batch_n) * (1.0 - phi_n))))
    return loss, grads


# -- training loops ----------------------------------------------------------

def _draw(rng, pool, size):
    idx = rng.integers(0, len(pool), size=size)
    return [pool[i] for i in idx]


def train_filter_round(net, adam, datasets, cfg, rng):
    """cfg.iterations Adam steps of the complete VPU objective.

    Batches are drawn with replacement each iteration; mix weights are
    fresh Beta(sigma, sigma) draws per pair.  Returns the per-iteration
    (l_var, l_reg, total) trace.
    """
    if not datasets.positives or not datasets.unlabeled:
        raise ValueError("training needs nonempty positive and unlabeled pools")
    trace = []
    for _ in range(cfg.iterations):
        bp = _draw(rng, datasets.positives, cfg.batch_size)
        bu = _draw(rng, datasets.unlabeled, cfg.batch_size)
        gammas = rng.beta(cfg.mix_beta, cfg.mix_beta, size=cfg.batch_size)
        total, l_var, l_reg, grads = vpu_total_loss(net, bp, bu, gammas, cfg)
        adam_step(net, adam, grads)
        trace.append((l_var, l_reg, total))
    return trace


def train_upu_round(net, adam, datasets, cfg, upu_cfg, rng):
    """uPU baseline loop; same sampling scheme, no consistency term."""
    trace = []
    for _ in range(cfg.iterations):
        bp = _draw(rng, datasets.positives, cfg.batch_size)
        bu = _draw(rng, datasets.unlabeled, cfg.batch_size)
        loss, grads = upu_risk(net, bp, bu, upu_cfg)
        adam_step(net, adam, grads)
        trace.append((loss, 0.0, loss))
    return trace


def train_pn_round(net, adam, positives, negatives, cfg, rng, class_prior=0.5):
    """Fully supervised baseline: needs ground-truth negative examples."""
    trace = []
    for _ in range(cfg.iterations):
        bp = _draw(rng, positives, cfg.batch_size)
        bn = _draw(rng, negatives, cfg.batch_size)
        loss, grads = pn_supervised_loss(net, bp, bn, class_prior)
        adam_step(net, adam, grads)
        trace.append((loss, 0.0, loss))
    return trace


# -- prediction --------------------------------------------------------------

def is_weak(net, arch, threshold=0.5):
    """Positive (weak) iff phi strictly exceeds the threshold."""
    return bool(net.predict([tuple(arch)])[0] > threshold)


def is_weak_batch(net, archs, threshold=0.5):
    return net.predict(archs) > threshold
