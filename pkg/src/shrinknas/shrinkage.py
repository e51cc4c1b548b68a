"""Search-space shrinkage: multi-path weak labeling, embedding-similarity
operation merging, and the filter-agreement stopping rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pu_learning import is_weak_batch
from .space import sample_uniform_batch


@dataclass
class QSchedule:
    """Weak-path prior ramp: linear start -> end over ramp_frac of the run."""

    start: float = 0.5
    end: float = 0.99
    ramp_frac: float = 0.75

    def __post_init__(self):
        if not (0.0 < self.start <= self.end < 1.0) or not (0.0 < self.ramp_frac <= 1.0):
            raise ValueError("invalid weak-prior schedule")

    def value(self, progress):
        t = min(max(progress, 0.0), self.ramp_frac) / self.ramp_frac
        return self.start + (self.end - self.start) * t


@dataclass
class WeakLabelRound:
    """One multi-path evaluation round, sorted ascending by loss."""

    paths: list            # ascending loss order
    losses: list
    weak_fraction: float
    num_positive: int
    capped: bool = False   # positive count reduced to leave one path unlabeled

    @property
    def positives(self):
        return self.paths[len(self.paths) - self.num_positive:]

    @property
    def remainder(self):
        return self.paths[: len(self.paths) - self.num_positive]


def label_weak_round(sim, space, m, q, val_seed, rng, cap_full_sample=True):
    """Sample m uniform paths, evaluate once each, mark the worst ceil(q*m) weak.

    Ties in loss break by canonical rank.  With cap_full_sample (default)
    a round that would label the entire sample weak keeps one path
    unlabeled, flagged in the returned record.
    """
    if m < 2 or not 0.0 < q < 1.0:
        raise ValueError("need m >= 2 and q in (0, 1)")
    paths = sample_uniform_batch(space, rng, m)
    losses = [sim.eval_noisy(a, val_seed) for a in paths]
    order = sorted(range(m), key=lambda i: (losses[i], space.arch_to_rank(paths[i])))
    n_pos = math.ceil(q * m)
    capped = False
    if cap_full_sample and n_pos >= m:
        n_pos = m - 1
        capped = True
    return WeakLabelRound(
        paths=[paths[i] for i in order],
        losses=[losses[i] for i in order],
        weak_fraction=q,
        num_positive=n_pos,
        capped=capped,
    )


def cosine_similarity(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx = np.linalg.norm(x)
    ny = np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        raise ValueError("cosine similarity undefined for a zero vector")
    return float(np.dot(x, y) / (nx * ny))


@dataclass(frozen=True)
class MergeRecord:
    layer: int
    kept: int
    removed: int
    similarity: float
    round_idx: int = 0


class _UnionFind:
    def __init__(self, items):
        self.parent = {i: i for i in items}

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def layer_similarity_matrix(net, space, layer):
    """Pairwise cosine similarities among the layer's ACTIVE ops."""
    ids = space.active_ids(layer)
    vecs = np.stack([net.embedding_of(layer, j) for j in ids])
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    unit = vecs / norms
    return ids, unit @ unit.T


def merge_similar_ops(space, net, s_thrd=0.8, round_idx=0):
    """Deactivate near-duplicate ops, keeping each group's cheapest member.

    Pairs of active ops whose embedding cosine similarity EXCEEDS s_thrd
    are grouped transitively (union-find, so the outcome is order-free);
    each group keeps its minimum-cost member (ties: lowest op id) and the
    rest are removed from sampling permanently.  Mutates `space`; returns
    the merge records in (layer, removed id) order.
    """
    if not -1.0 < s_thrd <= 1.0:
        raise ValueError("similarity threshold must lie in (-1, 1]")
    records = []
    for layer in range(space.num_layers):
        ids, sim = layer_similarity_matrix(net, space, layer)
        if len(ids) < 2:
            continue
        uf = _UnionFind(ids)
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                if sim[a, b] > s_thrd:
                    uf.union(ids[a], ids[b])
        groups = {}
        for j in ids:
            groups.setdefault(uf.find(j), []).append(j)
        for members in groups.values():
            if len(members) < 2:
                continue
            keep = min(members, key=lambda j: (space.layers[layer][j].cost, j))
            pos = {j: ids.index(j) for j in members}
            for j in sorted(members):
                if j == keep:
                    continue
                space.deactivate_op(layer, j)
                records.append(MergeRecord(
                    layer=layer, kept=keep, removed=j,
                    similarity=float(sim[pos[keep], pos[j]]), round_idx=round_idx,
                ))
    return records


@dataclass
class StoppingConfig:
    probe_size: int = 10_000
    agreement_threshold: float = 0.9  # stop when u exceeds this
    decision_threshold: float = 0.5   # weak/good cut on phi


def stopping_agreement(net_t, net_prev, space, probe_size, rng, decision_threshold=0.5):
    """Fraction of probe paths where the two filters' thresholded labels agree."""
    probe = sample_uniform_batch(space, rng, probe_size)
    a = is_weak_batch(net_t, probe, decision_threshold)
    b = is_weak_batch(net_prev, probe, decision_threshold)
    return float(np.mean(a == b))


def should_stop(u, cfg):
    return u > cfg.agreement_threshold
