"""Tabular ground-truth benchmark and a noisy supernet-evaluation view.

The oracle assigns every architecture a deterministic true quality in
[0, 1] from a seeded additive-utility model (per-(layer, op) utility,
adjacent-layer interactions, deterministic hash jitter).  SupernetSim
wraps it with a progress-scheduled Gaussian noise on the loss, standing
in for validation-set evaluation of a partially trained supernet.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .space import SearchSpace

MAX_MATERIALIZE = 200_000


def _hash_unit(seed, rank):
    """Deterministic value in [-0.5, 0.5) keyed by (seed, rank)."""
    h = hashlib.blake2b(f"{seed}:{rank}".encode(), digest_size=8).digest()
    return int.from_bytes(h, "big") / 2**64 - 0.5


class TabularOracle:
    """Ground-truth quality per architecture; higher is better.

    Either generated on demand from the seeded utility model, or backed
    by an explicit rank -> quality table (imports).  Queries are pure.
    """

    def __init__(self, space, seed=0, interaction_strength=0.0, noise_amp=0.01,
                 duplicate_pairs=(), table=None):
        self.space = space
        self.seed = int(seed)
        self.interaction_strength = float(interaction_strength)
        self.noise_amp = float(noise_amp)
        self.duplicate_pairs = [tuple(p) for p in duplicate_pairs]
        self._table = dict(table) if table is not None else None
        self._qualities = None  # materialized array, rank order
        self._positions = None  # rank -> position in best-first order
        if self._table is None:
            self._init_model()

    def _init_model(self):
        rng = np.random.default_rng(self.seed)
        sizes = self.space.layer_sizes
        self._util = [rng.standard_normal(n) for n in sizes]
        # adjacent-layer interaction terms, one matrix per layer boundary
        self._inter = [
            rng.standard_normal((sizes[i], sizes[i + 1]))
            for i in range(len(sizes) - 1)
        ]
        # duplicate ops contribute identically everywhere
        self._canon = [np.arange(n) for n in sizes]
        for layer, src, dup in self.duplicate_pairs:
            self._canon[layer][dup] = src
            self._util[layer][dup] = self._util[layer][src]
            if layer > 0:
                self._inter[layer - 1][:, dup] = self._inter[layer - 1][:, src]
            if layer < len(sizes) - 1:
                self._inter[layer][dup, :] = self._inter[layer][src, :]
        # calibration: center/scale raw scores so sigmoid output is spread
        probe = np.random.default_rng((self.seed, 0xCA11B))
        scores = [
            self._raw_score(tuple(int(probe.integers(0, n)) for n in sizes))
            for _ in range(2048)
        ]
        self._loc = float(np.mean(scores))
        self._scale = float(np.std(scores)) or 1.0

    def _raw_score(self, arch):
        canon = tuple(int(self._canon[i][j]) for i, j in enumerate(arch))
        s = sum(self._util[i][j] for i, j in enumerate(canon))
        if self.interaction_strength:
            s += self.interaction_strength * sum(
                self._inter[i][canon[i], canon[i + 1]] for i in range(len(canon) - 1)
            )
        if self.noise_amp:
            s += self.noise_amp * _hash_unit(self.seed, self.space.arch_to_rank(canon))
        return s

    def quality(self, arch):
        self.space.validate(arch)
        if self._table is not None:
            return self._table[self.space.arch_to_rank(arch)]
        z = (self._raw_score(arch) - self._loc) / self._scale
        return 1.0 / (1.0 + math.exp(-z))

    # -- full-space views ----------------------------------------------------

    def materializable(self):
        return space_size_original(self.space) <= MAX_MATERIALIZE

    def materialize(self):
        """Qualities of the ORIGINAL space in rank order (cached)."""
        if self._qualities is None:
            total = space_size_original(self.space)
            if total > MAX_MATERIALIZE:
                raise ValueError(f"space too large to materialize ({total} archs)")
            if self._table is not None:
                self._qualities = np.array([self._table[r] for r in range(total)])
            else:
                self._qualities = np.array(
                    [self.quality(self.space.rank_to_arch(r)) for r in range(total)]
                )
        return self._qualities

    def _best_first_positions(self):
        if self._positions is None:
            q = self.materialize()
            order = np.lexsort((np.arange(len(q)), -q))  # quality desc, rank asc
            self._positions = np.empty(len(q), dtype=np.int64)
            self._positions[order] = np.arange(len(q))
        return self._positions

    def percentile_rank(self, arch, sample_size=100_000):
        """Fraction of architectures strictly better (ties by rank); 0 = best.

        Non-materializable spaces fall back to a seeded Monte-Carlo sample
        (standard error ~ 0.5 / sqrt(sample_size)).
        """
        self.space.validate(arch)
        if self.materializable():
            pos = self._best_first_positions()
            total = len(pos)
            return float(pos[self.space.arch_to_rank(arch)]) / total
        q_a = self.quality(arch)
        rng = np.random.default_rng((self.seed, 0x9E7C))
        sizes = self.space.layer_sizes
        better = 0
        for _ in range(sample_size):
            other = tuple(int(rng.integers(0, n)) for n in sizes)
            if self.quality(other) > q_a:
                better += 1
        return better / sample_size

    # -- persistence ---------------------------------------------------------

    def export(self, path):
        q = self.materialize()
        doc = {
            "format": "shrinknas-benchmark-v1",
            "seed": self.seed,
            "interaction_strength": self.interaction_strength,
            "noise_amp": self.noise_amp,
            "duplicate_pairs": [list(p) for p in self.duplicate_pairs],
            "space": self.space.to_dict(),
            "qualities": {str(r): float(q[r]) for r in range(len(q))},
        }
        with open(path, "w") as f:
            json.dump(doc, f, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            doc = json.load(f)
        space = SearchSpace.from_dict(doc["space"])
        table = {int(r): float(v) for r, v in doc["qualities"].items()}
        oracle = cls(space, seed=doc.get("seed", 0), table=table)
        oracle.duplicate_pairs = [tuple(p) for p in doc.get("duplicate_pairs", [])]
        return oracle


def space_size_original(space):
    total = 1
    for n in space.layer_sizes:
        total *= n
    return total


def generate_benchmark(space, seed, interaction_strength=0.0, noise_amp=0.01,
                       duplicate_pairs=()):
    """Seeded synthetic benchmark over `space`; same seed, same table."""
    return TabularOracle(space, seed=seed, interaction_strength=interaction_strength,
                         noise_amp=noise_amp, duplicate_pairs=duplicate_pairs)


def import_nas_bench_macro(path, space):
    """Import an external tabular benchmark: JSON map arch-string -> accuracy.

    Keys are the ops tuple as contiguous digits ("01210212") or
    comma-separated indices; accuracies > 1 are treated as percentages.
    """
    with open(path) as f:
        raw = json.load(f)
    table = {}
    for key, acc in raw.items():
        if "," in key:
            ops = tuple(int(t) for t in key.split(","))
        else:
            ops = tuple(int(c) for c in key)
        space.validate(ops)
        acc = float(acc)
        table[space.arch_to_rank(ops)] = acc / 100.0 if acc > 1.0 else acc
    total = space_size_original(space)
    if len(table) != total:
        raise ValueError(f"benchmark covers {len(table)} of {total} architectures")
    return TabularOracle(space, seed=0, table=table)


@dataclass
class GroundTruthSplit:
    """Top-g fraction by true quality = good (negative class); rest weak."""

    good_fraction: float
    is_weak: np.ndarray  # indexed by canonical rank

    @classmethod
    def from_oracle(cls, oracle, good_fraction=0.10):
        if not 0.0 < good_fraction < 1.0:
            raise ValueError("good fraction must lie in (0, 1)")
        pos = oracle._best_first_positions()
        n_good = math.ceil(good_fraction * len(pos))
        return cls(good_fraction=good_fraction, is_weak=pos >= n_good)

    def label(self, oracle, arch):
        """True if arch is a weak path."""
        return bool(self.is_weak[oracle.space.arch_to_rank(arch)])


class SupernetSim:
    """Noisy evaluation view: loss = (1 - quality) + sigma(tau) * z.

    sigma decays linearly from sigma0 to sigma1 as training progress tau
    goes 0 -> 1; z is a standard normal drawn reproducibly per
    (val_seed, architecture, evaluation event).
    """

    def __init__(self, oracle, sigma0=0.1, sigma1=0.01, total_steps=1, seed=0):
        if sigma1 > sigma0:
            raise ValueError("noise schedule must be nonincreasing (sigma1 <= sigma0)")
        self.oracle = oracle
        self.sigma0 = float(sigma0)
        self.sigma1 = float(sigma1)
        self.total_steps = max(1, int(total_steps))
        self.seed = int(seed)
        self.steps = 0
        self.events = 0

    @property
    def tau(self):
        return min(1.0, self.steps / self.total_steps)

    def sigma(self):
        return self.sigma0 + (self.sigma1 - self.sigma0) * self.tau

    def advance(self, n=1):
        """One (or n) supernet training iterations: progress only, no weights."""
        self.steps += n

    def eval_noisy(self, arch, val_seed=0):
        q = self.oracle.quality(arch)
        s = self.sigma()
        self.events += 1
        if s == 0.0:
            return 1.0 - q
        rank = self.oracle.space.arch_to_rank(arch)
        rng = np.random.default_rng(
            (self.seed, int(val_seed), rank % (2**63), self.events)
        )
        return 1.0 - q + s * float(rng.standard_normal())

    def state(self):
        return {"steps": self.steps, "events": self.events}

    def restore(self, state):
        self.steps = int(state["steps"])
        self.events = int(state["events"])
