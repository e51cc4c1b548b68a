"""Layered discrete search spaces: architectures, uniform sampling, costs.

An architecture is a plain tuple of operation indices, one per layer.
Indices always refer to a layer's ORIGINAL candidate list; merging
deactivates indices instead of renumbering, so embedding tables and
tabular lookups stay valid across shrinkage.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

Architecture = tuple  # length-L tuple of per-layer op indices


class InvalidArchitectureError(ValueError):
    """Architecture refers to an out-of-range or deactivated operation."""


@dataclass(frozen=True)
class OpDescriptor:
    """One candidate operation: stable id within its layer, name, abstract cost."""

    op_id: int
    name: str
    cost: float

    def __post_init__(self):
        if self.cost < 0:
            raise ValueError(f"op cost must be >= 0, got {self.cost}")


@dataclass
class SearchSpace:
    """L layers, each with a fixed candidate list and a live active mask.

    The candidate lists never change; merging only flips mask entries.
    Reads are safe concurrently; `deactivate_op` is the single mutation
    point and requires exclusive access.
    """

    layers: list  # list of list[OpDescriptor]
    active: list = field(default=None)  # list of np.ndarray[bool], same shapes

    def __post_init__(self):
        if not self.layers:
            raise ValueError("search space needs at least one layer")
        for i, ops in enumerate(self.layers):
            if not ops:
                raise ValueError(f"layer {i} has no candidate operations")
            ids = [op.op_id for op in ops]
            if ids != list(range(len(ops))):
                raise ValueError(f"layer {i}: op ids must be 0..{len(ops) - 1} in order")
        if self.active is None:
            self.active = [np.ones(len(ops), dtype=bool) for ops in self.layers]
        else:
            self.active = [np.asarray(a, dtype=bool).copy() for a in self.active]
            for i, (ops, mask) in enumerate(zip(self.layers, self.active)):
                if len(mask) != len(ops):
                    raise ValueError(f"layer {i}: mask length {len(mask)} != {len(ops)} ops")
                if not mask.any():
                    raise ValueError(f"layer {i} has no active operation")

    @property
    def num_layers(self):
        return len(self.layers)

    @property
    def layer_sizes(self):
        """Original candidate counts per layer (merge-independent)."""
        return [len(ops) for ops in self.layers]

    def active_ids(self, layer):
        return [int(j) for j in np.flatnonzero(self.active[layer])]

    def is_active(self, layer, op_id):
        return bool(self.active[layer][op_id])

    def validate(self, arch):
        """Raise InvalidArchitectureError unless arch is valid and active."""
        if len(arch) != self.num_layers:
            raise InvalidArchitectureError(
                f"architecture length {len(arch)} != {self.num_layers} layers"
            )
        for i, j in enumerate(arch):
            if not 0 <= j < len(self.layers[i]):
                raise InvalidArchitectureError(f"layer {i}: op index {j} out of range")
            if not self.active[i][j]:
                raise InvalidArchitectureError(f"layer {i}: op {j} is deactivated")

    def deactivate_op(self, layer, op_id):
        """Merge transaction: mask out one op. Refuses to empty a layer."""
        if not self.active[layer][op_id]:
            raise ValueError(f"layer {layer}: op {op_id} already inactive")
        if self.active[layer].sum() <= 1:
            raise ValueError(f"layer {layer}: cannot deactivate the last active op")
        self.active[layer][op_id] = False

    def copy(self):
        return SearchSpace(layers=self.layers, active=[a.copy() for a in self.active])

    # -- rank codec: mixed radix over ORIGINAL layer sizes -------------------

    def arch_to_rank(self, arch):
        rank = 0
        for n, j in zip(self.layer_sizes, arch):
            rank = rank * n + j
        return rank

    def rank_to_arch(self, rank):
        out = []
        for n in reversed(self.layer_sizes):
            out.append(rank % n)
            rank //= n
        if rank:
            raise ValueError("rank out of range for this space")
        return tuple(reversed(out))

    def iter_all(self):
        """All architectures of the ORIGINAL space, in rank order."""
        total = 1
        for n in self.layer_sizes:
            total *= n
        for r in range(total):
            yield self.rank_to_arch(r)

    # -- persistence ---------------------------------------------------------

    def to_dict(self):
        return {
            "layers": [
                [{"id": op.op_id, "name": op.name, "cost": op.cost} for op in ops]
                for ops in self.layers
            ],
            "active": [[bool(b) for b in mask] for mask in self.active],
        }

    @classmethod
    def from_dict(cls, d):
        layers = [
            [OpDescriptor(op["id"], op["name"], float(op["cost"])) for op in ops]
            for ops in d["layers"]
        ]
        active = d.get("active")
        return cls(layers=layers, active=active)

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path):
        """Load a space definition from JSON or TOML (by extension)."""
        path = str(path)
        if path.endswith(".toml"):
            with open(path, "rb") as f:
                return cls.from_dict(_toml.load(f))
        with open(path) as f:
            return cls.from_dict(json.load(f))


def make_uniform_space(num_layers, ops_per_layer, costs=None, names=None):
    """Regular space: every layer has the same candidate list.

    costs defaults to 1.0 + op index, giving distinct per-op costs so
    merge tie-breaking is exercised by default.
    """
    if costs is None:
        costs = [1.0 + j for j in range(ops_per_layer)]
    if names is None:
        names = [f"op{j}" for j in range(ops_per_layer)]
    layers = [
        [OpDescriptor(j, names[j], float(costs[j])) for j in range(ops_per_layer)]
        for _ in range(num_layers)
    ]
    return SearchSpace(layers=layers)


def sample_uniform(space, rng):
    """One path, each layer's active ops equiprobable. Never emits a masked op."""
    return tuple(
        int(rng.choice(np.flatnonzero(space.active[i]))) for i in range(space.num_layers)
    )


def sample_uniform_batch(space, rng, size):
    """size iid uniform paths; equivalent to repeated sample_uniform."""
    cols = []
    for i in range(space.num_layers):
        ids = np.flatnonzero(space.active[i])
        cols.append(ids[rng.integers(0, len(ids), size=size)])
    return [tuple(int(c[k]) for c in cols) for k in range(size)]


def arch_cost(space, arch):
    """Sum of selected ops' costs. Raises on invalid/inactive indices."""
    space.validate(arch)
    return float(sum(space.layers[i][j].cost for i, j in enumerate(arch)))


def space_size(space):
    """Product of active counts, exact integer (13^21-scale values stay exact)."""
    size = 1
    for mask in space.active:
        size *= int(mask.sum())
    return size
