"""Greedy supernet-training driver and filter-assisted NSGA-II search.

The driver runs the full loop: uniform warm-up, filtered rejection
sampling, periodic weak-path labeling rounds that fine-tune the filter,
embedding-similarity merges, and the agreement-based early stop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .filter import AdamState, FilterNet, checkpoint_from_obj, checkpoint_obj
from .pu_learning import PUDatasets, VPUConfig, is_weak_batch, train_filter_round
from .shrinkage import (QSchedule, StoppingConfig, label_weak_round,
                        merge_similar_ops, stopping_agreement)
from .space import arch_cost, sample_uniform_batch

_CHUNK = 25  # uniform draws per forward batch in rejection sampling


@dataclass
class TrainConfig:
    total_iterations: int = 2400
    # schedule shape follows a 120-epoch run: 20-epoch warm-up, rounds
    # every 5 epochs, q ramp over 90 epochs; fractions keep that shape
    # at any scale
    warmup_frac: float = 1.0 / 6.0
    round_interval_frac: float = 1.0 / 24.0
    eval_paths_per_round: int = 1000
    q_schedule: QSchedule = field(default_factory=QSchedule)
    rejection_cap: int = 100
    decision_threshold: float = 0.5
    merge_threshold: float = 0.8
    hidden: int = 128
    vpu: VPUConfig = field(default_factory=VPUConfig)
    stopping: StoppingConfig = field(default_factory=StoppingConfig)
    unlabeled_per_positive: int = 10

    def __post_init__(self):
        if self.total_iterations < 1 or not 0.0 <= self.warmup_frac < 1.0:
            raise ValueError("invalid training configuration")
        if self.rejection_cap < 1:
            raise ValueError("rejection cap must be >= 1")

    @property
    def warmup_iterations(self):
        return int(self.total_iterations * self.warmup_frac)

    @property
    def round_interval(self):
        return max(1, round(self.total_iterations * self.round_interval_frac))


def sample_accepted(space, net, threshold, rejection_cap, rng):
    """Uniform draws until one is not predicted weak; capped with fallback.

    With net=None (warm-up) the first draw is returned.  After
    rejection_cap rejections the least-weak rejected draw (lowest phi)
    is returned instead, so the loop always terminates.
    Returns (architecture, rejection_count).
    """
    if net is None:
        return sample_uniform_batch(space, rng, _CHUNK)[0], 0
    rejections = 0
    best_arch, best_phi = None, np.inf
    while True:
        chunk = sample_uniform_batch(space, rng, _CHUNK)
        phi = net.predict(chunk)
        for a, v in zip(chunk, phi):
            if v <= threshold:
                return a, rejections
            rejections += 1
            if v < best_phi:
                best_arch, best_phi = a, float(v)
            if rejections >= rejection_cap:
                return best_arch, rejections


class GreedyTrainer:
    """Stateful driver; snapshot/restore makes runs resumable bit-exactly."""

    def __init__(self, space, sim, cfg, seed, split=None):
        self.space = space
        self.sim = sim
        self.cfg = cfg
        self.seed = int(seed)
        self.split = split  # optional ground truth for per-round metrics
        self.net = FilterNet(space.num_layers, max(space.layer_sizes),
                             hidden=cfg.hidden, seed=seed)
        self.adam = AdamState().init_like(self.net)
        self.datasets = PUDatasets()
        self.rng_sample = np.random.default_rng((seed, 1))
        self.rng_round = np.random.default_rng((seed, 2))
        self.iteration = 0
        self.round_idx = 0
        self.filter_trained = False
        self.stopped = False
        self.events = []
        self.accepted_ranks = []
        self.rejection_total = 0

    # -- main loop -----------------------------------------------------------

    def run(self, pause_at=None):
        cfg = self.cfg
        while (self.iteration < cfg.total_iterations and not self.stopped
               and (pause_at is None or self.iteration < pause_at)):
            self.iteration += 1
            net = self.net if self.filter_trained else None
            arch, rejections = sample_accepted(
                self.space, net, cfg.decision_threshold, cfg.rejection_cap,
                self.rng_sample,
            )
            self.rejection_total += rejections
            self.accepted_ranks.append(self.space.arch_to_rank(arch))
            self.sim.advance()  # "train supernet for one iteration"
            if (self.iteration % cfg.round_interval == 0
                    and self.iteration > cfg.warmup_iterations):
                self._round()
        return self

    def _round(self):
        cfg = self.cfg
        self.round_idx += 1
        q = cfg.q_schedule.value(self.iteration / cfg.total_iterations)
        round_rec = label_weak_round(
            self.sim, self.space, cfg.eval_paths_per_round, q,
            val_seed=self.round_idx, rng=self.rng_round,
        )
        new_pos = round_rec.positives
        new_unl = sample_uniform_batch(
            self.space, self.rng_round, cfg.unlabeled_per_positive * len(new_pos)
        )
        self.datasets.extend(new_pos, new_unl, round_idx=self.round_idx)
        prev = self.net.copy() if self.filter_trained else None
        train_filter_round(self.net, self.adam, self.datasets, cfg.vpu, self.rng_round)
        self.filter_trained = True
        merges = merge_similar_ops(self.space, self.net, cfg.merge_threshold,
                                   round_idx=self.round_idx)
        u = None
        if prev is not None:
            u = stopping_agreement(self.net, prev, self.space,
                                   cfg.stopping.probe_size, self.rng_round,
                                   cfg.decision_threshold)
            if u > cfg.stopping.agreement_threshold:
                self.stopped = True
        event = {
            "type": "round",
            "round": self.round_idx,
            "iteration": self.iteration,
            "q": q,
            "q_capped": round_rec.capped,
            "new_positives": len(new_pos),
            "positives_total": len(self.datasets.positives),
            "unlabeled_total": len(self.datasets.unlabeled),
            "merges": [[m.layer, m.kept, m.removed, m.similarity] for m in merges],
            "agreement": u,
            "stopped": self.stopped,
            "rejections_so_far": self.rejection_total,
        }
        if self.split is not None:
            event.update(self._full_space_metrics())
        self.events.append(event)

    def _full_space_metrics(self):
        from .metrics import precision_recall  # local: avoids cycle at import
        oracle = self.sim.oracle
        archs = [self.space.rank_to_arch(r) for r in range(len(self.split.is_weak))]
        pred = is_weak_batch(self.net, archs, self.cfg.decision_threshold)
        report = precision_recall(self.split.is_weak, pred)
        return {"precision": report["precision"], "recall": report["recall"],
                "f1": report["f1"]}

    # -- persistence ---------------------------------------------------------

    def state_obj(self):
        return {
            "iteration": self.iteration,
            "round_idx": self.round_idx,
            "filter_trained": self.filter_trained,
            "stopped": self.stopped,
            "events": self.events,
            "accepted_ranks": [int(r) for r in self.accepted_ranks],
            "rejection_total": self.rejection_total,
            "checkpoint": checkpoint_obj(self.net, self.adam),
            "datasets": self.datasets.to_obj(),
            "active": [[bool(b) for b in mask] for mask in self.space.active],
            "rng_sample": _rng_state(self.rng_sample),
            "rng_round": _rng_state(self.rng_round),
            "sim": self.sim.state(),
        }

    def restore(self, obj):
        self.iteration = obj["iteration"]
        self.round_idx = obj["round_idx"]
        self.filter_trained = obj["filter_trained"]
        self.stopped = obj["stopped"]
        self.events = obj["events"]
        self.accepted_ranks = list(obj["accepted_ranks"])
        self.rejection_total = obj["rejection_total"]
        self.net, self.adam, _ = checkpoint_from_obj(obj["checkpoint"])
        self.datasets = PUDatasets.from_obj(obj["datasets"])
        for i, mask in enumerate(obj["active"]):
            self.space.active[i] = np.asarray(mask, dtype=bool)
        _set_rng_state(self.rng_sample, obj["rng_sample"])
        _set_rng_state(self.rng_round, obj["rng_round"])
        self.sim.restore(obj["sim"])
        return self


def _rng_state(rng):
    st = rng.bit_generator.state
    return {"bit_generator": st["bit_generator"],
            "state": int(st["state"]["state"]), "inc": int(st["state"]["inc"]),
            "has_uint32": int(st["has_uint32"]), "uinteger": int(st["uinteger"])}


def _set_rng_state(rng, obj):
    rng.bit_generator.state = {
        "bit_generator": obj["bit_generator"],
        "state": {"state": int(obj["state"]), "inc": int(obj["inc"])},
        "has_uint32": int(obj["has_uint32"]), "uinteger": int(obj["uinteger"]),
    }


def run_greedy_training(space, sim, cfg, seed, split=None):
    """Full Algorithm-style training loop; returns the finished trainer."""
    return GreedyTrainer(space, sim, cfg, seed, split=split).run()


# -- evolutionary search -----------------------------------------------------

@dataclass
class EvoConfig:
    population_size: int = 50
    eval_budget: int = 500    # oracle evaluations; filter predictions are free
    crossover_rate: float = 0.9
    mutation_rate: float = None  # per gene; None -> 1 / num_layers
    cost_limit: float = None     # hard FLOP-unit constraint, None = off
    use_filter: bool = True
    decision_threshold: float = 0.5
    filter_retries: int = 50     # per offspring before accepting a weak one
    init_retries: int = 10_000   # feasibility attempts before declaring infeasible

    def __post_init__(self):
        if self.population_size < 4 or self.population_size % 2:
            raise ValueError("population must be even and >= 4")
        if self.eval_budget < 1:
            raise ValueError("evaluation budget must be positive")


def dominates(a, b):
    """(quality, cost) dominance: maximize quality, minimize cost."""
    return (a[0] >= b[0] and a[1] <= b[1]) and (a[0] > b[0] or a[1] < b[1])


def pareto_front(entries):
    """Non-dominated subset of (arch, quality, cost) entries."""
    front = []
    for e in entries:
        if not any(dominates((o[1], o[2]), (e[1], e[2])) for o in entries if o is not e):
            front.append(e)
    return front


def _fast_non_dominated_sort(objs):
    n = len(objs)
    S = [[] for _ in range(n)]
    counts = [0] * n
    fronts = [[]]
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if dominates(objs[i], objs[j]):
                S[i].append(j)
            elif dominates(objs[j], objs[i]):
                counts[i] += 1
        if counts[i] == 0:
            fronts[0].append(i)
    k = 0
    while fronts[k]:
        nxt = []
        for i in fronts[k]:
            for j in S[i]:
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(j)
        k += 1
        fronts.append(nxt)
    return fronts[:-1]


def _crowding(objs, front):
    dist = {i: 0.0 for i in front}
    for dim in range(2):
        order = sorted(front, key=lambda i: objs[i][dim])
        lo, hi = objs[order[0]][dim], objs[order[-1]][dim]
        dist[order[0]] = dist[order[-1]] = np.inf
        if hi == lo:
            continue
        for a, b, c in zip(order, order[1:], order[2:]):
            dist[b] += (objs[c][dim] - objs[a][dim]) / (hi - lo)
    return dist


class _Eval:
    """Budget-audited noisy evaluation."""

    def __init__(self, sim, budget, val_seed=0xEA):
        self.sim = sim
        self.budget = budget
        self.used = 0
        self.val_seed = val_seed

    @property
    def remaining(self):
        return self.budget - self.used

    def __call__(self, arch):
        if self.used >= self.budget:
            raise RuntimeError("oracle evaluation budget exhausted")
        self.used += 1
        return 1.0 - self.sim.eval_noisy(arch, self.val_seed)


def nsga2_search(space, sim, net, cfg, seed):
    """NSGA-II over (maximize evaluated quality, minimize cost).

    Candidates breaking the hard cost constraint are discarded before
    evaluation; with the filter on, predicted-weak candidates are
    regenerated (bounded) before evaluation.  Consumes exactly
    cfg.eval_budget oracle evaluations unless the space is smaller.

    Returns a result dict: final "front", "best", per-generation fronts
    for auditing, and the exact evaluation count.
    """
    if cfg.use_filter and net is None:
        raise ValueError("filter-assisted search needs a trained filter")
    rng = np.random.default_rng((seed, 0xE5))
    ev = _Eval(sim, cfg.eval_budget)
    mut_rate = cfg.mutation_rate or 1.0 / space.num_layers

    def feasible(arch):
        return cfg.cost_limit is None or arch_cost(space, arch) <= cfg.cost_limit

    def weak(arch):
        return (cfg.use_filter
                and float(net.predict([arch])[0]) > cfg.decision_threshold)

    def random_feasible():
        for _ in range(cfg.init_retries):
            a = sample_uniform_batch(space, rng, 1)[0]
            if feasible(a):
                return a
        raise RuntimeError("no architecture satisfies the cost constraint")

    def fresh_candidate():
        a = random_feasible()
        for _ in range(cfg.filter_retries):
            if not weak(a):
                break
            a = random_feasible()
        return a

    def make_offspring(pop, objs, fronts_of, crowd):
        def tourney():
            i, j = rng.integers(0, len(pop), size=2)
            if fronts_of[i] != fronts_of[j]:
                return pop[i] if fronts_of[i] < fronts_of[j] else pop[j]
            return pop[i] if crowd[i] >= crowd[j] else pop[j]

        for _ in range(cfg.filter_retries):
            p1, p2 = tourney(), tourney()
            if rng.random() < cfg.crossover_rate:
                child = tuple(p1[t] if rng.random() < 0.5 else p2[t]
                              for t in range(space.num_layers))
            else:
                child = tuple(p1)
            child = list(child)
            for t in range(space.num_layers):
                if rng.random() < mut_rate:
                    ids = space.active_ids(t)
                    child[t] = int(ids[rng.integers(0, len(ids))])
            child = tuple(child)
            if feasible(child) and not weak(child):
                return child
        return fresh_candidate()  # bounded retries exhausted: accept fresh draw

    # initial population
    pop_size = min(cfg.population_size, cfg.eval_budget)
    pop = [fresh_candidate() for _ in range(pop_size)]
    quality = [ev(a) for a in pop]
    cost = [arch_cost(space, a) for a in pop]
    generation_fronts = []

    while ev.remaining > 0:
        objs = list(zip(quality, cost))
        fronts = _fast_non_dominated_sort(objs)
        fronts_of = {}
        crowd = {}
        for fi, front in enumerate(fronts):
            for i in front:
                fronts_of[i] = fi
            crowd.update(_crowding(objs, front))
        n_off = min(pop_size, ev.remaining)
        offspring = [make_offspring(pop, objs, fronts_of, crowd) for _ in range(n_off)]
        off_quality = [ev(a) for a in offspring]
        off_cost = [arch_cost(space, a) for a in offspring]
        pool = pop + offspring
        pool_q = quality + off_quality
        pool_c = cost + off_cost
        pool_objs = list(zip(pool_q, pool_c))
        fronts = _fast_non_dominated_sort(pool_objs)
        survivors = []
        for front in fronts:
            if len(survivors) + len(front) <= pop_size:
                survivors.extend(front)
            else:
                cd = _crowding(pool_objs, front)
                ranked = sorted(front, key=lambda i: -cd[i])
                survivors.extend(ranked[: pop_size - len(survivors)])
                break
        pop = [pool[i] for i in survivors]
        quality = [pool_q[i] for i in survivors]
        cost = [pool_c[i] for i in survivors]
        generation_fronts.append(
            pareto_front(list(zip(pop, quality, cost)))
        )

    final_entries = list(zip(pop, quality, cost))
    front = pareto_front(final_entries)
    best = max(final_entries, key=lambda e: e[1])
    return {
        "front": front,
        "best": best,
        "generation_fronts": generation_fronts,
        "evaluations": ev.used,
    }


def report_percentile_histogram(accepted_ranks, oracle, bins=20):
    """Percentile ranks of sampled training paths, bucketed for plotting."""
    space = oracle.space
    ranks = [oracle.percentile_rank(space.rank_to_arch(r)) for r in accepted_ranks]
    counts, edges = np.histogram(ranks, bins=bins, range=(0.0, 1.0))
    return {
        "mean": float(np.mean(ranks)),
        "median": float(np.median(ranks)),
        "counts": counts.tolist(),
        "edges": edges.tolist(),
    }
