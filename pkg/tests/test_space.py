
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shrinknas.space import (InvalidArchitectureError, OpDescriptor, SearchSpace,
                             arch_cost, make_uniform_space, sample_uniform,
                             sample_uniform_batch, space_size)


def test_degenerate_space_samples_unique_arch():
    space = make_uniform_space(3, 1)
    rng = np.random.default_rng(0)
    for _ in range(10):
        assert sample_uniform(space, rng) == (0, 0, 0)


def test_uniform_marginals():
    space = make_uniform_space(8, 3)
    rng = np.random.default_rng(42)
    n = 300_000
    batch = sample_uniform_batch(space, rng, n)
    ops = np.array(batch)
    for layer in range(8):
        for op in range(3):
            freq = np.mean(ops[:, layer] == op)
            assert abs(freq - 1 / 3) < 0.01


def test_masked_op_never_sampled():
    space = make_uniform_space(4, 3)
    space.deactivate_op(0, 2)
    rng = np.random.default_rng(1)
    batch = sample_uniform_batch(space, rng, 50_000)
    assert all(a[0] != 2 for a in batch)


def test_arch_cost_hand_sums():
    zero = make_uniform_space(4, 2, costs=[0.0, 0.0])
    assert arch_cost(zero, (0, 1, 1, 0)) == 0.0
    layers = [
        [OpDescriptor(0, "a", 1.0), OpDescriptor(1, "b", 2.0)],
        [OpDescriptor(0, "c", 3.0), OpDescriptor(1, "d", 4.0)],
    ]
    space = SearchSpace(layers=layers)
    assert arch_cost(space, (1, 0)) == 5.0


def test_arch_cost_matches_independent_resummation():
    rng = np.random.default_rng(5)
    costs = rng.uniform(0, 10, size=5)
    space = make_uniform_space(6, 5, costs=list(costs))
    for _ in range(50):
        a = sample_uniform(space, rng)
        expected = sum(costs[j] for j in a)
        assert arch_cost(space, a) == pytest.approx(expected, abs=1e-12)


def test_arch_cost_rejects_invalid():
    space = make_uniform_space(3, 2)
    with pytest.raises(InvalidArchitectureError):
        arch_cost(space, (0, 5, 0))
    space.deactivate_op(1, 1)
    with pytest.raises(InvalidArchitectureError):
        arch_cost(space, (0, 1, 0))


def test_space_size_exact_big_integer():
    space = make_uniform_space(21, 13)
    assert space_size(space) == 13**21
    assert space_size(space) == 247064529073450392704413  # ~2e23
    assert space_size(make_uniform_space(5, 1)) == 1
    assert space_size(make_uniform_space(8, 3)) == 6561


def test_space_size_decreases_on_merge():
    space = make_uniform_space(8, 3)
    before = space_size(space)
    space.deactivate_op(2, 0)
    assert space_size(space) == before * 2 // 3


def test_rank_roundtrip_whole_space():
    space = make_uniform_space(8, 3)
    for r in range(6561):
        assert space.arch_to_rank(space.rank_to_arch(r)) == r


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 3)), max_size=10),
       st.integers(0, 2**31 - 1))
def test_merge_sequences_never_leak_masked_ops(merges, seed):
    space = make_uniform_space(5, 4)
    for layer, op in merges:
        if space.active[layer].sum() > 1 and space.is_active(layer, op):
            space.deactivate_op(layer, op)
    rng = np.random.default_rng(seed)
    for a in sample_uniform_batch(space, rng, 200):
        space.validate(a)


def test_cannot_empty_a_layer():
    space = make_uniform_space(2, 2)
    space.deactivate_op(0, 0)
    with pytest.raises(ValueError):
        space.deactivate_op(0, 1)


def test_save_load_roundtrip(tmp_path):
    space = make_uniform_space(4, 3)
    space.deactivate_op(1, 2)
    path = tmp_path / "space.json"
    space.save(path)
    loaded = SearchSpace.load(path)
    assert loaded.to_dict() == space.to_dict()


def test_toml_space_file(tmp_path):
    path = tmp_path / "space.toml"
    path.write_text(
        'layers = [\n'
        '  [ {id = 0, name = "a", cost = 1.0} ],\n'
        '  [ {id = 0, name = "b", cost = 2.0}, {id = 1, name = "c", cost = 0.5} ],\n'
        ']\n'
    )
    loaded = SearchSpace.load(path)
    assert loaded.num_layers == 2
    assert loaded.layers[1][1].cost == 0.5
