import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from discoforge.errors import DegenerateDump, NotEnoughCandidates
from discoforge.pruning import (
    ActivationDump,
    LayerScore,
    block_influence,
    default_protected,
    load_manifest,
    select_prune_layers,
    write_manifest,
)


def brute_force(hin, hout):
    """Plain-Python cosine oracle, one row at a time."""
    sims = []
    for x, y in zip(hin.tolist(), hout.tolist()):
        nx = math.sqrt(sum(v * v for v in x))
        ny = math.sqrt(sum(v * v for v in y))
        if nx == 0 or ny == 0:
            continue
        sims.append(sum(p * q for p, q in zip(x, y)) / (nx * ny))
    return 1 - sum(sims) / len(sims)


def test_identical_is_zero_negated_is_two():
    rng = np.random.default_rng(0)
    h = rng.normal(size=(4, 8))
    assert block_influence(ActivationDump(3, h, h.copy())).influence == 0.0
    assert block_influence(ActivationDump(3, h, -h)).influence == 2.0


def test_orthogonal_is_one():
    a = np.array([[1.0, 0.0], [0.0, 2.0]])
    b = np.array([[0.0, 3.0], [5.0, 0.0]])
    assert block_influence(ActivationDump(0, a, b)).influence == pytest.approx(1.0)


def test_random_dumps_match_oracle():
    rng = np.random.default_rng(42)
    for _ in range(50):
        a, b = rng.normal(size=(4, 8)), rng.normal(size=(4, 8))
        assert abs(block_influence(ActivationDump(0, a, b)).influence - brute_force(a, b)) <= 1e-9


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (4, 8), elements=finite), arrays(np.float64, (4, 8), elements=finite))
def test_influence_in_range_and_matches_oracle(a, b):
    norms_ok = (np.linalg.norm(a, axis=1) > 1e-6) & (np.linalg.norm(b, axis=1) > 1e-6)
    if not norms_ok.any():
        return
    a, b = a[norms_ok], b[norms_ok]
    score = block_influence(ActivationDump(1, a, b)).influence
    assert 0.0 <= score <= 2.0
    assert abs(score - min(2.0, max(0.0, brute_force(a, b)))) <= 1e-9


@given(st.floats(0.01, 100), st.floats(0.01, 100))
def test_scale_invariant(s, t):
    rng = np.random.default_rng(7)
    a, b = rng.normal(size=(3, 5)), rng.normal(size=(3, 5))
    base = block_influence(ActivationDump(0, a, b)).influence
    assert block_influence(ActivationDump(0, a * s, b * t)).influence == pytest.approx(base, abs=1e-12)


def test_zero_rows_skipped_and_all_zero_rejected():
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    b = np.array([[1.0, 1.0], [1.0, 0.0]])
    assert block_influence(ActivationDump(0, a, b)).influence == 0.0
    with pytest.raises(DegenerateDump):
        block_influence(ActivationDump(0, np.zeros((2, 3)), np.ones((2, 3))))


@pytest.mark.parametrize(
    "a,b",
    [(np.ones((2, 3)), np.ones((3, 3))), (np.ones(3), np.ones(3)), (np.ones((0, 3)), np.ones((0, 3))), (np.array([[np.nan]]), np.array([[1.0]]))],
)
def test_dump_validation(a, b):
    with pytest.raises(ValueError):
        ActivationDump(0, a, b)


def test_select_argmin_with_index_tiebreak():
    scores = [LayerScore(0, 0.01), LayerScore(1, 0.2), LayerScore(2, 0.05), LayerScore(3, 0.05), LayerScore(4, 0.0)]
    assert select_prune_layers(scores, 1) == [4]
    assert select_prune_layers(scores, 1, protected={0, 4}) == [2]
    assert select_prune_layers(scores, 2, protected={0, 4}) == [2, 3]
    with pytest.raises(NotEnoughCandidates):
        select_prune_layers(scores, 4, protected={0, 4})
    with pytest.raises(NotEnoughCandidates):
        select_prune_layers(scores[:1], 1)


@given(st.lists(st.sampled_from([0.0, 0.1, 0.5, 1.0, 2.0]), min_size=2, max_size=12))
def test_select_matches_sorted_order(values):
    scores = [LayerScore(i, v) for i, v in enumerate(values)]
    (pick,) = select_prune_layers(scores, 1)
    best = min(values)
    assert values[pick] == best and pick == values.index(best)


def test_default_protected():
    assert default_protected(36) == {0, 35}


def test_manifest_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    dumps = [(i, rng.normal(size=(3, 4)).astype(np.float32), rng.normal(size=(3, 4)).astype(np.float32)) for i in range(3)]
    path = write_manifest(tmp_path, dumps)
    loaded = load_manifest(path)
    assert [d.layer_index for d in loaded] == [0, 1, 2]
    np.testing.assert_array_equal(loaded[1].hidden_in, dumps[1][1].astype(np.float64))
    (tmp_path / "layer002.out.f32").write_bytes(b"\0" * 8)
    with pytest.raises(ValueError):
        load_manifest(path)
