from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clengine.data import (
    Dataset,
    TransformSpec,
    balanced_joint_loader,
    batches,
    concat,
    subsample,
    with_attribute,
    with_transform_group,
)
from clengine.errors import InvalidArgument, NotFound, OutOfRange

from conftest import random_dataset, rows, same_dataset


def _ds(n=6, dim=2):
    x = np.arange(n * dim, dtype=float).reshape(n, dim)
    return Dataset(x, np.arange(n) % 3, {"origin": np.arange(n)})


def test_identity_selection():
    ds = _ds()
    assert same_dataset(subsample(ds, range(len(ds))), ds)


def test_duplicates_allowed():
    ds = _ds()
    s = subsample(ds, [2, 2])
    assert len(s) == 2
    assert rows(s) == [rows(ds)[2]] * 2


def test_subsample_out_of_range():
    with pytest.raises(OutOfRange):
        subsample(_ds(), [6])


def test_concat_definition():
    a, b = _ds(3), _ds(4)
    c = concat([a, b])
    assert len(c) == 7
    assert rows(c)[3] == rows(b)[0]


def test_concat_schema_mismatch():
    a = _ds()
    with pytest.raises(InvalidArgument):
        concat([a, _ds(dim=3)])
    with pytest.raises(InvalidArgument):
        concat([a, with_attribute(a, "extra", np.zeros(len(a)))])
    with pytest.raises(InvalidArgument):
        concat([a, with_transform_group(a, "eval")])


def test_attribute_examples():
    ds = with_attribute(_ds(), "task_label", np.zeros(6))
    assert ds.example(3)[2]["task_label"] == 0
    assert subsample(ds, [5]).example(0)[2]["origin"] == 5
    ds2 = with_attribute(ds, "origin", np.arange(6) * 10)
    assert ds2.example(4)[2]["origin"] == 40
    with pytest.raises(InvalidArgument):
        with_attribute(ds, "bad", [1, 2])


def test_transform_groups():
    ds = Dataset([[3.0]], [0]).with_transform("train", TransformSpec(2.0, 1.0))
    assert ds.features.tolist() == [[7.0]]
    ev = with_transform_group(ds, "eval")
    assert ev.features.tolist() == [[3.0]]
    assert with_transform_group(ev, "train").features.tolist() == [[7.0]]
    assert ds.raw_features.tolist() == [[3.0]]
    with pytest.raises(NotFound):
        with_transform_group(ds, "augment")


def test_stored_arrays_are_read_only():
    ds = _ds()
    with pytest.raises(ValueError):
        ds.raw_features[0, 0] = 1.0


def test_batches_sizes_in_order():
    ds = _ds(5)
    bs = list(batches(ds, 2))
    assert [len(b) for b in bs] == [2, 2, 1]
    assert np.concatenate([b.y for b in bs]).tolist() == ds.targets.tolist()


def test_batches_empty_and_invalid():
    assert list(batches(subsample(_ds(), []), 3)) == []
    with pytest.raises(InvalidArgument):
        list(batches(_ds(), 0))


def test_shuffle_determinism():
    ds = _ds(20)
    a = [b.x.tobytes() for b in batches(ds, 3, shuffle=True, seed=4)]
    b = [b.x.tobytes() for b in batches(ds, 3, shuffle=True, seed=4)]
    assert a == b


def test_shuffled_epoch_is_a_permutation():
    ds = _ds(17)
    got = Counter(tuple(r) for b in batches(ds, 4, shuffle=True, seed=1) for r in b.x.tolist())
    assert got == Counter(tuple(r) for r in ds.features.tolist())


def test_joint_loader_single_source_equals_batches():
    ds = _ds(11)
    a = [(b.x.tobytes(), b.y.tobytes()) for b in balanced_joint_loader([ds], 4, seed=9)]
    b = [(b.x.tobytes(), b.y.tobytes()) for b in batches(ds, 4, shuffle=True, seed=9)]
    assert a == b


def test_joint_loader_equal_sources_split_evenly():
    a = Dataset(np.zeros((8, 1)), np.zeros(8))
    b = Dataset(np.ones((8, 1)), np.ones(8))
    for mb in balanced_joint_loader([a, b], 4, seed=0):
        assert sorted(mb.y.tolist()) == [0, 0, 1, 1]


def test_joint_loader_remainder_goes_to_earliest_source():
    srcs = [Dataset(np.full((10, 1), k), np.full(10, k)) for k in range(3)]
    out = list(balanced_joint_loader(srcs, 5, seed=0))
    assert len(out) == 5
    for mb in out:
        c = Counter(mb.y.tolist())
        assert [c[0], c[1], c[2]] == [2, 2, 1]


def test_joint_loader_occurrence_counts():
    big = Dataset(np.arange(100, dtype=float).reshape(-1, 1), np.zeros(100), {"src": np.zeros(100)})
    small = Dataset(np.arange(1000, 1010, dtype=float).reshape(-1, 1), np.ones(10), {"src": np.ones(10)})
    seen = Counter()
    for mb in balanced_joint_loader([big, small], 10, seed=3):
        seen.update(mb.x[:, 0].tolist())
    assert all(seen[float(i)] == 1 for i in range(100))
    small_total = sum(seen[float(v)] for v in range(1000, 1010))
    assert small_total == 100
    assert max(seen[float(v)] for v in range(1000, 1010)) > 1


def test_joint_loader_errors():
    ds = _ds()
    with pytest.raises(InvalidArgument):
        list(balanced_joint_loader([ds, ds, ds], 2))
    with pytest.raises(InvalidArgument):
        list(balanced_joint_loader([subsample(ds, [])], 2))


def test_state_dict_round_trip():
    ds = _ds().with_transform("train", TransformSpec(0.5, -1.0))
    back = Dataset.from_state_dict(ds.state_dict())
    assert same_dataset(ds, back)
    assert back.transform_groups == ds.transform_groups


# property tests over random datasets

_seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=200, deadline=None)
@given(seed=_seeds)
def test_subsample_composition(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, n=int(rng.integers(1, 12)))
    i = rng.integers(0, len(ds), size=int(rng.integers(1, 10)))
    j = rng.integers(0, len(i), size=int(rng.integers(0, 10)))
    assert same_dataset(subsample(subsample(ds, i), j), subsample(ds, i[j]))


@settings(max_examples=200, deadline=None)
@given(seed=_seeds)
def test_concat_associativity_and_unit(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(1, 4))
    a, b, c = (random_dataset(rng, dim=dim) for _ in range(3))
    assert same_dataset(concat([a]), a)
    assert same_dataset(concat([a, concat([b, c])]), concat([concat([a, b]), c]))
    assert rows(concat([a, b, c])) == rows(a) + rows(b) + rows(c)


@settings(max_examples=200, deadline=None)
@given(seed=_seeds)
def test_attributes_are_position_stable(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(1, 3))
    parts = [random_dataset(rng, n=int(rng.integers(1, 6)), dim=dim) for _ in range(3)]
    parts = [with_attribute(p, "pos", np.arange(len(p)) + 100 * k) for k, p in enumerate(parts)]
    cat = concat(parts)
    src = [r for p in parts for r in rows(p)]
    idx = rng.integers(0, len(cat), size=8)
    out = subsample(cat, idx)
    assert rows(out) == [src[i] for i in idx]
