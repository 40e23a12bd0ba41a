import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clengine.buffers import (
    ClassBalancedBuffer,
    ExperienceBalancedBuffer,
    ReservoirBuffer,
    class_balanced_update,
    experience_balanced_update,
    group_quotas,
    make_buffer,
    reservoir_update,
    resize,
)
from clengine.data import Dataset
from clengine.errors import InvalidArgument
from clengine.rng import derive_seed


def _items(ids, classes=None):
    ids = np.asarray(ids)
    y = ids % 3 if classes is None else np.asarray(classes)
    return Dataset(ids.reshape(-1, 1).astype(float), y, {"origin": ids})


def _origins(buf):
    c = buf.contents
    return [] if c is None else c.attribute("origin").tolist()


def inclusion_frequencies(trials: int, max_size: int = 2, n: int = 5, one_at_a_time: bool = False) -> np.ndarray:
    counts = np.zeros(n)
    for s in range(trials):
        buf = ReservoirBuffer(max_size, seed=s)
        if one_at_a_time:
            for i in range(n):
                buf.update(_items([i]))
        else:
            buf.update(_items(range(n)))
        counts[_origins(buf)] += 1
    return counts / trials


def test_reservoir_uniformity():
    freq = inclusion_frequencies(10_000)
    assert np.all(np.abs(freq - 0.4) <= 0.02), freq


def test_reservoir_uniformity_across_update_calls():
    freq = inclusion_frequencies(4_000, one_at_a_time=True)
    assert np.all(np.abs(freq - 0.4) <= 0.03), freq


def test_reservoir_never_evicts_when_large():
    buf = ReservoirBuffer(10, seed=0)
    buf.update(_items([0, 1, 2]))
    buf.update(_items([3, 4]))
    assert _origins(buf) == [0, 1, 2, 3, 4]


def test_reservoir_empty_incoming():
    buf = ReservoirBuffer(3, seed=0)
    buf.update(_items([1, 2]))
    state = buf.state_dict()
    reservoir_update(buf, _items([]))
    assert _origins(buf) == [1, 2]
    assert buf.seen_count == state["seen_count"]


def test_class_quotas():
    assert group_quotas(10, [0, 1]) == {0: 5, 1: 5}
    assert group_quotas(10, [0, 1, 2]) == {0: 4, 1: 3, 2: 3}
    assert group_quotas(8, range(4)) == {k: 2 for k in range(4)}


def test_class_balanced_new_class_shrinks_old_groups():
    buf = ClassBalancedBuffer(10, seed=0)
    class_balanced_update(buf, _items(range(20), classes=[0, 1] * 10))
    assert buf.group_sizes() == {0: 5, 1: 5}
    class_balanced_update(buf, _items(range(20, 30), classes=[2] * 10))
    assert buf.group_sizes() == {0: 4, 1: 3, 2: 3}
    assert len(buf) <= 10
    for c, g in buf.groups.items():
        assert set(g.contents.targets.tolist()) == {c}


def test_experience_balanced():
    buf = ExperienceBalancedBuffer(8, seed=0)
    for e in range(4):
        experience_balanced_update(buf, _items(range(10 * e, 10 * e + 10)), e)
    assert buf.group_sizes() == {0: 2, 1: 2, 2: 2, 3: 2}
    for e, g in buf.groups.items():
        assert all(10 * e <= o < 10 * e + 10 for o in g.contents.attribute("origin"))
    with pytest.raises(InvalidArgument):
        buf.update(_items([1]))


def test_single_experience_equals_plain_reservoir():
    buf = ExperienceBalancedBuffer(5, seed=7)
    ref = ReservoirBuffer(5, seed=derive_seed(7, "group/0"))
    for chunk in (range(0, 6), range(6, 20)):
        buf.update(_items(chunk), 0)
        ref.update(_items(chunk))
    assert _origins(buf) == _origins(ref)


def test_resize_cases():
    buf = ReservoirBuffer(10, seed=1)
    buf.update(_items(range(30)))
    before = _origins(buf)
    resize(buf, 10)
    assert _origins(buf) == before
    resize(buf, 5)
    after = _origins(buf)
    assert len(after) == 5 and set(after) <= set(before)
    resize(buf, 20)
    assert _origins(buf) == after
    resize(buf, 0)
    assert len(buf) == 0
    with pytest.raises(InvalidArgument):
        resize(buf, -1)


def test_make_buffer():
    assert isinstance(make_buffer("class_balanced", 4), ClassBalancedBuffer)
    with pytest.raises(InvalidArgument):
        make_buffer("fifo", 4)


_ops = st.lists(
    st.one_of(
        st.tuples(st.just("update"), st.integers(0, 15), st.integers(0, 5)),
        st.tuples(st.just("resize"), st.integers(0, 12), st.just(0)),
    ),
    min_size=1,
    max_size=12,
)


def check_capacity(policy: str, ops, seed: int) -> None:
    buf = make_buffer(policy, 10, seed)
    counter = 0
    for kind, a, b in ops:
        if kind == "update":
            ids = np.arange(counter, counter + a)
            counter += a
            classes = (ids * 7 + b) % (b + 1)
            buf.update(_items(ids, classes), exp_index=b)
        else:
            buf.resize(a)
        assert len(buf) <= buf.max_size
        if policy != "reservoir":
            assert sum(buf.quotas().values()) <= buf.max_size
            for k, g in buf.groups.items():
                assert len(g) <= buf.quotas()[k]


@settings(max_examples=1000, deadline=None)
@given(policy=st.sampled_from(["reservoir", "class_balanced", "experience_balanced"]), ops=_ops, seed=st.integers(0, 99))
def test_capacity_invariant(policy, ops, seed):
    check_capacity(policy, ops, seed)


def test_state_dict_round_trip_continues_identically():
    a = ClassBalancedBuffer(6, seed=3)
    a.update(_items(range(12)))
    b = ClassBalancedBuffer(6, seed=0)
    b.load_state_dict(a.state_dict())
    for buf in (a, b):
        buf.update(_items(range(12, 30)))
    assert _origins(a) == _origins(b)
