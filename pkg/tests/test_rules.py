import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from varpro.data import Dataset, FeatureKind
from varpro.rules import (Interval, LevelSet, Region, Rule, RuleMasks, complement_release,
                          contains, membership_count, region_mask, release)

# two-feature rectangle, features indexed from 0
EXAMPLE = Region((Interval(0, -1.95, -0.7), Interval(1, -0.8, 0.7)))


def test_contains_example_rectangle():
    assert contains(EXAMPLE, [-1.0, 0.0])
    assert not contains(EXAMPLE, [0.0, 0.0])
    assert contains(Region(), [123.0, -4.0])


def test_interval_bounds_closed():
    assert contains(EXAMPLE, [-1.95, 0.7])
    assert contains(EXAMPLE, [-0.7, -0.8])


def test_open_lower_flag():
    r = Region((Interval(0, 0.5, math.inf, open_lower=True),))
    assert not contains(r, [0.5])
    assert contains(r, [0.5000001])


def test_contains_kind_mismatch():
    kinds = (FeatureKind("categorical", ("a", "b")),)
    with pytest.raises(TypeError):
        contains(Region((Interval(0, 0, 1),)), [0.0], kinds)
    with pytest.raises(TypeError):
        contains(Region((LevelSet(0, {0}),)), [0.0], (FeatureKind(),))
    assert contains(Region((LevelSet(0, {1}),)), [1.0], kinds)


def test_region_rejects_duplicates():
    with pytest.raises(ValueError):
        Region((Interval(0, 0, 1), Interval(0, 2, 3)))
    with pytest.raises(ValueError):
        Interval(0, 2, 1)
    with pytest.raises(ValueError):
        LevelSet(0, set())


def test_release_examples():
    rule = Rule(EXAMPLE, tree=0, branch=3)
    released = release(rule, {1})
    assert released.region == Region((Interval(0, -1.95, -0.7),))
    assert release(rule, set()) == rule
    assert release(rule, {0, 1}).region == Region()
    with pytest.raises(IndexError):
        release(rule, {2}, p=2)
    with pytest.raises(IndexError):
        release(rule, {-1})


def test_release_clears_count():
    d = Dataset(np.array([[-1.0, 0.0], [0.0, 0.0]]), (), "regression", y=[0.0, 1.0])
    rule = Rule(EXAMPLE).attach(d)
    assert rule.count == 1
    assert release(rule, {0}).count == -1


def test_membership_examples():
    X = np.random.default_rng(0).standard_normal((368, 3))
    count, idx = membership_count(Region(), X)
    assert count == 368
    np.testing.assert_array_equal(idx, np.arange(368))
    count, idx = membership_count(Region((Interval(0, 100, 200),)), X)
    assert count == 0 and idx.size == 0


def test_membership_matches_per_row_check():
    X = np.random.default_rng(1).uniform(-3, 3, size=(400, 2))
    count, idx = membership_count(EXAMPLE, X)
    hand = [i for i in range(400) if -1.95 <= X[i, 0] <= -0.7 and -0.8 <= X[i, 1] <= 0.7]
    assert count == len(hand)
    assert list(idx) == hand


def test_restrict_intersects():
    r = Region((Interval(0, 0, 5),)).restrict(Interval(0, 2, math.inf, open_lower=True))
    c = r.constraint(0)
    assert (c.lower, c.upper, c.open_lower) == (2, 5, True)
    r = Region((LevelSet(1, {0, 1, 2}),)).restrict(LevelSet(1, {1, 2, 3}))
    assert r.constraint(1).levels == frozenset({1, 2})
    with pytest.raises(TypeError):
        r.restrict(Interval(1, 0, 1))


def test_complement_release():
    assert complement_release(EXAMPLE, {1}) == Region((Interval(1, -0.8, 0.7),))


def test_rule_masks_single_release_matches_release():
    rng = np.random.default_rng(2)
    X = rng.uniform(size=(300, 4))
    rule = Rule(Region((Interval(0, 0.2, 0.8), Interval(2, 0.1, 0.6), Interval(3, 0.3, 1.0))))
    masks = RuleMasks.build(rule, X)
    np.testing.assert_array_equal(masks.base(), region_mask(rule.region, X))
    for k, f in enumerate(masks.features):
        np.testing.assert_array_equal(masks.released_single(k),
                                      region_mask(release(rule, {int(f)}).region, X))


def test_records_are_serialisable():
    import json
    r = Region((Interval(0, -math.inf, 1.5), LevelSet(2, {1, 0})))
    text = json.dumps(Rule(r, 1, 2, 7).to_record())
    assert '"-inf"' in text and '"levels": [0, 1]' in text


@st.composite
def interval_rules(draw, p=5):
    feats = draw(st.sets(st.integers(0, p - 1), max_size=p))
    cons = []
    for f in sorted(feats):
        a, b = sorted(draw(st.lists(st.floats(-2, 2), min_size=2, max_size=2)))
        cons.append(Interval(f, a, b, open_lower=draw(st.booleans())))
    return Rule(Region(tuple(cons)))


@settings(max_examples=300)
@given(interval_rules(), st.sets(st.integers(0, 4)), st.sets(st.integers(0, 4)),
       st.integers(0, 10**6))
def test_release_monotone_and_idempotent(rule, S, T, seed):
    X = np.random.default_rng(seed).uniform(-2, 2, size=(60, 5))
    small, big = S, S | T
    assert membership_count(release(rule, small), X)[0] <= membership_count(release(rule, big), X)[0]
    assert release(release(rule, S), S) == release(rule, S)
    if not set(rule.region.features) & S:
        assert membership_count(release(rule, S), X)[0] == membership_count(rule, X)[0]


@settings(max_examples=300)
@given(interval_rules(), st.sets(st.integers(0, 4)),
       st.lists(st.floats(-2, 2), min_size=5, max_size=5))
def test_product_identity(rule, S, x):
    whole = contains(rule.region, x)
    split = contains(release(rule, S).region, x) and contains(complement_release(rule, S).region, x)
    assert whole == split
