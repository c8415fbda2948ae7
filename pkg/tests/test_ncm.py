import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onlinecl.ncm import ClassMeanState, NCMClassifier, update_mean

feature_lists = st.lists(
    st.lists(st.floats(min_value=-100, max_value=100, allow_nan=False), min_size=3, max_size=3),
    min_size=1,
    max_size=25,
)


def test_update_mean_initialization():
    s = ClassMeanState(class_id=0)
    update_mean(s, np.array([1.0, 2.0]))
    assert s.count == 1
    assert np.array_equal(s.mean, [1.0, 2.0])


def test_update_mean_fixed_point():
    s = ClassMeanState(class_id=0, mean=np.array([1.0]), count=2)
    update_mean(s, np.array([1.0]))
    assert s.count == 3
    assert np.allclose(s.mean, [1.0])


def test_update_mean_direct_value():
    s = ClassMeanState(class_id=0, mean=np.array([0.0]), count=1)
    update_mean(s, np.array([3.0]))
    assert np.allclose(s.mean, [1.5])
    assert s.count == 2


def test_update_mean_dimension_mismatch():
    s = ClassMeanState(class_id=0, mean=np.array([0.0, 0.0]), count=1)
    with pytest.raises(ValueError):
        update_mean(s, np.array([1.0]))


@given(feature_lists)
@settings(max_examples=50, deadline=None)
def test_streaming_mean_equals_batch_mean(rows):
    feats = np.asarray(rows)
    s = ClassMeanState(class_id=0)
    for f in feats:
        update_mean(s, f)
    assert s.count == len(feats)
    assert np.allclose(s.mean, feats.mean(axis=0), atol=1e-9)


def test_classify_exact_mean_and_tie_break():
    clf = NCMClassifier()
    clf.update(2, np.array([0.0, 0.0]))
    clf.update(5, np.array([4.0, 0.0]))
    assert clf.classify(np.array([4.0, 0.0])) == 5
    # equidistant from both means -> lowest class id
    assert clf.classify(np.array([2.0, 0.0])) == 2


def test_classify_matches_brute_force_oracle():
    rng = np.random.default_rng(42)
    clf = NCMClassifier()
    means = {}
    for c in range(5):
        for _ in range(rng.integers(1, 6)):
            clf.update(c, rng.normal(size=4))
        means[c] = clf.states[c].mean.copy()
    for _ in range(100):
        q = rng.normal(scale=3.0, size=4)
        dists = {c: ((q - m) ** 2).sum() for c, m in means.items()}
        best = min(sorted(dists), key=lambda c: dists[c])
        assert clf.classify(q) == best


def test_classify_translation_invariance():
    rng = np.random.default_rng(9)
    clf = NCMClassifier()
    shifted = NCMClassifier()
    shift = np.array([5.0, -3.0, 7.0])
    for c in range(3):
        for _ in range(4):
            f = rng.normal(size=3)
            clf.update(c, f)
            shifted.update(c, f + shift)
    for _ in range(20):
        q = rng.normal(size=3)
        assert clf.classify(q) == shifted.classify(q + shift)


def test_classify_batch_agrees_with_scalar():
    rng = np.random.default_rng(10)
    clf = NCMClassifier()
    for c in range(4):
        clf.update(c, rng.normal(size=2))
    Q = rng.normal(size=(15, 2))
    batch = clf.classify_batch(Q)
    assert list(batch) == [clf.classify(q) for q in Q]


def test_empty_classifier_raises():
    with pytest.raises(ValueError):
        NCMClassifier().classify(np.array([0.0]))


def test_known_classes_sorted():
    clf = NCMClassifier()
    for c in (7, 1, 4):
        clf.update(c, np.zeros(2))
    assert clf.known_classes() == [1, 4, 7]
