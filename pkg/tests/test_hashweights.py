import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tinyodl.hashweights import (
    PERIOD,
    HashedWeights,
    StoredWeights,
    Xorshift16,
    step,
    stream,
    to_weight,
    virtual_alpha_element,
)
from tinyodl.oselm import OSELMClassifier


def test_first_output_of_seed_one():
    assert Xorshift16(1).next() == 33153


def test_zero_seed_rejected():
    with pytest.raises(ValueError):
        Xorshift16(0)


def test_full_period_from_one():
    g = Xorshift16(1)
    seen = set()
    for _ in range(PERIOD):
        seen.add(g.next())
    assert g.state == 1
    assert len(seen) == PERIOD and 0 not in seen


@settings(max_examples=5, deadline=None)
@given(st.integers(1, 0xFFFF))
def test_any_seed_returns_after_period(seed):
    x = seed
    for _ in range(PERIOD):
        x = step(x)
    assert x == seed


def test_stream_matches_generator():
    g = Xorshift16(4242)
    expected = [g.next() for _ in range(1000)]
    np.testing.assert_array_equal(stream(4242, 1000), expected)


def test_clone_is_independent():
    g = Xorshift16(7)
    g.next()
    h = g.clone()
    assert h.next() == g.next()


def test_uniformity_chi_square():
    u = stream(1, PERIOD)
    counts = np.bincount(u >> 12, minlength=16)
    expected = PERIOD / 16
    chi2 = ((counts - expected) ** 2 / expected).sum()
    # 15 dof, 0.999 quantile is about 37.7
    assert chi2 < 37.7


def test_weight_mapping():
    assert to_weight(32768) == 0.0
    assert to_weight(0) == -1.0
    assert to_weight(65535) < 1.0
    assert virtual_alpha_element(1, 0, 0, (4, 4)) == pytest.approx(33153 / 32768 - 1)


def test_element_out_of_range():
    with pytest.raises(IndexError):
        virtual_alpha_element(1, 4, 0, (4, 4))


def test_virtual_matrix_equals_materialized_stream():
    w = HashedWeights(1)
    g = Xorshift16(1)
    stored = np.array([[to_weight(g.next()) for _ in range(4)] for _ in range(4)])
    np.testing.assert_array_equal(w.matrix(4, 4), stored)
    for r in range(4):
        for c in range(4):
            assert w.element(r, c, 4, 4) == stored[r, c]


def test_hashed_matrix_is_deterministic_and_readonly():
    a = HashedWeights(99, 0.5).matrix(30, 20)
    b = HashedWeights(99, 0.5).matrix(30, 20)
    np.testing.assert_array_equal(a, b)
    assert np.all(np.abs(a) <= 0.5)
    with pytest.raises(ValueError):
        a[0, 0] = 1.0


def test_stream_wraps_past_period():
    long = stream(3, PERIOD + 10)
    np.testing.assert_array_equal(long[:10], long[PERIOD:])


def test_stored_words():
    assert HashedWeights(5).stored_words(561, 128) == 0
    assert StoredWeights(np.zeros((3, 2))).stored_words(3, 2) == 6


def test_stored_shape_checked():
    with pytest.raises(ValueError):
        StoredWeights(np.zeros((3, 2))).matrix(2, 3)


def test_hash_and_stored_models_agree(rng):
    X = rng.uniform(-1, 1, (80, 10))
    y = rng.integers(0, 3, 80)
    hashed = OSELMClassifier(n_hidden=12, weights=HashedWeights(321)).fit(X, y)
    stored = OSELMClassifier(n_hidden=12, weights=StoredWeights.from_hash(321, 10, 12))
    stored.fit(X, y)
    np.testing.assert_array_equal(hashed.predict_proba(X), stored.predict_proba(X))
