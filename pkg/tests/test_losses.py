import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from plonline import (
    ambiguous_loss,
    aph_loss,
    aph_subgradient,
    avg_margin,
    max_margin,
    mph_loss,
    mph_subgradient,
    predict,
    zeros,
)

# Columns w1=[1], w2=[0.5], w3=[-1] give scores [2, 1, -2] at x=[2].
W3 = np.array([[1.0, 0.5, -1.0]])
X3 = [2.0]


@st.composite
def triples(draw, max_k=6, max_d=4):
    K = draw(st.integers(2, max_k))
    d = draw(st.integers(1, max_d))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(d, K)) * draw(st.sampled_from([0.01, 0.3, 1.0, 5.0]))
    x = rng.normal(size=d)
    s = draw(st.integers(1, K - 1))
    Y = tuple(sorted(int(v) + 1 for v in rng.choice(K, size=s, replace=False)))
    return W, x, Y


class TestAmbiguousLoss:
    def test_member(self):
        assert ambiguous_loss(2, {1, 2}) == 0

    def test_non_member(self):
        assert ambiguous_loss(3, {1, 2}) == 1

    def test_singleton(self):
        assert ambiguous_loss(1, {1}) == 0


class TestAPH:
    def test_zero_weights(self):
        assert aph_loss(zeros(1, 3), X3, {2, 3}) == 1

    def test_inactive(self):
        assert aph_loss(W3, X3, {1, 2}) == 0

    def test_active(self):
        assert aph_loss(W3, X3, {2, 3}) == pytest.approx(3.5)

    def test_margins(self):
        assert avg_margin(zeros(1, 3), X3, {1}) == 0
        assert avg_margin(W3, X3, {1, 2}) == pytest.approx(3.5)
        assert avg_margin(W3, X3, {2, 3}) == pytest.approx(-2.5)

    def test_full_set_rejected(self):
        with pytest.raises(ValueError):
            aph_loss(W3, X3, {1, 2, 3})

    @given(triples())
    def test_matches_reference(self, t):
        W, x, Y = t
        assert aph_loss(W, x, Y) == pytest.approx(oracles.aph(W, x, Y), abs=1e-12)


class TestMPH:
    def test_zero_weights(self):
        assert mph_loss(zeros(1, 3), X3, {2, 3}) == 1

    def test_inactive(self):
        assert mph_loss(W3, X3, {1, 2}) == 0

    def test_active(self):
        assert mph_loss(W3, X3, {2, 3}) == pytest.approx(2.0)
        assert max_margin(W3, X3, {2, 3}) == pytest.approx(-1.0)

    @given(triples())
    def test_matches_reference(self, t):
        W, x, Y = t
        assert mph_loss(W, x, Y) == pytest.approx(oracles.mph(W, x, Y), abs=1e-12)


class TestSubgradients:
    def test_aph_at_zero(self):
        G = aph_subgradient(zeros(1, 3), X3, {2, 3})
        assert G.tolist() == [[2.0, -1.0, -1.0]]

    def test_aph_inactive(self):
        assert not aph_subgradient(W3, X3, {1, 2}).any()

    def test_mph_at_zero(self):
        G = mph_subgradient(zeros(1, 3), X3, {2, 3})
        assert G.tolist() == [[2.0, -2.0, 0.0]]

    def test_mph_inactive(self):
        assert not mph_subgradient(W3, X3, {1, 2}).any()

    def test_singleton_is_multiclass_perceptron_gradient(self):
        G = aph_subgradient(zeros(2, 4), [1.0, -3.0], {3})
        expected = np.zeros((2, 4))
        expected[:, 2] = [-1.0, 3.0]
        expected[:, 0] = [1.0, -3.0]
        assert np.array_equal(G, expected)

    @given(triples())
    def test_aph_matches_tau_table(self, t):
        W, x, Y = t
        G = aph_subgradient(W, x, Y)
        if oracles.aph(W, x, Y) > 0:
            expected = -np.outer(x, oracles.avg_tau(W, x, Y))
            assert G == pytest.approx(expected, abs=1e-15)
        else:
            assert not G.any()

    @given(triples())
    def test_mph_matches_tau_table(self, t):
        W, x, Y = t
        G = mph_subgradient(W, x, Y)
        if oracles.mph(W, x, Y) > 0:
            assert np.array_equal(G, -np.outer(x, oracles.max_tau(W, x, Y)))
        else:
            assert not G.any()

    @given(triples())
    def test_columns_cancel(self, t):
        W, x, Y = t
        for G in (aph_subgradient(W, x, Y), mph_subgradient(W, x, Y)):
            assert np.allclose(G.sum(axis=1), 0.0, atol=1e-12)

    @given(triples())
    def test_mph_touches_two_columns(self, t):
        W, x, Y = t
        if mph_loss(W, x, Y) > 0 and np.all(x != 0):
            assert np.count_nonzero(np.any(mph_subgradient(W, x, Y) != 0, axis=0)) == 2

    @given(triples())
    def test_singleton_sets_agree(self, t):
        W, x, Y = t
        Y = Y[:1]
        assert np.array_equal(aph_subgradient(W, x, Y), mph_subgradient(W, x, Y))


class TestProperties:
    @settings(max_examples=500)
    @given(triples())
    def test_zero_surrogate_means_prediction_in_set(self, t):
        W, x, Y = t
        if aph_loss(W, x, Y) == 0 or mph_loss(W, x, Y) == 0:
            assert ambiguous_loss(predict(W, x), Y) == 0

    @settings(max_examples=500)
    @given(triples())
    def test_mph_below_aph(self, t):
        W, x, Y = t
        assert mph_loss(W, x, Y) <= aph_loss(W, x, Y)

    @settings(max_examples=500)
    @given(triples(), st.integers(0, 2**32 - 1))
    def test_aph_subgradient_inequality(self, t, seed):
        W, x, Y = t
        W2 = W + np.random.default_rng(seed).normal(size=W.shape)
        G = aph_subgradient(W, x, Y)
        assert aph_loss(W2, x, Y) >= aph_loss(W, x, Y) + np.sum(G * (W2 - W)) - 1e-9

    def test_mph_not_convex(self):
        # Max-over-Y makes the loss non-convex: the midpoint can exceed the chord.
        x = [1.0]
        A = np.array([[1.0, -1.0, 0.0]])
        B = np.array([[-1.0, 1.0, 0.0]])
        mid = mph_loss((A + B) / 2, x, {1, 2})
        assert mid > (mph_loss(A, x, {1, 2}) + mph_loss(B, x, {1, 2})) / 2
