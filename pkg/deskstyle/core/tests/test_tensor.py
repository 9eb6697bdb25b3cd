import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from deskstyle.core.tensor import (
    SeededRng,
    channel_moments,
    identity,
    matmul,
    randn,
    rms,
    seed_from_text,
    softmax_rows,
)
from deskstyle.exceptions import DimensionError, ParameterError


def test_matmul_identity_and_zero():
    a = np.array([[3.0, 4.0], [5.0, 6.0]])
    assert_array_equal(matmul(identity(2), a), a)
    assert_array_equal(matmul(a, identity(2)), a)
    assert_array_equal(matmul([[1.0, 2.0]], [[0.0], [0.0]]), [[0.0]])


def test_matmul_matches_triple_loop():
    rng = SeededRng(3)
    a, b = randn(rng, (4, 5)), randn(rng, (5, 3))
    expected = np.zeros((4, 3))
    for i in range(4):
        for j in range(3):
            for k in range(5):
                expected[i, j] += a[i, k] * b[k, j]
    assert_allclose(matmul(a, b), expected, atol=1e-6)


def test_matmul_shape_mismatch_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.zeros((2, 3)), np.zeros((2, 3)))


def test_softmax_rows():
    assert_allclose(softmax_rows([[0.0, 0.0]]), [[0.5, 0.5]])
    assert_allclose(softmax_rows([[1000.0, 1000.0]]), [[0.5, 0.5]])
    assert_allclose(softmax_rows([[0.0, math.log(3.0)]]), [[0.25, 0.75]], atol=1e-12)

    logits = 50.0 * randn(SeededRng(11), (20, 7))
    out = softmax_rows(logits)
    assert np.all(out >= 0.0)
    assert_allclose(out.sum(axis=1), np.ones(20), atol=1e-6)


def test_channel_moments():
    constant = np.full((1, 2, 3), 7.0)
    mean, std = channel_moments(constant)
    assert_allclose(mean, [7.0])
    assert_allclose(std, [0.0])

    mean, std = channel_moments(np.array([[[-1.0, 1.0]]]))
    assert_allclose(mean, [0.0])
    assert_allclose(std, [1.0])

    x = randn(SeededRng(5), (3, 4, 4))
    mean, std = channel_moments(x)
    for c in range(3):
        values = x[c].ravel()
        m = sum(values) / len(values)
        var = sum((v - m) ** 2 for v in values) / len(values)
        assert abs(mean[c] - m) <= 1e-6
        assert abs(std[c] - math.sqrt(var)) <= 1e-6


def test_channel_moments_rejects_empty_and_non_3d():
    with pytest.raises(DimensionError):
        channel_moments(np.zeros((3, 0, 4)))
    with pytest.raises(DimensionError):
        channel_moments(np.zeros((3, 4)))


def test_randn_determinism_and_statistics():
    a = randn(SeededRng(42), (3, 5))
    b = randn(SeededRng(42), (3, 5))
    assert_array_equal(a, b)
    assert not np.array_equal(a, randn(SeededRng(43), (3, 5)))

    z = randn(SeededRng(7), (100_000,))
    assert abs(z.mean()) <= 0.02
    assert abs(z.std() - 1.0) <= 0.02


def test_odd_draw_counts_use_whole_pairs():
    rng = SeededRng(9)
    randn(rng, (3,))
    assert rng.draws == 4


def test_seed_range_and_text_seeds():
    with pytest.raises(ParameterError):
        SeededRng(-1)
    with pytest.raises(ParameterError):
        SeededRng(2**64)
    assert seed_from_text("a cat") == seed_from_text("a cat")
    assert seed_from_text("a cat") != seed_from_text("a dog")
    assert_array_equal(SeededRng.from_text("").normal((4,)), SeededRng.from_text("").normal((4,)))


def test_rms():
    assert rms(np.zeros((3, 2, 2)), np.zeros((3, 2, 2))) == 0.0
    assert rms(np.zeros((3, 2, 2)), np.ones((3, 2, 2))) == pytest.approx(1.0)
    rng = SeededRng(8)
    a, b = rng.uniform(12), rng.uniform(12)
    assert rms(a, b) == pytest.approx(math.sqrt(sum((a - b) ** 2) / 12), abs=1e-6)
    with pytest.raises(DimensionError):
        rms(np.zeros(3), np.zeros(4))
