import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from deskstyle.core.codec import decode, encode, make_codec_weights, patchify, unpatchify
from deskstyle.core.tensor import SeededRng, identity, matmul
from deskstyle.exceptions import DimensionError


@pytest.fixture(scope="module")
def codec():
    return make_codec_weights(seed=1)


@pytest.fixture
def image():
    return SeededRng(21).uniform(3 * 16 * 16).reshape(3, 16, 16)


def test_projection_is_orthogonal_and_seeded(codec):
    assert codec.latent_channels == 48
    assert_allclose(matmul(codec.proj.T, codec.proj), identity(48), atol=1e-5)
    assert_array_equal(make_codec_weights(seed=1).proj, codec.proj)
    assert not np.array_equal(make_codec_weights(seed=2).proj, codec.proj)


def test_gray_image_encodes_to_zero(codec):
    z = encode(np.full((3, 8, 8), 0.5), codec)
    assert z.shape == (48, 2, 2)
    assert_array_equal(z, np.zeros_like(z))
    assert_allclose(decode(np.zeros((48, 2, 2)), codec), np.full((3, 8, 8), 0.5))


def test_round_trip(codec, image):
    assert np.max(np.abs(decode(encode(image, codec), codec, clamp=False) - image)) <= 1e-5


def test_norm_preserved(codec, image):
    z = encode(image, codec)
    assert np.linalg.norm(z) == pytest.approx(np.linalg.norm(2.0 * image - 1.0), abs=1e-5)


def test_linearity_of_latent_map(codec, image):
    other = SeededRng(22).uniform(3 * 16 * 16).reshape(3, 16, 16)
    # weights sum to one, so the pixel offset cancels
    lhs = encode(0.3 * image + 0.7 * other, codec)
    rhs = 0.3 * encode(image, codec) + 0.7 * encode(other, codec)
    assert_allclose(lhs, rhs, atol=1e-5)


def test_decode_clamps(codec):
    z = 100.0 * np.ones((48, 1, 1))
    img = decode(z, codec)
    assert img.min() >= 0.0 and img.max() <= 1.0


def test_patchify_inverse():
    x = np.arange(3 * 8 * 12, dtype=float).reshape(3, 8, 12)
    assert_array_equal(unpatchify(patchify(x, 4), 4), x)


def test_shape_errors(codec):
    with pytest.raises(DimensionError):
        encode(np.zeros((3, 10, 8)), codec)
    with pytest.raises(DimensionError):
        encode(np.zeros((1, 8, 8)), codec)
    with pytest.raises(DimensionError):
        decode(np.zeros((12, 2, 2)), codec)
