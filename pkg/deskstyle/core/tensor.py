"""Deterministic dense-tensor arithmetic and seeded randomness.

Tensors are plain `numpy` float64 arrays. The handful of operations below are the only
arithmetic the rest of the package relies on, so their determinism carries through to every
latent, attention map and image deskstyle produces.
"""

import hashlib
import math
from typing import Sequence, Tuple

import numpy as np
import numpy.typing as npt

from deskstyle.exceptions import DimensionError, ParameterError, shape_mismatch

Tensor = npt.NDArray[np.float64]

_UINT64_MAX = 2**64 - 1


def as_tensor(x: npt.ArrayLike) -> Tensor:
    """Return `x` as a float64 array (no copy when it already is one)"""
    return np.asarray(x, dtype=np.float64)


class SeededRng:
    """Single-owner random stream with a documented normal transform.

    Uniforms come from numpy's Philox-4x64 counter-based bit generator, whose output for a
    given 64-bit key is fixed across platforms. Normals are produced from pairs of uniforms
    with the Box-Muller transform:

        z0 = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)
        z1 = sqrt(-2 ln(1 - u1)) * sin(2 pi u2)

    with `z0, z1` interleaved in draw order. `1 - u1` lies in (0, 1] so the logarithm is
    always finite.

    A generator must not be advanced from two threads at once.
    """

    def __init__(self, seed: int):
        if not 0 <= seed <= _UINT64_MAX:
            raise ParameterError(f"Seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._generator = np.random.Generator(np.random.Philox(self.seed))
        self.draws = 0

    @classmethod
    def from_text(cls, text: str) -> "SeededRng":
        """Seed a generator from the first 8 bytes of the BLAKE2b digest of `text`"""
        return cls(seed_from_text(text))

    def uniform(self, n: int) -> Tensor:
        """Draw `n` uniforms on [0, 1)"""
        self.draws += n
        return self._generator.random(n)

    def normal(self, shape: Sequence[int]) -> Tensor:
        """Draw i.i.d. standard normals with the Box-Muller transform"""
        shape = tuple(int(s) for s in shape)
        if any(s < 0 for s in shape):
            raise DimensionError(f"Invalid shape {shape}")
        n = math.prod(shape)
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        angle = 2.0 * np.pi * u[:, 1]
        z = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1).reshape(-1)
        return z[:n].reshape(shape)


def seed_from_text(text: str) -> int:
    """Stable 64-bit seed for a string"""
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def randn(rng: SeededRng, shape: Sequence[int]) -> Tensor:
    """Standard-normal tensor drawn from `rng`"""
    return rng.normal(shape)


def identity(n: int) -> Tensor:
    return np.eye(n, dtype=np.float64)


def matmul(a: npt.ArrayLike, b: npt.ArrayLike) -> Tensor:
    """Matrix product with a fixed accumulation order.

    `numpy.einsum` without path optimisation runs its own sum-of-products loop instead of
    dispatching to BLAS, so the order in which the inner dimension is accumulated does not
    depend on the BLAS build or thread count.

    Args:
        a (ArrayLike): m x k matrix
        b (ArrayLike): k x n matrix

    Raises:
        DimensionError: Either operand is not 2-D or the inner dimensions differ

    Returns:
        Tensor: m x n product
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise shape_mismatch("matmul", a.shape, b.shape)
    return np.einsum("ik,kj->ij", a, b, optimize=False)


def softmax_rows(a: npt.ArrayLike) -> Tensor:
    """Row-wise softmax with per-row max subtraction"""
    a = as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"softmax_rows expects a 2-D tensor, got shape {a.shape}")
    shifted = a - a.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def channel_moments(x: npt.ArrayLike, eps: float = 0.0) -> Tuple[Tensor, Tensor]:
    """Per-channel mean and population standard deviation of a C x H x W tensor.

    Args:
        x (ArrayLike): C x H x W tensor
        eps (float, optional): Floor added to the variance under the square root.
            Defaults to 0.0.

    Raises:
        DimensionError: `x` is not 3-D or has an empty spatial extent

    Returns:
        Tuple[Tensor, Tensor]: (mean, std), both of length C
    """
    x = as_tensor(x)
    if x.ndim != 3:
        raise DimensionError(f"channel_moments expects C x H x W, got shape {x.shape}")
    if x.shape[1] * x.shape[2] < 1:
        raise DimensionError(f"channel_moments needs a non-empty spatial extent, got {x.shape}")
    mean = x.mean(axis=(1, 2))
    var = np.square(x - mean[:, None, None]).mean(axis=(1, 2))
    return mean, np.sqrt(var + eps)


def layer_norm_rows(h: npt.ArrayLike, eps: float) -> Tensor:
    """Standardize each row to zero mean and unit variance (no learned affine)"""
    h = as_tensor(h)
    mean = h.mean(axis=1, keepdims=True)
    var = np.square(h - mean).mean(axis=1, keepdims=True)
    return (h - mean) / np.sqrt(var + eps)


def rms(a: npt.ArrayLike, b: npt.ArrayLike) -> float:
    """Root-mean-square difference between two equally shaped tensors"""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise shape_mismatch("rms", a.shape, b.shape)
    return float(np.sqrt(np.mean(np.square(a - b))))
