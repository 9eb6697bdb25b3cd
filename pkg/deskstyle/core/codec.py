"""Orthogonal patch codec standing in for a latent-diffusion VAE.

Images (3 x H x W, values in [0, 1]) are rescaled to [-1, 1], cut into non-overlapping p x p
patches, each patch is flattened channel-major to a 3p^2 vector and rotated by a fixed
orthogonal matrix. The result is a 3p^2 x (H/p) x (W/p) latent. Decoding applies the
transpose, so the pair is exactly invertible up to floating point.
"""

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing_extensions import Annotated

from deskstyle import constants
from deskstyle.core.tensor import SeededRng, Tensor, as_tensor, matmul, randn
from deskstyle.exceptions import DimensionError


class CodecWeights(BaseModel):
    """Fixed orthogonal projection for the patch codec"""

    model_config = ConfigDict(extra="forbid", frozen=True, arbitrary_types_allowed=True)

    patch_size: Annotated[int, Field(ge=1)]
    """Patch edge length p"""

    proj: np.ndarray
    """(3p^2) x (3p^2) orthogonal matrix"""

    seed: int
    """Seed the projection was drawn from"""

    @model_validator(mode="after")
    def check_proj(self):
        dim = constants.IMAGE_CHANNELS * self.patch_size**2
        if self.proj.shape != (dim, dim):
            raise ValueError(f"proj must be {dim} x {dim}, got {self.proj.shape}")
        return self

    @property
    def latent_channels(self) -> int:
        return self.proj.shape[0]


def make_codec_weights(
    seed: int = constants.CODEC_SEED, patch_size: int = constants.PATCH_SIZE
) -> CodecWeights:
    """Draw a Gaussian matrix and orthonormalize its columns (Gram-Schmidt basis).

    The Gram-Schmidt basis is obtained from a QR factorisation with the sign of each column
    fixed so that R has a positive diagonal, which makes the basis unique.

    Args:
        seed (int, optional): Generator seed. Defaults to `constants.CODEC_SEED`.
        patch_size (int, optional): Patch edge length. Defaults to `constants.PATCH_SIZE`.

    Returns:
        CodecWeights: Frozen codec weights
    """
    dim = constants.IMAGE_CHANNELS * patch_size**2
    raw = randn(SeededRng(seed), (dim, dim))
    q, r = np.linalg.qr(raw)
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    return CodecWeights(patch_size=patch_size, proj=q * signs[None, :], seed=seed)


def _check_image(img: Tensor, p: int) -> None:
    if img.ndim != 3 or img.shape[0] != constants.IMAGE_CHANNELS:
        raise DimensionError(f"Expected a 3 x H x W image, got shape {img.shape}")
    _, h, w = img.shape
    if h % p or w % p or h == 0 or w == 0:
        raise DimensionError(f"Image size {h} x {w} is not divisible by patch size {p}")


def patchify(img: Tensor, p: int) -> Tensor:
    """3 x H x W -> (3p^2) x (H/p) x (W/p), each column a channel-major flattened patch"""
    c, h, w = img.shape
    return (
        img.reshape(c, h // p, p, w // p, p)
        .transpose(0, 2, 4, 1, 3)
        .reshape(c * p * p, h // p, w // p)
    )


def unpatchify(tokens: Tensor, p: int) -> Tensor:
    """Inverse of `patchify`"""
    d, gh, gw = tokens.shape
    c = d // (p * p)
    return tokens.reshape(c, p, p, gh, gw).transpose(0, 3, 1, 4, 2).reshape(c, gh * p, gw * p)


def encode(img: Tensor, w: CodecWeights) -> Tensor:
    """Map an image in [0, 1] to its latent.

    Args:
        img (Tensor): 3 x H x W image, H and W divisible by the patch size
        w (CodecWeights): Codec weights

    Raises:
        DimensionError: Image is not 3 x H x W with divisible spatial size

    Returns:
        Tensor: (3p^2) x (H/p) x (W/p) latent
    """
    img = as_tensor(img)
    p = w.patch_size
    _check_image(img, p)
    tokens = patchify(2.0 * img - 1.0, p)
    d, gh, gw = tokens.shape
    return matmul(w.proj, tokens.reshape(d, gh * gw)).reshape(d, gh, gw)


def decode(z: Tensor, w: CodecWeights, clamp: bool = True) -> Tensor:
    """Map a latent back to an image.

    Args:
        z (Tensor): (3p^2) x h x w latent
        w (CodecWeights): Codec weights
        clamp (bool, optional): Clip the result into [0, 1]. Defaults to True.

    Raises:
        DimensionError: Channel count is not 3p^2

    Returns:
        Tensor: 3 x (h p) x (w p) image
    """
    z = as_tensor(z)
    if z.ndim != 3 or z.shape[0] != w.latent_channels:
        raise DimensionError(
            f"Latent shape {z.shape} does not have {w.latent_channels} channels"
        )
    d, gh, gw = z.shape
    tokens = matmul(w.proj.T, z.reshape(d, gh * gw)).reshape(d, gh, gw)
    img = (unpatchify(tokens, w.patch_size) + 1.0) / 2.0
    return np.clip(img, 0.0, 1.0) if clamp else img
