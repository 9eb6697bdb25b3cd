"""Noise predictors eps_theta(x_t, t, c).

`ToyDenoiser` is a seeded, never-trained transformer UNet over latent tokens with a hook point
at every self-attention. `LinearDenoiser` predicts eps = A x for a fixed matrix of known
spectral norm, which makes fixed-point inversion solvable in closed form.
"""

import math
from typing import List, Optional, Protocol, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing_extensions import Annotated

from deskstyle import constants
from deskstyle.core.attention import (
    AttentionHook,
    BlockId,
    ContextBundle,
    CrossAttentionWeights,
    all_blocks,
    apply_hooks,
    attention,
)
from deskstyle.core.enums import BlockPath
from deskstyle.core.style import dfca
from deskstyle.core.tensor import SeededRng, Tensor, as_tensor, layer_norm_rows, matmul, randn
from deskstyle.exceptions import DimensionError, ParameterError, shape_mismatch

# Blocks whose cross-attention sees the image streams
CONTENT_STREAM_BLOCK = BlockId(path=BlockPath.down, index=constants.DOWN_BLOCKS)
STYLE_STREAM_BLOCK = BlockId(path=BlockPath.up, index=1)


class NoisePredictor(Protocol):
    def predict_noise(
        self,
        x: Tensor,
        t: int,
        ctx: ContextBundle,
        hooks: Sequence[AttentionHook] = (),
    ) -> Tensor: ...


class ArchitectureConfig(BaseModel):
    """Sizes of the toy transformer UNet"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    latent_channels: Annotated[int, Field(ge=1)] = (
        constants.IMAGE_CHANNELS * constants.PATCH_SIZE**2
    )
    """Channels of the latent the network consumes"""

    width: Annotated[int, Field(ge=1)] = constants.MODEL_WIDTH
    """Model width d"""

    heads: Annotated[int, Field(ge=1)] = constants.NUM_HEADS
    """Attention heads"""

    context_dim: Annotated[int, Field(ge=1)] = constants.CONTEXT_DIM
    """Width d_c of conditioning tokens"""

    mlp_ratio: Annotated[int, Field(ge=1)] = constants.MLP_RATIO
    """Hidden width of the MLP as a multiple of d"""

    @model_validator(mode="after")
    def check_heads(self):
        if self.width % self.heads:
            raise ValueError(f"Width {self.width} is not divisible by {self.heads} heads")
        return self


class BlockWeights(BaseModel):
    """Weights of one transformer block"""

    model_config = ConfigDict(extra="forbid", frozen=True, arbitrary_types_allowed=True)

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    cross_q: np.ndarray
    cross: CrossAttentionWeights
    cross_o: np.ndarray
    mlp_in: np.ndarray
    mlp_out: np.ndarray


class DenoiserWeights(BaseModel):
    """Complete, frozen parameter set of the toy denoiser"""

    model_config = ConfigDict(extra="forbid", frozen=True, arbitrary_types_allowed=True)

    arch: ArchitectureConfig
    """Sizes the weights were drawn for"""

    seed: int
    """Seed the weights were drawn from"""

    w_in: np.ndarray
    """C x d latent-token embedding"""

    time_table: np.ndarray
    """(MAX_TIMESTEP + 1) x d sinusoidal timestep embeddings"""

    time_proj: np.ndarray
    """d x d projection of the timestep embedding"""

    blocks: List[BlockWeights]
    """Per-block weights in forward order"""

    w_out: np.ndarray
    """d x C projection back to latent channels"""

    @model_validator(mode="after")
    def check_blocks(self):
        if len(self.blocks) != len(all_blocks()):
            raise ValueError(f"Expected {len(all_blocks())} blocks, got {len(self.blocks)}")
        return self

    @property
    def heads(self) -> int:
        return self.arch.heads

    @property
    def width(self) -> int:
        return self.arch.width


def sinusoidal_table(steps: int, dim: int, max_period: float = 10000.0) -> Tensor:
    """Rows t = 0..steps of [cos(t f_i), sin(t f_i)] with geometric frequencies f_i"""
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / half)
    args = np.arange(steps + 1)[:, None] * freqs[None, :]
    table = np.concatenate([np.cos(args), np.sin(args)], axis=1)
    if dim % 2:
        table = np.concatenate([table, np.zeros((steps + 1, 1))], axis=1)
    return table


def _dense(rng: SeededRng, fan_in: int, fan_out: int) -> Tensor:
    return randn(rng, (fan_in, fan_out)) / math.sqrt(fan_in)


def make_denoiser_weights(
    arch: Optional[ArchitectureConfig] = None, seed: int = constants.WEIGHTS_SEED
) -> DenoiserWeights:
    """Draw every weight of the toy denoiser from one seeded stream.

    Matrices are standard normal scaled by 1/sqrt(fan_in). Two calls with equal arguments
    return bit-identical weights.
    """
    arch = arch or ArchitectureConfig()
    rng = SeededRng(seed)
    d, dc, hidden = arch.width, arch.context_dim, arch.width * arch.mlp_ratio
    w_in = _dense(rng, arch.latent_channels, d)
    time_proj = _dense(rng, d, d)
    blocks = []
    for _ in all_blocks():
        blocks.append(
            BlockWeights(
                w_q=_dense(rng, d, d),
                w_k=_dense(rng, d, d),
                w_v=_dense(rng, d, d),
                w_o=_dense(rng, d, d),
                cross_q=_dense(rng, d, d),
                cross=CrossAttentionWeights(
                    text_k=_dense(rng, dc, d),
                    text_v=_dense(rng, dc, d),
                    image_k=_dense(rng, dc, d),
                    image_v=_dense(rng, dc, d),
                    heads=arch.heads,
                ),
                cross_o=_dense(rng, d, d),
                mlp_in=_dense(rng, d, hidden),
                mlp_out=_dense(rng, hidden, d),
            )
        )
    w_out = _dense(rng, d, arch.latent_channels)
    return DenoiserWeights(
        arch=arch,
        seed=seed,
        w_in=w_in,
        time_table=sinusoidal_table(constants.MAX_TIMESTEP, d),
        time_proj=time_proj,
        blocks=blocks,
        w_out=w_out,
    )


def block_context(block_id: BlockId, ctx: ContextBundle) -> ContextBundle:
    """Text at every block; content only at the last down block, style only at the first up"""
    return ctx.restricted_to(
        content=block_id == CONTENT_STREAM_BLOCK, style=block_id == STYLE_STREAM_BLOCK
    )


class ToyDenoiser:
    def __init__(self, weights: DenoiserWeights):
        """Seeded transformer UNet over latent tokens.

        Each latent pixel is one token. Every block applies pre-norm self-attention (hook
        point), dual-feature cross-attention and a tanh MLP, each as a residual branch scaled
        by `constants.BRANCH_SCALE`.

        Args:
            weights (DenoiserWeights): Frozen weights
        """
        self.weights = weights
        self.block_ids = all_blocks()

    def _self_attention(
        self,
        block_id: BlockId,
        bw: BlockWeights,
        h: Tensor,
        t: int,
        hooks: Sequence[AttentionHook],
    ) -> Tensor:
        n = layer_norm_rows(h, constants.EPS)
        q, k, v = matmul(n, bw.w_q), matmul(n, bw.w_k), matmul(n, bw.w_v)
        k, v = apply_hooks(hooks, block_id, t, q, k, v)
        return matmul(attention(q, k, v, heads=self.weights.heads), bw.w_o)

    def _cross_attention(
        self, block_id: BlockId, bw: BlockWeights, h: Tensor, ctx: ContextBundle
    ) -> Tensor:
        n = layer_norm_rows(h, constants.EPS)
        q = matmul(n, bw.cross_q)
        return matmul(dfca(q, block_context(block_id, ctx), bw.cross), bw.cross_o)

    @staticmethod
    def _mlp(bw: BlockWeights, h: Tensor) -> Tensor:
        n = layer_norm_rows(h, constants.EPS)
        return matmul(np.tanh(matmul(n, bw.mlp_in)), bw.mlp_out)

    def predict_noise(
        self,
        x: Tensor,
        t: int,
        ctx: ContextBundle,
        hooks: Sequence[AttentionHook] = (),
    ) -> Tensor:
        """Predict the noise in latent `x` at timestep `t`.

        Args:
            x (Tensor): C x h x w latent
            t (int): Timestep, 0..`constants.MAX_TIMESTEP`
            ctx (ContextBundle): Conditioning tokens
            hooks (Sequence[AttentionHook], optional): Consulted at every self-attention of the
                blocks they watch. Defaults to ().

        Raises:
            DimensionError: Latent channels or context width do not match the weights
            ParameterError: Timestep out of range
            HookContractError: A hook returned K/V of the wrong shape

        Returns:
            Tensor: Predicted noise, same shape as `x`
        """
        w = self.weights
        x = as_tensor(x)
        if x.ndim != 3 or x.shape[0] != w.arch.latent_channels:
            raise DimensionError(
                f"Latent shape {x.shape} does not have {w.arch.latent_channels} channels"
            )
        if not 0 <= t <= constants.MAX_TIMESTEP:
            raise ParameterError(f"Timestep {t} outside 0..{constants.MAX_TIMESTEP}")
        if ctx.token_dim != w.arch.context_dim:
            raise DimensionError(
                f"Context tokens have width {ctx.token_dim}, weights expect {w.arch.context_dim}"
            )
        c, gh, gw = x.shape
        tokens = x.reshape(c, gh * gw).T
        h = matmul(tokens, w.w_in) + matmul(w.time_table[t : t + 1], w.time_proj)
        for block_id, bw in zip(self.block_ids, w.blocks):
            h = h + constants.BRANCH_SCALE * self._self_attention(block_id, bw, h, t, hooks)
            h = h + constants.BRANCH_SCALE * self._cross_attention(block_id, bw, h, ctx)
            h = h + constants.BRANCH_SCALE * self._mlp(bw, h)
        out = constants.OUTPUT_SCALE * matmul(layer_norm_rows(h, constants.EPS), w.w_out)
        return out.T.reshape(c, gh, gw)


class LinearDenoiserWeights(BaseModel):
    """eps = A vec(x), with A scaled to spectral norm rho"""

    model_config = ConfigDict(extra="forbid", frozen=True, arbitrary_types_allowed=True)

    a: np.ndarray
    """D x D matrix"""

    rho: Annotated[float, Field(gt=0.0)]
    """Spectral norm A was scaled to"""

    seed: int
    """Seed A was drawn from"""

    @model_validator(mode="after")
    def check_square(self):
        if self.a.ndim != 2 or self.a.shape[0] != self.a.shape[1]:
            raise ValueError(f"A must be square, got shape {self.a.shape}")
        return self

    @property
    def dim(self) -> int:
        return self.a.shape[0]


def spectral_norm_estimate(
    a: Tensor, iterations: int = constants.POWER_ITERATIONS, seed: int = 0
) -> float:
    """Largest singular value of `a` by power iteration on A^T A from a seeded start"""
    v = randn(SeededRng(seed), (a.shape[1], 1))
    v = v / np.linalg.norm(v)
    for _ in range(iterations):
        v = matmul(a.T, matmul(a, v))
        v = v / np.linalg.norm(v)
    return float(np.linalg.norm(matmul(a, v)))


def make_linear_weights(
    dim: int, rho: float = constants.LINEAR_RHO, seed: int = constants.WEIGHTS_SEED
) -> LinearDenoiserWeights:
    """Draw a Gaussian D x D matrix and rescale it to spectral norm `rho`"""
    if dim < 1:
        raise ParameterError(f"Linear denoiser dimension must be positive, got {dim}")
    raw = randn(SeededRng(seed), (dim, dim))
    sigma = spectral_norm_estimate(raw, seed=seed)
    return LinearDenoiserWeights(a=raw * (rho / sigma), rho=rho, seed=seed)


class LinearDenoiser:
    """Context- and hook-free oracle denoiser, eps(x) = A vec(x)"""

    def __init__(self, weights: LinearDenoiserWeights):
        self.weights = weights

    def predict_noise(
        self,
        x: Tensor,
        t: int,
        ctx: Optional[ContextBundle] = None,
        hooks: Sequence[AttentionHook] = (),
    ) -> Tensor:
        x = as_tensor(x)
        if x.size != self.weights.dim:
            raise DimensionError(
                f"Latent of shape {x.shape} has {x.size} entries; A is {self.weights.a.shape}"
            )
        return matmul(self.weights.a, x.reshape(-1, 1)).reshape(x.shape)


def make_denoiser(weights: DenoiserWeights | LinearDenoiserWeights) -> NoisePredictor:
    if isinstance(weights, LinearDenoiserWeights):
        return LinearDenoiser(weights)
    return ToyDenoiser(weights)


def predict_noise(
    x: Tensor,
    t: int,
    ctx: ContextBundle,
    hooks: Sequence[AttentionHook],
    w: DenoiserWeights | LinearDenoiserWeights,
) -> Tensor:
    """Functional form of `NoisePredictor.predict_noise` for either kind of weights"""
    return make_denoiser(w).predict_noise(x, t, ctx, hooks)


def cfg_combine(eps_uncond: Tensor, eps_cond: Tensor, s: float) -> Tensor:
    """Classifier-free guidance, eps_uncond + s (eps_cond - eps_uncond)"""
    eps_uncond, eps_cond = as_tensor(eps_uncond), as_tensor(eps_cond)
    if eps_uncond.shape != eps_cond.shape:
        raise shape_mismatch("cfg_combine", eps_uncond.shape, eps_cond.shape)
    return eps_uncond + s * (eps_cond - eps_uncond)
