"""Style machinery: key/value capture and injection, (content-aware) AdaIN, dual-feature
cross-attention, and the seeded image and text embedders that feed it.
"""

from typing import Any, Dict, FrozenSet, Iterator, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing_extensions import Annotated

from deskstyle import constants
from deskstyle.core.attention import (
    AttentionHook,
    BlockId,
    ContextBundle,
    CrossAttentionWeights,
    all_blocks,
    cross_attention,
)
from deskstyle.core.enums import BlockPath, InjectionPreset
from deskstyle.core.tensor import SeededRng, Tensor, as_tensor, channel_moments, matmul, randn
from deskstyle.exceptions import (
    CaptureConflictError,
    DimensionError,
    InjectionMissError,
    shape_mismatch,
)
from deskstyle.utils import split_top_level

SnapshotKey = Tuple[BlockId, int]


class AttentionSnapshotStore:
    """Self-attention keys and values captured from the style image's inversion.

    Entries are keyed by `(block_id, t)` and written at most once. The store is filled during
    capture, then frozen and only read while sampling.
    """

    def __init__(self):
        self._entries: Dict[SnapshotKey, Tuple[Tensor, Tensor]] = {}
        self.frozen = False

    def put(self, block_id: BlockId, t: int, k: Tensor, v: Tensor) -> None:
        key = (block_id, int(t))
        if self.frozen:
            raise CaptureConflictError(f"Snapshot store is frozen; cannot write {block_id}, t={t}")
        if key in self._entries:
            raise CaptureConflictError(f"Snapshot for {block_id}, t={t} already captured")
        if k.shape[0] != v.shape[0]:
            raise shape_mismatch("snapshot (key vs value tokens)", k.shape, v.shape)
        k, v = k.copy(), v.copy()
        k.flags.writeable = False
        v.flags.writeable = False
        self._entries[key] = (k, v)

    def get(self, block_id: BlockId, t: int) -> Tuple[Tensor, Tensor]:
        try:
            return self._entries[(block_id, int(t))]
        except KeyError:
            raise InjectionMissError(f"No snapshot captured for {block_id}, t={t}") from None

    def freeze(self) -> "AttentionSnapshotStore":
        self.frozen = True
        return self

    def keys(self) -> List[SnapshotKey]:
        return sorted(self._entries, key=lambda key: (key[0].sort_key, key[1]))

    def __contains__(self, key: SnapshotKey) -> bool:
        return (key[0], int(key[1])) in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[SnapshotKey]:
        return iter(self.keys())


def _preset_blocks(preset: InjectionPreset) -> FrozenSet[BlockId]:
    blocks = all_blocks()
    if preset is InjectionPreset.late:
        return frozenset(BlockId.parse(b) for b in constants.DEFAULT_INJECTION_BLOCKS)
    if preset is InjectionPreset.up:
        return frozenset(b for b in blocks if b.path is BlockPath.up)
    if preset is InjectionPreset.down:
        return frozenset(b for b in blocks if b.path is BlockPath.down)
    return frozenset(blocks)


def parse_blocks(value: Any) -> FrozenSet[BlockId]:
    """Coerce a block-set description into a frozenset of BlockIds.

    Accepts a preset name (`late`, `up`, `down`, `all`), a label such as `5`, `[5,6]`, `5;6`
    or `up-5,up-6`, or any iterable of BlockIds, block strings or up-path indices.
    """
    if value is None:
        return _preset_blocks(InjectionPreset.late)
    if isinstance(value, (int, BlockId)):
        return frozenset([BlockId.parse(value)])
    if isinstance(value, str):
        text = value.strip()
        if text in {p.value for p in InjectionPreset}:
            return _preset_blocks(InjectionPreset(text))
        text = text.strip("[]").replace(";", ",")
        return frozenset(BlockId.parse(item) for item in split_top_level(text))
    return frozenset(BlockId.parse(item) for item in value)


class InjectionConfig(BaseModel):
    """Which blocks receive the style image's self-attention keys and values"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    blocks: FrozenSet[BlockId] = Field(
        default_factory=lambda: _preset_blocks(InjectionPreset.late)
    )
    """Blocks whose self-attention uses the captured style K/V (default: up-5 and up-6)"""

    @field_validator("blocks", mode="before")
    @classmethod
    def blocks_valid(cls, v: Any):
        return parse_blocks(v)

    @classmethod
    def from_preset(cls, preset: InjectionPreset | str) -> "InjectionConfig":
        return cls(blocks=_preset_blocks(InjectionPreset(preset)))

    @classmethod
    def table_rows(cls) -> List["InjectionConfig"]:
        """The ten up-path block sets of the injection-block sweep, in reporting order"""
        singles = [cls(blocks=[i]) for i in range(1, constants.UP_BLOCKS + 1)]
        tails = [
            cls(blocks=range(start, constants.UP_BLOCKS + 1))
            for start in range(constants.UP_BLOCKS - 1, 1, -1)
        ]
        return singles + tails

    @property
    def ordered(self) -> List[BlockId]:
        return sorted(self.blocks, key=lambda b: b.sort_key)

    @property
    def label(self) -> str:
        """`5` for a single up block, `[5,6]` for several, full names once off the up path"""
        if all(b.path is BlockPath.up for b in self.blocks):
            names = [str(b.index) for b in self.ordered]
        else:
            names = [str(b) for b in self.ordered]
        return names[0] if len(names) == 1 else "[" + ",".join(names) + "]"

    @property
    def csv_label(self) -> str:
        return self.label.strip("[]").replace(",", ";")


class CaAdainParams(BaseModel):
    """Content and style weights of content-aware AdaIN, summing to one"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    alpha_c: Annotated[float, Field(ge=0.0, le=1.0)] = constants.DEFAULT_ALPHA_C
    """Weight of the content statistics"""

    alpha_s: Annotated[float, Field(ge=0.0, le=1.0)] = constants.DEFAULT_ALPHA_S
    """Weight of the style statistics"""

    @model_validator(mode="before")
    @classmethod
    def fill_missing_alpha(cls, data: Any):
        if isinstance(data, dict):
            data = dict(data)
            has_c, has_s = data.get("alpha_c") is not None, data.get("alpha_s") is not None
            if has_c and not has_s:
                data["alpha_s"] = 1.0 - float(data["alpha_c"])
            elif has_s and not has_c:
                data["alpha_c"] = 1.0 - float(data["alpha_s"])
        return data

    @model_validator(mode="after")
    def check_sum(self):
        if abs(self.alpha_c + self.alpha_s - 1.0) > constants.ALPHA_SUM_TOLERANCE:
            raise ValueError(
                f"alpha_c + alpha_s must equal 1, got {self.alpha_c} + {self.alpha_s}"
            )
        return self


class _CaptureHook(AttentionHook):
    def __init__(self, store: AttentionSnapshotStore, watch: InjectionConfig):
        super().__init__(watch.blocks)
        self.store = store

    def on_attention(self, block_id, t, q, k, v):
        self.store.put(block_id, t, k, v)
        return None


class _InjectionHook(AttentionHook):
    def __init__(self, store: AttentionSnapshotStore, inject: InjectionConfig):
        super().__init__(inject.blocks)
        self.store = store

    def on_attention(self, block_id, t, q, k, v):
        return self.store.get(block_id, t)


def capture_hook(store: AttentionSnapshotStore, watch: InjectionConfig) -> AttentionHook:
    """Hook recording self-attention (K, V) at the watched blocks, keyed by timestep.

    The hook never alters K or V. Writing the same `(block, t)` twice raises
    `CaptureConflictError`.
    """
    return _CaptureHook(store, watch)


def sgsa_hook(store: AttentionSnapshotStore, inject: InjectionConfig) -> AttentionHook:
    """Hook swapping the live K, V for the captured style K, V at the injected blocks.

    The live query is kept, so the block computes Softmax(Q^c K^s^T / sqrt(d)) V^s. A visited
    `(block, t)` without a snapshot raises `InjectionMissError`.
    """
    return _InjectionHook(store, inject)


def _check_same_shape(what: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise shape_mismatch(what, a.shape, b.shape)


def adain(x: Tensor, y: Tensor) -> Tensor:
    """Re-standardize each channel of `x` to the mean and std of `y`"""
    return ca_adain(x, y, CaAdainParams(alpha_c=0.0, alpha_s=1.0))


def ca_adain(x_c: Tensor, x_s: Tensor, p: CaAdainParams) -> Tensor:
    """Content-aware AdaIN: blend content and style channel statistics.

    (alpha_s sigma(x_s) + alpha_c sigma(x_c)) (x_c - mu(x_c)) / sigma(x_c)
    + (alpha_s mu(x_s) + alpha_c mu(x_c)), channel-wise, with `constants.EPS` added to every
    variance. `alpha_s == 0` returns `x_c` unchanged.

    Args:
        x_c (Tensor): C x H x W content tensor
        x_s (Tensor): C x H x W style tensor
        p (CaAdainParams): Blend weights

    Raises:
        DimensionError: Shapes differ

    Returns:
        Tensor: C x H x W tensor
    """
    x_c, x_s = as_tensor(x_c), as_tensor(x_s)
    _check_same_shape("ca_adain", x_c, x_s)
    if p.alpha_s == 0.0:
        return x_c.copy()
    mu_c, sigma_c = channel_moments(x_c, constants.EPS)
    mu_s, sigma_s = channel_moments(x_s, constants.EPS)
    scale = p.alpha_s * sigma_s + p.alpha_c * sigma_c
    shift = p.alpha_s * mu_s + p.alpha_c * mu_c
    standardized = (x_c - mu_c[:, None, None]) / sigma_c[:, None, None]
    return scale[:, None, None] * standardized + shift[:, None, None]


class EmbedderWeights(BaseModel):
    """Seeded stand-in for a pretrained image encoder"""

    model_config = ConfigDict(extra="forbid", frozen=True, arbitrary_types_allowed=True)

    pool: Annotated[int, Field(ge=1)]
    """Average-pooling factor"""

    image_shape: Tuple[int, int, int]
    """C x H x W shape the projection was built for"""

    tokens: Annotated[int, Field(ge=1)]
    """Number of output tokens L_i"""

    token_dim: Annotated[int, Field(ge=1)]
    """Token width d_c"""

    proj: np.ndarray
    """in_dim x (tokens * token_dim) projection"""

    seed: int
    """Seed the projection was drawn from"""

    @model_validator(mode="after")
    def check_proj(self):
        expected = (self.in_dim, self.tokens * self.token_dim)
        if self.proj.shape != expected:
            raise ValueError(f"proj must be {expected}, got {self.proj.shape}")
        return self

    @property
    def in_dim(self) -> int:
        c, h, w = self.image_shape
        return c * (h // self.pool) * (w // self.pool)


def make_embedder_weights(
    image_shape: Tuple[int, int, int],
    seed: int = constants.EMBEDDER_SEED,
    pool: int = constants.EMBED_POOL,
    tokens: int = constants.IMAGE_TOKENS,
    token_dim: int = constants.CONTEXT_DIM,
) -> EmbedderWeights:
    """Draw the embedder projection for images of `image_shape`.

    Raises:
        DimensionError: Spatial size is not divisible by the pooling factor
    """
    c, h, w = image_shape
    if h % pool or w % pool or h == 0 or w == 0:
        raise DimensionError(f"Image size {h} x {w} is not divisible by pool factor {pool}")
    in_dim = c * (h // pool) * (w // pool)
    proj = randn(SeededRng(seed), (in_dim, tokens * token_dim)) / np.sqrt(in_dim)
    return EmbedderWeights(
        pool=pool,
        image_shape=(c, h, w),
        tokens=tokens,
        token_dim=token_dim,
        proj=proj,
        seed=seed,
    )


def extract_embedding(img: Tensor, w: EmbedderWeights) -> Tensor:
    """Rescale to [-1, 1], average-pool, flatten and project to L_i x d_c tokens"""
    img = as_tensor(img)
    if img.shape != w.image_shape:
        raise shape_mismatch("extract_embedding", img.shape, w.image_shape)
    c, h, width = img.shape
    p = w.pool
    pooled = (2.0 * img - 1.0).reshape(c, h // p, p, width // p, p).mean(axis=(2, 4))
    return matmul(pooled.reshape(1, -1), w.proj).reshape(w.tokens, w.token_dim)


def text_tokens(
    prompt: str, tokens: int = constants.TEXT_TOKENS, token_dim: int = constants.CONTEXT_DIM
) -> Tensor:
    """Fixed pseudo-embedding of a prompt, drawn from a generator seeded by its hash"""
    return randn(SeededRng.from_text(prompt), (tokens, token_dim))


def dfca_streams(q: Tensor, ctx: ContextBundle, w: CrossAttentionWeights) -> Dict[str, Tensor]:
    """Per-stream cross-attention outputs; absent image streams are zero.

    Args:
        q (Tensor): L x d queries of the current block
        ctx (ContextBundle): Conditioning tokens
        w (CrossAttentionWeights): The block's key/value projections

    Raises:
        DimensionError: Token width does not match the projections

    Returns:
        Dict[str, Tensor]: `text`, `content` and `style` outputs, each L x d
    """
    if ctx.token_dim != w.context_dim:
        raise DimensionError(
            f"Context tokens have width {ctx.token_dim}, projections expect {w.context_dim}"
        )
    phi = {"text": cross_attention(q, ctx.text_tokens, w.text_k, w.text_v, w.heads)}
    for name, tokens in (("content", ctx.content_tokens), ("style", ctx.style_tokens)):
        if tokens is None:
            phi[name] = np.zeros((q.shape[0], w.image_v.shape[1]))
        else:
            phi[name] = cross_attention(q, tokens, w.image_k, w.image_v, w.heads)
    return phi


def dfca(q: Tensor, ctx: ContextBundle, w: CrossAttentionWeights) -> Tensor:
    """Dual-feature cross-attention: phi_text + phi_content + phi_style"""
    phi = dfca_streams(q, ctx, w)
    if ctx.content_tokens is None and ctx.style_tokens is None:
        return phi["text"]
    return phi["text"] + phi["content"] + phi["style"]


def image_context(
    prompt: str,
    content_tokens: Optional[Tensor] = None,
    style_tokens: Optional[Tensor] = None,
) -> ContextBundle:
    """Context bundle for a prompt plus optional image streams"""
    return ContextBundle(
        text_tokens=text_tokens(prompt),
        content_tokens=content_tokens,
        style_tokens=style_tokens,
    )
