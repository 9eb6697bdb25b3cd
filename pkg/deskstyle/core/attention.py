"""Attention primitives shared by the toy denoiser and the style machinery.

Everything here is architecture-agnostic: block identifiers, the conditioning bundle fed to
cross-attention, the hook interface consulted at every self-attention, and the scaled
dot-product attention itself.
"""

import math
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from deskstyle import constants
from deskstyle.core.enums import BlockPath
from deskstyle.core.tensor import Tensor, as_tensor, matmul, softmax_rows
from deskstyle.exceptions import DimensionError, HookContractError, shape_mismatch

BLOCK_COUNTS = {
    BlockPath.down: constants.DOWN_BLOCKS,
    BlockPath.mid: constants.MID_BLOCKS,
    BlockPath.up: constants.UP_BLOCKS,
}
_PATH_ORDER = {BlockPath.down: 0, BlockPath.mid: 1, BlockPath.up: 2}


class BlockId(BaseModel):
    """Identifies one transformer block of the toy UNet, e.g. `up-5`"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    path: BlockPath
    """Stage of the network"""

    index: int
    """1-based position within the stage"""

    @model_validator(mode="after")
    def check_index(self):
        count = BLOCK_COUNTS[self.path]
        if not 1 <= self.index <= count:
            raise ValueError(f"{self.path} blocks are numbered 1..{count}, got {self.index}")
        return self

    @classmethod
    def parse(cls, value: "str | int | dict | BlockId") -> "BlockId":
        """Parse `up-5`, `up5` or a bare up-path index such as `5` or 5"""
        if isinstance(value, BlockId):
            return value
        if isinstance(value, dict):
            return cls.model_validate(value)
        if isinstance(value, int):
            return cls(path=BlockPath.up, index=value)
        text = value.strip().lower()
        if text.isdigit():
            return cls(path=BlockPath.up, index=int(text))
        for path in BlockPath:
            if text.startswith(path.value):
                suffix = text[len(path.value) :].lstrip("-_")
                if suffix.isdigit():
                    return cls(path=path, index=int(suffix))
        raise ValueError(f"Cannot parse block id {value!r}")

    @property
    def sort_key(self) -> Tuple[int, int]:
        return (_PATH_ORDER[self.path], self.index)

    def __str__(self) -> str:
        return f"{self.path.value}-{self.index}"


def all_blocks() -> List[BlockId]:
    """Every block in forward order: down path, mid, then up path"""
    return [
        BlockId(path=path, index=i)
        for path in (BlockPath.down, BlockPath.mid, BlockPath.up)
        for i in range(1, BLOCK_COUNTS[path] + 1)
    ]


class ContextBundle(BaseModel):
    """Conditioning tokens for cross-attention.

    The text stream is always present. The content and style image streams are optional and
    contribute nothing when absent.
    """

    model_config = ConfigDict(extra="forbid", frozen=True, arbitrary_types_allowed=True)

    text_tokens: np.ndarray
    """L_t x d_c text tokens"""

    content_tokens: Optional[np.ndarray] = None
    """L_i x d_c content-image tokens"""

    style_tokens: Optional[np.ndarray] = None
    """L_i x d_c style-image tokens"""

    @model_validator(mode="after")
    def check_token_dims(self):
        dims = set()
        for name in ("text_tokens", "content_tokens", "style_tokens"):
            tokens = getattr(self, name)
            if tokens is None:
                continue
            if tokens.ndim != 2:
                raise ValueError(f"{name} must be 2-D, got shape {tokens.shape}")
            dims.add(tokens.shape[1])
        if len(dims) > 1:
            raise ValueError(f"All context streams must share one token width, got {dims}")
        return self

    @property
    def token_dim(self) -> int:
        return self.text_tokens.shape[1]

    def without_images(self) -> "ContextBundle":
        """Same text stream, image streams dropped"""
        return ContextBundle(text_tokens=self.text_tokens)

    def restricted_to(self, content: bool, style: bool) -> "ContextBundle":
        """Keep the text stream and only the requested image streams"""
        return ContextBundle(
            text_tokens=self.text_tokens,
            content_tokens=self.content_tokens if content else None,
            style_tokens=self.style_tokens if style else None,
        )


class AttentionHook:
    """Callback consulted at every self-attention of the blocks it watches.

    Subclasses override `on_attention`, which may return replacement `(K, V)` or `None` to
    keep the originals. The query is handed over read-only. Every consultation is appended to
    `invocations` as `(block_id, t)`.

    Args:
        blocks (Iterable[BlockId], optional): Blocks to watch. None watches every block.
    """

    def __init__(self, blocks: Optional[Iterable[BlockId]] = None):
        self.blocks = None if blocks is None else frozenset(blocks)
        self.invocations: List[Tuple[BlockId, int]] = []

    def watches(self, block_id: BlockId) -> bool:
        return self.blocks is None or block_id in self.blocks

    def __call__(
        self, block_id: BlockId, t: int, q: Tensor, k: Tensor, v: Tensor
    ) -> Optional[Tuple[Tensor, Tensor]]:
        self.invocations.append((block_id, t))
        return self.on_attention(block_id, t, q, k, v)

    def on_attention(
        self, block_id: BlockId, t: int, q: Tensor, k: Tensor, v: Tensor
    ) -> Optional[Tuple[Tensor, Tensor]]:
        return None


def apply_hooks(
    hooks: Sequence[AttentionHook], block_id: BlockId, t: int, q: Tensor, k: Tensor, v: Tensor
) -> Tuple[Tensor, Tensor]:
    """Run every hook watching `block_id` in order, threading K and V through them.

    Raises:
        HookContractError: A hook returned K or V with a shape different from the original

    Returns:
        Tuple[Tensor, Tensor]: The keys and values attention should use
    """
    if not hooks:
        return k, v
    q_view = q.view()
    q_view.flags.writeable = False
    for hook in hooks:
        if not hook.watches(block_id):
            continue
        replaced = hook(block_id, t, q_view, k, v)
        if replaced is None:
            continue
        new_k, new_v = (as_tensor(a) for a in replaced)
        if new_k.shape != k.shape or new_v.shape != v.shape:
            raise HookContractError(
                f"Hook {type(hook).__name__} at {block_id}, t={t} returned K {new_k.shape} / "
                f"V {new_v.shape}; expected K {k.shape} / V {v.shape}"
            )
        k, v = new_k, new_v
    return k, v


def attention(q: Tensor, k: Tensor, v: Tensor, heads: int = 1) -> Tensor:
    """Multi-head scaled dot-product attention, Softmax(Q K^T / sqrt(d)) V per head.

    Args:
        q (Tensor): L_q x d queries
        k (Tensor): L_k x d keys
        v (Tensor): L_k x d_v values
        heads (int, optional): Number of heads; d and d_v must be divisible by it.
            Defaults to 1.

    Raises:
        DimensionError: Query/key widths or key/value token counts disagree

    Returns:
        Tensor: L_q x d_v attention output
    """
    if q.shape[1] != k.shape[1]:
        raise shape_mismatch("attention (query vs key width)", q.shape, k.shape)
    if k.shape[0] != v.shape[0]:
        raise shape_mismatch("attention (key vs value tokens)", k.shape, v.shape)
    if q.shape[1] % heads or v.shape[1] % heads:
        raise DimensionError(f"Widths {q.shape[1]}, {v.shape[1]} not divisible by {heads} heads")
    dh, dv = q.shape[1] // heads, v.shape[1] // heads
    scale = 1.0 / math.sqrt(dh)
    outputs = []
    for h in range(heads):
        qh, kh = q[:, h * dh : (h + 1) * dh], k[:, h * dh : (h + 1) * dh]
        weights = softmax_rows(matmul(qh, kh.T) * scale)
        outputs.append(matmul(weights, v[:, h * dv : (h + 1) * dv]))
    return np.concatenate(outputs, axis=1)


def cross_attention(
    q: Tensor, tokens: Tensor, w_k: Tensor, w_v: Tensor, heads: int = 1
) -> Tensor:
    """Attention of `q` over one conditioning stream projected by `w_k`, `w_v`"""
    if tokens.shape[1] != w_k.shape[0]:
        raise shape_mismatch("cross_attention (tokens vs projection)", tokens.shape, w_k.shape)
    return attention(q, matmul(tokens, w_k), matmul(tokens, w_v), heads=heads)


class CrossAttentionWeights(BaseModel):
    """Key/value projections of one block's cross-attention.

    The text stream uses `text_k`/`text_v`; both image streams share the decoupled
    `image_k`/`image_v` pair.
    """

    model_config = ConfigDict(extra="forbid", frozen=True, arbitrary_types_allowed=True)

    text_k: np.ndarray
    """d_c x d text key projection"""

    text_v: np.ndarray
    """d_c x d text value projection"""

    image_k: np.ndarray
    """d_c x d image key projection"""

    image_v: np.ndarray
    """d_c x d image value projection"""

    heads: int = constants.NUM_HEADS
    """Number of attention heads"""

    @model_validator(mode="after")
    def check_shapes(self):
        shapes = {a.shape for a in (self.text_k, self.text_v, self.image_k, self.image_v)}
        if len(shapes) != 1:
            raise ValueError(f"Cross-attention projections disagree in shape: {shapes}")
        return self

    @property
    def context_dim(self) -> int:
        return self.text_k.shape[0]
