"""End-to-end style transfer: dual inversion, style K/V capture, AdaIN initialization and
injected, guided sampling."""

import time
from contextlib import contextmanager
from functools import cached_property, lru_cache
from typing import Dict, Iterator, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from tqdm import tqdm

from deskstyle.core.attention import AttentionHook, ContextBundle
from deskstyle.core.codec import CodecWeights, decode, encode, make_codec_weights
from deskstyle.core.configs import StyleTransferConfig
from deskstyle.core.denoiser import (
    ArchitectureConfig,
    DenoiserWeights,
    LinearDenoiser,
    LinearDenoiserWeights,
    NoisePredictor,
    ToyDenoiser,
    make_denoiser_weights,
    make_linear_weights,
)
from deskstyle.core.diffusion import (
    LatentTrajectory,
    NoiseSchedule,
    invert,
    make_schedule,
    sample,
    unconditional_context,
)
from deskstyle.core.enums import AblationVariant, DenoiserKind
from deskstyle.core.style import (
    AttentionSnapshotStore,
    EmbedderWeights,
    adain,
    ca_adain,
    capture_hook,
    extract_embedding,
    make_embedder_weights,
    sgsa_hook,
    text_tokens,
)
from deskstyle.core.tensor import Tensor, as_tensor, rms
from deskstyle.exceptions import DimensionError, StageError, shape_mismatch
from deskstyle.settings import logger

STAGES = (
    "encode",
    "embed",
    "invert-style",
    "invert-content",
    "init-noise",
    "sample",
    "decode",
    "diagnostics",
)


@lru_cache(maxsize=8)
def _codec(seed: int, patch_size: int) -> CodecWeights:
    return make_codec_weights(seed, patch_size)


@lru_cache(maxsize=4)
def _toy_weights(seed: int, latent_channels: int) -> DenoiserWeights:
    return make_denoiser_weights(ArchitectureConfig(latent_channels=latent_channels), seed)


@lru_cache(maxsize=4)
def _linear_weights(dim: int, rho: float, seed: int) -> LinearDenoiserWeights:
    return make_linear_weights(dim, rho, seed)


@lru_cache(maxsize=8)
def _embedder(image_shape: Tuple[int, int, int], seed: int) -> EmbedderWeights:
    return make_embedder_weights(image_shape, seed)


@contextmanager
def stage(name: str, timings: Dict[str, float], verbose: bool = False) -> Iterator[None]:
    """Time a pipeline stage and attribute any failure inside it to `name`"""
    if verbose:
        logger.info(f"Stage {name}")
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        raise StageError(name, e) from e
    finally:
        timings[name] = time.perf_counter() - start


class TransferReport(BaseModel):
    """Everything a transfer produced"""

    model_config = ConfigDict(extra="forbid", frozen=True, arbitrary_types_allowed=True)

    stylized: np.ndarray
    """3 x H x W output image in [0, 1]"""

    x_T_c: np.ndarray
    """Inverted content latent"""

    x_T_s: np.ndarray
    """Inverted style latent"""

    x_T_cs: np.ndarray
    """Initial noise after (CA-)AdaIN"""

    content_trajectory: LatentTrajectory
    """Content inversion trajectory"""

    style_trajectory: LatentTrajectory
    """Style inversion trajectory"""

    snapshots: AttentionSnapshotStore
    """Style self-attention K/V captured during style inversion"""

    timings: Dict[str, float]
    """Seconds spent per stage"""

    config: StyleTransferConfig
    """Config the transfer ran with"""

    reconstruction: Optional[np.ndarray] = None
    """Content image reconstructed from x_T_c (diagnostics only)"""

    content_roundtrip_error: Optional[float] = None
    """RMS pixel distance between the reconstruction and the content image"""

    @model_validator(mode="after")
    def check_stylized(self):
        if not np.all(np.isfinite(self.stylized)):
            raise ValueError("Stylized image has non-finite values")
        if self.stylized.min() < 0.0 or self.stylized.max() > 1.0:
            raise ValueError("Stylized image values must lie in [0, 1]")
        return self


def _readonly(a: Tensor) -> Tensor:
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


class StyleTransferEngine:
    def __init__(self, cfg: StyleTransferConfig, image_shape: Tuple[int, int, int]):
        """Builds (and caches) the seeded components a config needs for one image size

        Args:
            cfg (StyleTransferConfig): Transfer config
            image_shape (Tuple[int, int, int]): 3 x H x W shape of both images
        """
        self.cfg = cfg
        self.image_shape = tuple(int(s) for s in image_shape)

    @cached_property
    def codec(self) -> CodecWeights:
        return _codec(self.cfg.codec_seed, self.cfg.patch_size)

    @cached_property
    def latent_shape(self) -> Tuple[int, int, int]:
        _, h, w = self.image_shape
        p = self.cfg.patch_size
        return (self.codec.latent_channels, h // p, w // p)

    @cached_property
    def denoiser(self) -> NoisePredictor:
        if self.cfg.denoiser is DenoiserKind.linear:
            c, h, w = self.latent_shape
            weights = _linear_weights(c * h * w, self.cfg.linear_rho, self.cfg.weights_seed)
            return LinearDenoiser(weights)
        return ToyDenoiser(_toy_weights(self.cfg.weights_seed, self.codec.latent_channels))

    @property
    def has_attention(self) -> bool:
        return self.cfg.denoiser is DenoiserKind.toy

    @cached_property
    def embedder(self) -> EmbedderWeights:
        return _embedder(self.image_shape, self.cfg.embedder_seed)

    @cached_property
    def schedule(self) -> NoiseSchedule:
        return make_schedule(self.cfg.T)

    def inversion_context(
        self, prompt: str, content_tokens: Tensor, style_tokens: Tensor
    ) -> ContextBundle:
        """Inversion always sees both image streams, whatever the dfca switch says"""
        return ContextBundle(
            text_tokens=text_tokens(prompt),
            content_tokens=content_tokens,
            style_tokens=style_tokens,
        )

    def sampling_context(self, content_tokens: Tensor, style_tokens: Tensor) -> ContextBundle:
        if not self.cfg.dfca:
            return ContextBundle(text_tokens=text_tokens(self.cfg.prompt_content))
        return self.inversion_context(self.cfg.prompt_content, content_tokens, style_tokens)

    def run(self, content_img: Tensor, style_img: Tensor, verbose: bool = False) -> TransferReport:
        """Stylize `content_img` with `style_img`.

        Args:
            content_img (Tensor): 3 x H x W content image in [0, 1]
            style_img (Tensor): 3 x H x W style image in [0, 1]
            verbose (bool, optional): Log stage progress. Defaults to False.

        Raises:
            StageError: A stage failed; `.stage` names it and the cause is chained

        Returns:
            TransferReport: Output image, latents, trajectories and timings
        """
        cfg, timings = self.cfg, {}
        sched = self.schedule
        spi_cfg = cfg.spi_config

        with stage("encode", timings, verbose):
            content_img, style_img = as_tensor(content_img), as_tensor(style_img)
            if content_img.shape != style_img.shape:
                raise shape_mismatch("content vs style image", content_img.shape, style_img.shape)
            if content_img.shape != self.image_shape:
                raise DimensionError(
                    f"Engine built for images of shape {self.image_shape}, got {content_img.shape}"
                )
            z_c, z_s = encode(content_img, self.codec), encode(style_img, self.codec)

        with stage("embed", timings, verbose):
            c_tok = extract_embedding(content_img, self.embedder)
            s_tok = extract_embedding(style_img, self.embedder)

        store = AttentionSnapshotStore()
        with stage("invert-style", timings, verbose):
            hooks: list[AttentionHook] = []
            if cfg.sgsa and self.has_attention:
                hooks.append(capture_hook(store, cfg.injection))
            ctx_s = self.inversion_context(cfg.prompt_style, c_tok, s_tok)
            traj_s = invert(z_s, self.denoiser, ctx_s, spi_cfg, sched, hooks)
            store.freeze()

        with stage("invert-content", timings, verbose):
            ctx_c = self.inversion_context(cfg.prompt_content, c_tok, s_tok)
            traj_c = invert(z_c, self.denoiser, ctx_c, spi_cfg, sched)

        with stage("init-noise", timings, verbose):
            if cfg.ca_adain:
                x_cs = ca_adain(traj_c.x_T, traj_s.x_T, cfg.ca_adain_params)
            else:
                x_cs = adain(traj_c.x_T, traj_s.x_T)

        with stage("sample", timings, verbose):
            hooks = []
            if cfg.sgsa and self.has_attention:
                hooks.append(sgsa_hook(store, cfg.injection))
            x_0 = sample(
                x_cs,
                self.denoiser,
                self.sampling_context(c_tok, s_tok),
                cfg.guidance_scale,
                sched,
                hooks,
                uncond_ctx=unconditional_context(),
            )

        with stage("decode", timings, verbose):
            stylized = decode(x_0, self.codec)

        reconstruction, roundtrip_error = None, None
        if cfg.diagnostics:
            with stage("diagnostics", timings, verbose):
                recon_latent = sample(traj_c.x_T, self.denoiser, ctx_c, 1.0, sched)
                reconstruction = _readonly(decode(recon_latent, self.codec))
                roundtrip_error = rms(reconstruction, content_img)
                if verbose:
                    logger.info(f"Content round-trip RMS error: {roundtrip_error:.6f}")

        return TransferReport(
            stylized=_readonly(stylized),
            x_T_c=_readonly(traj_c.x_T),
            x_T_s=_readonly(traj_s.x_T),
            x_T_cs=_readonly(x_cs),
            content_trajectory=traj_c,
            style_trajectory=traj_s,
            snapshots=store,
            timings=timings,
            config=cfg,
            reconstruction=reconstruction,
            content_roundtrip_error=roundtrip_error,
        )


def transfer(
    content_img: Tensor,
    style_img: Tensor,
    cfg: Optional[StyleTransferConfig] = None,
    verbose: bool = False,
) -> TransferReport:
    """Run one style transfer; see `StyleTransferEngine.run`"""
    cfg = cfg or StyleTransferConfig()
    return StyleTransferEngine(cfg, np.shape(content_img)).run(content_img, style_img, verbose)


def ablation_suite(
    content_img: Tensor,
    style_img: Tensor,
    base_cfg: Optional[StyleTransferConfig] = None,
    verbose: bool = False,
) -> Dict[AblationVariant, TransferReport]:
    """Run the full method and each single-mechanism ablation

    Args:
        content_img (Tensor): Content image
        style_img (Tensor): Style image
        base_cfg (StyleTransferConfig, optional): Config of the full variant.
            Defaults to StyleTransferConfig().
        verbose (bool, optional): Show a progress bar and log stages. Defaults to False.

    Returns:
        Dict[AblationVariant, TransferReport]: One report per variant, in reporting order
    """
    base_cfg = base_cfg or StyleTransferConfig()
    reports = {}
    for variant in tqdm(list(AblationVariant), desc="Ablations", disable=not verbose):
        if verbose:
            logger.info(f"Running variant {variant.value}")
        reports[variant] = transfer(content_img, style_img, base_cfg.ablated(variant), verbose)
    return reports
