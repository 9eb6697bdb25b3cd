"""Noise schedule, deterministic DDIM sampling and fixed-point (SPI) inversion."""

from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing_extensions import Annotated

from deskstyle import constants
from deskstyle.core.attention import AttentionHook, ContextBundle
from deskstyle.core.denoiser import NoisePredictor, cfg_combine
from deskstyle.core.style import text_tokens
from deskstyle.core.tensor import Tensor, as_tensor
from deskstyle.exceptions import DimensionError, ParameterError, shape_mismatch
from deskstyle.settings import logger


class NoiseSchedule(BaseModel):
    """Signal fractions alpha_bar[0..T] of a T-step sampler"""

    model_config = ConfigDict(extra="forbid", frozen=True, arbitrary_types_allowed=True)

    T: Annotated[int, Field(ge=1)]
    """Number of sampling steps"""

    alpha_bar: np.ndarray
    """alpha_bar[0] = 1, strictly decreasing, all in (0, 1]"""

    @model_validator(mode="after")
    def check_alpha_bar(self):
        ab = self.alpha_bar
        if ab.shape != (self.T + 1,):
            raise ValueError(f"alpha_bar must have T + 1 = {self.T + 1} entries, got {ab.shape}")
        if ab[0] != 1.0:
            raise ValueError(f"alpha_bar[0] must be 1, got {ab[0]}")
        if np.any(ab <= 0.0) or np.any(ab > 1.0):
            raise ValueError("alpha_bar must lie in (0, 1]")
        if np.any(np.diff(ab) >= 0.0):
            raise ValueError("alpha_bar must be strictly decreasing")
        return self

    def check_step(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ParameterError(f"Timestep {t} outside 1..{self.T}")

    def gamma(self, t: int) -> float:
        """sqrt(1/alpha_bar_t - 1) - sqrt(1/alpha_bar_{t-1} - 1)"""
        self.check_step(t)
        ab_t, ab_prev = self.alpha_bar[t], self.alpha_bar[t - 1]
        return float(np.sqrt(1.0 / ab_t - 1.0) - np.sqrt(1.0 / ab_prev - 1.0))

    def contraction(self, t: int) -> float:
        """Lipschitz factor of one inversion step per unit Lipschitz constant of eps"""
        return float(abs(np.sqrt(self.alpha_bar[t]) * self.gamma(t)))


def virtual_timesteps(T: int) -> np.ndarray:
    """Index into the 1000-step ladder used by each of steps 1..T"""
    return np.array([constants.VIRTUAL_STEPS * t // T - 1 for t in range(1, T + 1)])


def make_schedule(T: int = constants.DEFAULT_T) -> NoiseSchedule:
    """Scaled-linear schedule: sqrt(beta) linear from sqrt(BETA_START) to sqrt(BETA_END).

    Betas are laid out over `constants.VIRTUAL_STEPS` steps and alpha_bar is their cumulative
    product of (1 - beta); step t of T reads virtual index floor(1000 t / T) - 1, so step T
    is the last virtual step.

    Args:
        T (int, optional): Step count, 1..1000. Defaults to `constants.DEFAULT_T`.

    Raises:
        ParameterError: T outside 1..1000

    Returns:
        NoiseSchedule: The subsampled schedule
    """
    if not 1 <= T <= constants.VIRTUAL_STEPS:
        raise ParameterError(f"T must be in 1..{constants.VIRTUAL_STEPS}, got {T}")
    betas = (
        np.linspace(
            np.sqrt(constants.BETA_START), np.sqrt(constants.BETA_END), constants.VIRTUAL_STEPS
        )
        ** 2
    )
    virtual = np.cumprod(1.0 - betas)
    alpha_bar = np.concatenate([[1.0], virtual[virtual_timesteps(T)]])
    return NoiseSchedule(T=T, alpha_bar=alpha_bar)


class SpiConfig(BaseModel):
    """Fixed-point refinement of each inversion step"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    n: Annotated[int, Field(ge=0)] = constants.DEFAULT_SPI_N
    """Refinement iterations; 0 is plain DDIM inversion"""


class LatentTrajectory(BaseModel):
    """States x_0..x_T visited by an inversion"""

    model_config = ConfigDict(extra="forbid", frozen=True, arbitrary_types_allowed=True)

    states: List[np.ndarray]
    """x_0 first, x_T last"""

    step_gaps: List[float] = []
    """Per step t = 1..T, sup-norm distance between the last two fixed-point iterates"""

    @model_validator(mode="after")
    def check_states(self):
        if not self.states:
            raise ValueError("A trajectory needs at least x_0")
        shapes = {s.shape for s in self.states}
        if len(shapes) != 1:
            raise ValueError(f"Trajectory states disagree in shape: {shapes}")
        return self

    @property
    def T(self) -> int:
        return len(self.states) - 1

    @property
    def x_0(self) -> Tensor:
        return self.states[0]

    @property
    def x_T(self) -> Tensor:
        return self.states[-1]


def _check_pair(what: str, x: Tensor, eps: Tensor) -> None:
    if x.shape != eps.shape:
        raise shape_mismatch(what, x.shape, eps.shape)


def ddim_step(x_t: Tensor, t: int, eps: Tensor, sched: NoiseSchedule) -> Tensor:
    """One deterministic (eta = 0) DDIM step from x_t to x_{t-1}"""
    sched.check_step(t)
    x_t, eps = as_tensor(x_t), as_tensor(eps)
    _check_pair("ddim_step", x_t, eps)
    ab_t, ab_prev = sched.alpha_bar[t], sched.alpha_bar[t - 1]
    x0_pred = (x_t - np.sqrt(1.0 - ab_t) * eps) / np.sqrt(ab_t)
    return np.sqrt(ab_prev) * x0_pred + np.sqrt(1.0 - ab_prev) * eps


def inversion_step_exact_form(
    x_prev: Tensor, t: int, eps: Tensor, sched: NoiseSchedule
) -> Tensor:
    """Map x_{t-1} to x_t given the noise prediction at x_t.

    x_t = sqrt(ab_t / ab_{t-1}) x_{t-1} + sqrt(ab_t) gamma_t eps, the algebraic inverse of
    `ddim_step` for a fixed `eps`.
    """
    sched.check_step(t)
    x_prev, eps = as_tensor(x_prev), as_tensor(eps)
    _check_pair("inversion_step_exact_form", x_prev, eps)
    ab_t, ab_prev = sched.alpha_bar[t], sched.alpha_bar[t - 1]
    return np.sqrt(ab_t / ab_prev) * x_prev + np.sqrt(ab_t) * sched.gamma(t) * eps


def spi_iterates(
    x_prev: Tensor,
    t: int,
    denoiser: NoisePredictor,
    ctx: ContextBundle,
    cfg: SpiConfig,
    sched: NoiseSchedule,
    hooks: Sequence[AttentionHook] = (),
) -> List[Tensor]:
    """Every fixed-point iterate of one inversion step, x^0 = x_{t-1} through x^{n+1}.

    Each iterate re-evaluates the noise prediction at the previous iterate while keeping
    x_{t-1} as the starting point. Hooks only see the last evaluation (at x^n).
    """
    sched.check_step(t)
    iterates = [as_tensor(x_prev)]
    for i in range(1, cfg.n + 2):
        step_hooks = hooks if i == cfg.n + 1 else ()
        eps = denoiser.predict_noise(iterates[-1], t, ctx, step_hooks)
        iterates.append(inversion_step_exact_form(x_prev, t, eps, sched))
    return iterates


def spi_invert_step(
    x_prev: Tensor,
    t: int,
    denoiser: NoisePredictor,
    ctx: ContextBundle,
    cfg: SpiConfig,
    sched: NoiseSchedule,
    hooks: Sequence[AttentionHook] = (),
) -> Tensor:
    """Style-preserving inversion step: the final fixed-point iterate x^{n+1}"""
    return spi_iterates(x_prev, t, denoiser, ctx, cfg, sched, hooks)[-1]


def invert(
    x_0: Tensor,
    denoiser: NoisePredictor,
    ctx: ContextBundle,
    cfg: SpiConfig,
    sched: NoiseSchedule,
    hooks: Sequence[AttentionHook] = (),
) -> LatentTrajectory:
    """Invert a clean latent to noise with `spi_invert_step` for t = 1..T.

    Args:
        x_0 (Tensor): Clean latent
        denoiser (NoisePredictor): Noise predictor
        ctx (ContextBundle): Conditioning used at every evaluation (guidance 1)
        cfg (SpiConfig): Refinement iterations
        sched (NoiseSchedule): Schedule
        hooks (Sequence[AttentionHook], optional): Consulted on the final refinement pass of
            every step, keyed by t. Defaults to ().

    Returns:
        LatentTrajectory: x_0..x_T and the per-step fixed-point gaps
    """
    states, gaps = [as_tensor(x_0)], []
    for t in range(1, sched.T + 1):
        iterates = spi_iterates(states[-1], t, denoiser, ctx, cfg, sched, hooks)
        gap = float(np.max(np.abs(iterates[-1] - iterates[-2])))
        logger.debug(f"inversion t={t}/{sched.T}: fixed-point gap {gap:.3e}")
        states.append(iterates[-1])
        gaps.append(gap)
    return LatentTrajectory(states=states, step_gaps=gaps)


def unconditional_context(token_dim: int = constants.CONTEXT_DIM) -> ContextBundle:
    """Empty-prompt text tokens, no image streams"""
    return ContextBundle(text_tokens=text_tokens("", token_dim=token_dim))


def sample(
    x_T: Tensor,
    denoiser: NoisePredictor,
    ctx: ContextBundle,
    guidance_scale: float,
    sched: NoiseSchedule,
    hooks: Sequence[AttentionHook] = (),
    uncond_ctx: Optional[ContextBundle] = None,
) -> Tensor:
    """Deterministic DDIM loop t = T..1 with classifier-free guidance.

    At `guidance_scale == 1` only the conditional branch is evaluated; otherwise both
    branches are, each with the same hooks.

    Args:
        x_T (Tensor): Initial noise latent
        denoiser (NoisePredictor): Noise predictor
        ctx (ContextBundle): Conditional context
        guidance_scale (float): CFG scale s
        sched (NoiseSchedule): Schedule
        hooks (Sequence[AttentionHook], optional): Consulted at every evaluation.
            Defaults to ().
        uncond_ctx (ContextBundle, optional): Unconditional context. Defaults to the
            empty-prompt context without image streams.

    Returns:
        Tensor: x_0
    """
    x = as_tensor(x_T)
    if x.ndim != 3:
        raise DimensionError(f"Expected a C x h x w latent, got shape {x.shape}")
    if guidance_scale != 1.0 and uncond_ctx is None:
        uncond_ctx = unconditional_context(ctx.token_dim)
    for t in range(sched.T, 0, -1):
        eps_cond = denoiser.predict_noise(x, t, ctx, hooks)
        if guidance_scale == 1.0:
            eps = eps_cond
        else:
            eps_uncond = denoiser.predict_noise(x, t, uncond_ctx, hooks)
            eps = cfg_combine(eps_uncond, eps_cond, guidance_scale)
        x = ddim_step(x, t, eps, sched)
    return x
