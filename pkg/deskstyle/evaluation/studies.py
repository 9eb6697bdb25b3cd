"""Paired studies of inversion accuracy against the number of fixed-point refinements."""

from collections import namedtuple
from typing import Iterable, List, Sequence

import numpy as np
import pandas as pd
from statsmodels.stats.descriptivestats import sign_test  # type: ignore
from tqdm import tqdm

from deskstyle import constants
from deskstyle.core.attention import ContextBundle
from deskstyle.core.denoiser import NoisePredictor
from deskstyle.core.diffusion import NoiseSchedule, SpiConfig, invert, sample
from deskstyle.core.tensor import SeededRng, Tensor, rms
from deskstyle.settings import logger

PairedComparison = namedtuple(
    "PairedComparison", ["baseline_n", "candidate_n", "pairs", "wins", "p_value"]
)


def seeded_image(seed: int, size: int = constants.DEFAULT_IMAGE_SIZE) -> Tensor:
    """Uniform-noise 3 x size x size image drawn from `seed`"""
    shape = (constants.IMAGE_CHANNELS, size, size)
    return SeededRng(seed).uniform(int(np.prod(shape))).reshape(shape)


def roundtrip_error(
    x_0: Tensor,
    denoiser: NoisePredictor,
    ctx: ContextBundle,
    n: int,
    sched: NoiseSchedule,
) -> float:
    """RMS distance between `x_0` and sample(invert(x_0)), both at guidance 1"""
    trajectory = invert(x_0, denoiser, ctx, SpiConfig(n=n), sched)
    return rms(sample(trajectory.x_T, denoiser, ctx, 1.0, sched), x_0)


def inversion_study(
    latents: Sequence[Tensor],
    n_values: Iterable[int],
    denoiser: NoisePredictor,
    ctx: ContextBundle,
    sched: NoiseSchedule,
    verbose: bool = False,
) -> pd.DataFrame:
    """Round-trip error of every latent for every refinement count

    Args:
        latents (Sequence[Tensor]): Clean latents; their position is reported as `seed`
        n_values (Iterable[int]): Refinement counts to compare
        denoiser (NoisePredictor): Noise predictor
        ctx (ContextBundle): Context used in both directions
        sched (NoiseSchedule): Schedule
        verbose (bool, optional): Show progress. Defaults to False.

    Returns:
        pd.DataFrame: Tidy frame with columns seed, n, roundtrip_rms
    """
    n_values = list(n_values)
    records: List[dict] = []
    for seed, x_0 in enumerate(tqdm(latents, desc="Inversion study", disable=not verbose)):
        for n in n_values:
            error = roundtrip_error(x_0, denoiser, ctx, n, sched)
            records.append({"seed": seed, "n": n, "roundtrip_rms": error})
            logger.debug(f"seed={seed} n={n}: round-trip RMS {error:.3e}")
    return pd.DataFrame.from_records(records, columns=["seed", "n", "roundtrip_rms"])


def paired_improvement(
    df: pd.DataFrame, baseline_n: int, candidate_n: int
) -> PairedComparison:
    """Count seeds where `candidate_n` strictly beats `baseline_n`, with a two-sided sign test

    Args:
        df (pd.DataFrame): Output of `inversion_study`
        baseline_n (int): Reference refinement count
        candidate_n (int): Refinement count under test

    Returns:
        PairedComparison: Number of pairs, strict wins of the candidate and sign-test p-value
    """
    wide = df.pivot(index="seed", columns="n", values="roundtrip_rms")
    diffs = (wide[baseline_n] - wide[candidate_n]).to_numpy()
    wins = int(np.sum(diffs > 0))
    _, p_value = sign_test(diffs, mu0=0.0)
    return PairedComparison(baseline_n, candidate_n, len(diffs), wins, float(p_value))
