import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_array_equal
from pandas.testing import assert_frame_equal

from deskstyle.core.attention import ContextBundle
from deskstyle.core.codec import encode, make_codec_weights
from deskstyle.core.denoiser import (
    ArchitectureConfig,
    LinearDenoiser,
    ToyDenoiser,
    make_denoiser_weights,
    make_linear_weights,
)
from deskstyle.core.diffusion import make_schedule
from deskstyle.core.style import text_tokens
from deskstyle.core.tensor import SeededRng, randn
from deskstyle.evaluation.studies import (
    inversion_study,
    paired_improvement,
    roundtrip_error,
    seeded_image,
)

SHAPE = (4, 4, 4)


@pytest.fixture(scope="module")
def ctx():
    return ContextBundle(text_tokens=text_tokens(""))


@pytest.fixture(scope="module")
def linear():
    return LinearDenoiser(make_linear_weights(int(np.prod(SHAPE)), rho=0.5, seed=2))


def test_seeded_image():
    img = seeded_image(3, 8)
    assert img.shape == (3, 8, 8)
    assert 0.0 <= img.min() and img.max() < 1.0
    assert_array_equal(seeded_image(3, 8), img)
    assert not np.array_equal(seeded_image(4, 8), img)


def test_refinement_shrinks_roundtrip_error(ctx, linear):
    sched = make_schedule(10)
    x_0 = randn(SeededRng(20), SHAPE)
    refined = roundtrip_error(x_0, linear, ctx, 5, sched)
    assert refined < roundtrip_error(x_0, linear, ctx, 0, sched)


def test_paired_improvement_on_linear_oracle(ctx, linear):
    latents = [randn(SeededRng(100 + seed), SHAPE) for seed in range(10)]
    df = inversion_study(latents, [0, 5], linear, ctx, make_schedule(10))
    assert isinstance(df, pd.DataFrame)
    assert list(df.columns) == ["seed", "n", "roundtrip_rms"]
    assert len(df) == 20
    assert_frame_equal(inversion_study(latents, [0, 5], linear, ctx, make_schedule(10)), df)

    result = paired_improvement(df, baseline_n=0, candidate_n=5)
    assert (result.baseline_n, result.candidate_n, result.pairs) == (0, 5, 10)
    assert result.wins == 10
    assert result.p_value == pytest.approx(2 * 0.5**10)


def test_study_on_toy_latents(ctx):
    codec = make_codec_weights(seed=1)
    toy = ToyDenoiser(make_denoiser_weights(ArchitectureConfig(), seed=0))
    latents = [encode(seeded_image(seed, 8), codec) for seed in range(2)]
    df = inversion_study(latents, [0, 2], toy, ctx, make_schedule(3))
    assert df["seed"].tolist() == [0, 0, 1, 1]
    assert df["n"].tolist() == [0, 2, 0, 2]
    assert np.all(np.isfinite(df["roundtrip_rms"]))


def test_refinement_beats_naive_inversion_on_toy_latents(ctx):
    codec = make_codec_weights(seed=1)
    toy = ToyDenoiser(make_denoiser_weights(ArchitectureConfig(), seed=0))
    latents = [encode(seeded_image(500 + seed, 32), codec) for seed in range(10)]
    df = inversion_study(latents, [0, 5], toy, ctx, make_schedule(10))
    assert paired_improvement(df, baseline_n=0, candidate_n=5).wins >= 9
