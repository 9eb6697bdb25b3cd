import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from pydantic import ValidationError

from deskstyle import constants
from deskstyle.core.attention import ContextBundle
from deskstyle.core.denoiser import LinearDenoiser, make_linear_weights
from deskstyle.core.diffusion import (
    LatentTrajectory,
    NoiseSchedule,
    SpiConfig,
    ddim_step,
    invert,
    inversion_step_exact_form,
    make_schedule,
    sample,
    spi_invert_step,
    spi_iterates,
    virtual_timesteps,
)
from deskstyle.core.style import text_tokens
from deskstyle.core.tensor import SeededRng, identity, randn
from deskstyle.evaluation.selftest import linear_fixed_point
from deskstyle.exceptions import ParameterError

SHAPE = (4, 4, 4)


@pytest.fixture(scope="module")
def sched():
    return make_schedule(20)


@pytest.fixture(scope="module")
def ctx():
    return ContextBundle(text_tokens=text_tokens(""))


@pytest.fixture(scope="module")
def linear():
    return LinearDenoiser(make_linear_weights(int(np.prod(SHAPE)), rho=0.5, seed=0))


def test_schedule_shape_and_monotonicity(sched):
    assert sched.alpha_bar[0] == 1.0
    assert sched.alpha_bar.shape == (21,)
    assert np.all(np.diff(sched.alpha_bar) < 0)
    assert np.all(sched.alpha_bar > 0)


def test_schedule_matches_scripted_cumulative_product(sched):
    betas = [
        (
            constants.BETA_START**0.5
            + (constants.BETA_END**0.5 - constants.BETA_START**0.5) * i / 999
        )
        ** 2
        for i in range(1000)
    ]
    running, virtual = 1.0, []
    for beta in betas:
        running *= 1.0 - beta
        virtual.append(running)
    assert sched.alpha_bar[1] == pytest.approx(virtual[49], abs=1e-6)
    assert sched.alpha_bar[20] == pytest.approx(virtual[999], abs=1e-6)
    assert list(virtual_timesteps(20)[:3]) == [49, 99, 149]


def test_schedule_errors():
    with pytest.raises(ParameterError):
        make_schedule(0)
    with pytest.raises(ParameterError):
        make_schedule(1001)
    with pytest.raises(ValidationError):
        NoiseSchedule(T=2, alpha_bar=np.array([1.0, 0.5, 0.7]))
    with pytest.raises(ValidationError):
        NoiseSchedule(T=1, alpha_bar=np.array([0.9, 0.5]))


def test_ddim_step(sched):
    rng = SeededRng(1)
    x, eps = randn(rng, SHAPE), randn(rng, SHAPE)
    ab_t, ab_prev = sched.alpha_bar[10], sched.alpha_bar[9]
    assert_allclose(ddim_step(x, 10, np.zeros(SHAPE), sched), np.sqrt(ab_prev / ab_t) * x)

    x0 = (x - np.sqrt(1 - ab_t) * eps) / np.sqrt(ab_t)
    expected = np.sqrt(ab_prev) * x0 + np.sqrt(1 - ab_prev) * eps
    assert_allclose(ddim_step(x, 10, eps, sched), expected, atol=1e-6)

    with pytest.raises(ParameterError):
        ddim_step(x, 0, eps, sched)
    with pytest.raises(ParameterError):
        ddim_step(x, 21, eps, sched)


def test_inversion_step(sched):
    rng = SeededRng(2)
    x, eps = randn(rng, SHAPE), randn(rng, SHAPE)
    ab_t, ab_prev = sched.alpha_bar[10], sched.alpha_bar[9]
    zero = inversion_step_exact_form(x, 10, np.zeros(SHAPE), sched)
    assert_allclose(zero, np.sqrt(ab_t / ab_prev) * x)

    coeff = np.sqrt(1 - ab_t) - np.sqrt(ab_t / ab_prev) * np.sqrt(1 - ab_prev)
    unit = inversion_step_exact_form(np.zeros(SHAPE), 10, np.ones(SHAPE), sched)
    assert_allclose(unit, coeff * np.ones(SHAPE), atol=1e-6)
    assert coeff > 0


def test_inverse_pair_property(sched):
    rng = SeededRng(3)
    for _ in range(200):
        t = 1 + int(rng.uniform(1)[0] * sched.T)
        x, eps = randn(rng, SHAPE), randn(rng, SHAPE)
        back = ddim_step(inversion_step_exact_form(x, t, eps, sched), t, eps, sched)
        assert np.max(np.abs(back - x)) <= 1e-5


def test_spi_n0_is_naive_inversion(sched, ctx, linear):
    x_prev = randn(SeededRng(4), SHAPE)
    naive = inversion_step_exact_form(x_prev, 5, linear.predict_noise(x_prev, 5, ctx), sched)
    assert_array_equal(spi_invert_step(x_prev, 5, linear, ctx, SpiConfig(n=0), sched), naive)


def test_spi_converges_to_linear_fixed_point(sched, ctx, linear):
    rng = SeededRng(5)
    bound_slack = 1e-6
    for t in range(1, sched.T + 1):
        x_prev = randn(rng, SHAPE)
        target = linear_fixed_point(linear.weights.a, x_prev, t, sched)
        iterates = spi_iterates(x_prev, t, linear, ctx, SpiConfig(n=5), sched)
        assert len(iterates) == 7
        residuals = [np.linalg.norm(x - target) for x in iterates]
        factor = sched.contraction(t) * linear.weights.rho + bound_slack
        for before, after in zip(residuals, residuals[1:]):
            assert after <= factor * before + 1e-12
        assert residuals[-1] <= 1e-3 * np.linalg.norm(target)


def test_fixed_point_oracle_solves_equation(sched):
    a = make_linear_weights(8, seed=1).a
    x_prev = randn(SeededRng(6), (8,))
    x_t = linear_fixed_point(a, x_prev, 4, sched)
    ab_t, ab_prev = sched.alpha_bar[4], sched.alpha_bar[3]
    rhs = np.sqrt(ab_t / ab_prev) * x_prev + np.sqrt(ab_t) * sched.gamma(4) * (a @ x_t)
    assert_allclose(x_t, rhs, atol=1e-10)


def test_linear_round_trip(sched, ctx, linear):
    x_0 = randn(SeededRng(7), SHAPE)
    traj = invert(x_0, linear, ctx, SpiConfig(n=5), sched)
    assert isinstance(traj, LatentTrajectory)
    assert traj.T == 20 and len(traj.states) == 21 and len(traj.step_gaps) == 20
    assert_array_equal(traj.x_0, x_0)
    back = sample(traj.x_T, linear, ctx, 1.0, sched)
    assert np.linalg.norm(back - x_0) / np.linalg.norm(x_0) <= 1e-3


def test_sample_matches_hand_loop_and_affine_composition(sched, ctx, linear):
    x_T = randn(SeededRng(8), SHAPE)
    out = sample(x_T, linear, ctx, 1.0, sched)

    x = x_T
    for t in range(sched.T, 0, -1):
        x = ddim_step(x, t, linear.predict_noise(x, t, ctx), sched)
    assert_array_equal(out, x)

    a = linear.weights.a
    total = identity(a.shape[0])
    for t in range(sched.T, 0, -1):
        ab_t, ab_prev = sched.alpha_bar[t], sched.alpha_bar[t - 1]
        eps_coeff = np.sqrt(1 - ab_prev) - np.sqrt(ab_prev * (1 - ab_t) / ab_t)
        step = np.sqrt(ab_prev / ab_t) * identity(a.shape[0]) + eps_coeff * a
        total = step @ total
    assert_allclose(out.reshape(-1), total @ x_T.reshape(-1), atol=1e-4)
    assert_array_equal(sample(x_T, linear, ctx, 1.0, sched), out)


class _Counting:
    def __init__(self, inner):
        self.inner, self.calls = inner, []

    def predict_noise(self, x, t, ctx, hooks=()):
        self.calls.append((t, ctx))
        return self.inner.predict_noise(x, t, ctx, hooks)


def test_guidance_evaluations(sched, ctx, linear):
    counting = _Counting(linear)
    sample(randn(SeededRng(9), SHAPE), counting, ctx, 1.0, sched)
    assert len(counting.calls) == sched.T

    counting = _Counting(linear)
    sample(randn(SeededRng(9), SHAPE), counting, ctx, 3.0, sched)
    assert len(counting.calls) == 2 * sched.T


def test_hooks_only_on_final_refinement(sched, ctx, linear):
    seen = []

    class Spy:
        def predict_noise(self, x, t, ctx, hooks=()):
            seen.append(len(hooks))
            return linear.predict_noise(x, t, ctx)

    invert(randn(SeededRng(10), SHAPE), Spy(), ctx, SpiConfig(n=3), make_schedule(2), ["hook"])
    assert seen == [0, 0, 0, 1, 0, 0, 0, 1]
