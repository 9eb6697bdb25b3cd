"""Oracle and invariant suites runnable from an installed package (`deskstyle selftest`).

Each check raises AssertionError on failure. Sizes are reduced so the whole suite finishes in
seconds.
"""

import time
from collections import namedtuple
from typing import Callable, List, Tuple

import numpy as np

from deskstyle.core.attention import AttentionHook, BlockId, ContextBundle, CrossAttentionWeights
from deskstyle.core.codec import decode, encode, make_codec_weights
from deskstyle.core.denoiser import (
    ArchitectureConfig,
    LinearDenoiser,
    ToyDenoiser,
    make_denoiser_weights,
    make_linear_weights,
)
from deskstyle.core.diffusion import (
    NoiseSchedule,
    SpiConfig,
    ddim_step,
    inversion_step_exact_form,
    make_schedule,
    sample,
    spi_iterates,
)
from deskstyle.core.style import (
    AttentionSnapshotStore,
    CaAdainParams,
    InjectionConfig,
    adain,
    ca_adain,
    capture_hook,
    dfca,
    dfca_streams,
    sgsa_hook,
    text_tokens,
)
from deskstyle.core.tensor import SeededRng, Tensor, channel_moments, identity, randn
from deskstyle.evaluation.metrics import artfid
from deskstyle.evaluation.published import ablation_table, check_artfid, comparison_table
from deskstyle.settings import logger

CheckResult = namedtuple("CheckResult", ["name", "passed", "detail", "seconds"])


def linear_fixed_point(a: Tensor, x_prev: Tensor, t: int, sched: NoiseSchedule) -> Tensor:
    """Exact solution of x = sqrt(ab_t / ab_{t-1}) x_prev + sqrt(ab_t) gamma_t A x"""
    ab_t, ab_prev = sched.alpha_bar[t], sched.alpha_bar[t - 1]
    lhs = identity(a.shape[0]) - np.sqrt(ab_t) * sched.gamma(t) * a
    rhs = np.sqrt(ab_t / ab_prev) * x_prev.reshape(-1)
    return np.linalg.solve(lhs, rhs).reshape(x_prev.shape)


def check_published_artfid() -> str:
    assert abs(artfid(18.559, 0.467) - 28.693) <= 1e-3, "headline ArtFID not reproduced"
    for name, table in (("comparison", comparison_table()), ("ablation", ablation_table())):
        checked = check_artfid(table)
        bad = checked.loc[~checked["consistent"], "method"].tolist()
        assert not bad, f"{name} rows inconsistent: {bad}"
    return "all comparison and ablation rows within 0.02"


def check_inverse_pair(trials: int = 1000) -> str:
    sched = make_schedule(20)
    rng = SeededRng(101)
    worst = 0.0
    for _ in range(trials):
        t = 1 + int(rng.uniform(1)[0] * sched.T)
        x, eps = randn(rng, (4, 2, 2)), randn(rng, (4, 2, 2))
        back = ddim_step(inversion_step_exact_form(x, t, eps, sched), t, eps, sched)
        worst = max(worst, float(np.max(np.abs(back - x))))
    assert worst <= 1e-5, f"max deviation {worst:.3e}"
    return f"max deviation {worst:.2e} over {trials} triples"


def check_spi_contraction(seeds: int = 10, n: int = 5) -> str:
    sched = make_schedule(20)
    shape = (4, 4, 4)
    ctx = ContextBundle(text_tokens=text_tokens(""))
    worst_final = 0.0
    for seed in range(seeds):
        weights = make_linear_weights(int(np.prod(shape)), rho=0.5, seed=seed)
        denoiser = LinearDenoiser(weights)
        rng = SeededRng(1000 + seed)
        for t in range(1, sched.T + 1):
            x_prev = randn(rng, shape)
            target = linear_fixed_point(weights.a, x_prev, t, sched)
            residuals = [
                float(np.linalg.norm(x - target))
                for x in spi_iterates(x_prev, t, denoiser, ctx, SpiConfig(n=n), sched)
            ]
            bound = sched.contraction(t) * weights.rho + 1e-6
            for before, after in zip(residuals, residuals[1:]):
                assert after <= bound * before + 1e-12, f"t={t}: {after:.3e} after {before:.3e}"
            worst_final = max(worst_final, residuals[-1] / residuals[0])
    assert worst_final <= 1e-3, f"final/initial residual {worst_final:.3e}"
    return f"worst final/initial residual {worst_final:.2e}"


def check_ca_adain(pairs: int = 5) -> str:
    rng = SeededRng(202)
    for _ in range(pairs):
        x_c = 2.0 * randn(rng, (3, 4, 4)) + 1.0
        x_s = 0.5 * randn(rng, (3, 4, 4)) - 2.0
        mu_c, sigma_c = channel_moments(x_c)
        mu_s, sigma_s = channel_moments(x_s)
        for alpha_c in np.linspace(0.0, 1.0, 11):
            p = CaAdainParams(alpha_c=alpha_c)
            mu, sigma = channel_moments(ca_adain(x_c, x_s, p))
            np.testing.assert_allclose(mu, p.alpha_s * mu_s + p.alpha_c * mu_c, atol=1e-5)
            np.testing.assert_allclose(
                sigma, p.alpha_s * sigma_s + p.alpha_c * sigma_c, atol=1e-5
            )
        identity_out = ca_adain(x_c, x_s, CaAdainParams(alpha_c=1.0))
        np.testing.assert_allclose(identity_out, x_c, atol=1e-5)
        np.testing.assert_allclose(
            ca_adain(x_c, x_s, CaAdainParams(alpha_s=1.0)), adain(x_c, x_s), atol=1e-5
        )
    return f"{pairs} pairs x 11 weights"


def check_dfca_additivity() -> str:
    rng = SeededRng(303)
    w = CrossAttentionWeights(
        text_k=randn(rng, (8, 16)),
        text_v=randn(rng, (8, 16)),
        image_k=randn(rng, (8, 16)),
        image_v=randn(rng, (8, 16)),
        heads=2,
    )
    q = randn(rng, (5, 16))
    ctx = ContextBundle(
        text_tokens=randn(rng, (3, 8)),
        content_tokens=randn(rng, (4, 8)),
        style_tokens=randn(rng, (4, 8)),
    )
    streams = dfca_streams(q, ctx, w)
    np.testing.assert_allclose(
        dfca(q, ctx, w), streams["text"] + streams["content"] + streams["style"], atol=1e-5
    )
    text_only = ContextBundle(text_tokens=ctx.text_tokens)
    assert np.array_equal(dfca(q, text_only, w), streams["text"]), "absent streams not zero"
    return "sum of per-stream attentions"


def check_codec_roundtrip() -> str:
    w = make_codec_weights(seed=1)
    img = SeededRng(404).uniform(3 * 16 * 16).reshape(3, 16, 16)
    worst = float(np.max(np.abs(decode(encode(img, w), w, clamp=False) - img)))
    assert worst <= 1e-4, f"round-trip deviation {worst:.3e}"
    return f"max deviation {worst:.2e}"


def check_sgsa_noop_and_locality() -> str:
    denoiser = ToyDenoiser(make_denoiser_weights(ArchitectureConfig(), seed=0))
    sched = make_schedule(4)
    ctx = ContextBundle(text_tokens=text_tokens(""))
    x_T = randn(SeededRng(505), (48, 2, 2))
    inject = InjectionConfig()
    store = AttentionSnapshotStore()
    plain = sample(x_T, denoiser, ctx, 1.0, sched, [capture_hook(store, inject)])
    store.freeze()
    up5 = BlockId.parse("up-5")
    recorder = AttentionHook([up5])
    injected = sample(x_T, denoiser, ctx, 1.0, sched, [sgsa_hook(store, inject), recorder])
    assert np.array_equal(plain, injected), "self-substitution changed the output"
    assert {block for block, _ in recorder.invocations} == {up5}, "hook fired off its block"
    assert len(store) == len(inject.blocks) * sched.T
    return f"{len(store)} snapshots, output bit-identical"


CHECKS: List[Tuple[str, Callable[[], str]]] = [
    ("published ArtFID", check_published_artfid),
    ("inverse pair", check_inverse_pair),
    ("SPI contraction", check_spi_contraction),
    ("CA-AdaIN moments", check_ca_adain),
    ("DF-CA additivity", check_dfca_additivity),
    ("codec round trip", check_codec_roundtrip),
    ("SG-SA no-op and locality", check_sgsa_noop_and_locality),
]


def run_selftest(verbose: bool = False) -> List[CheckResult]:
    """Run every check in CHECKS, collecting failures instead of stopping at the first

    Args:
        verbose (bool, optional): Log each result. Defaults to False.

    Returns:
        List[CheckResult]: One result per check, in order
    """
    results = []
    for name, check in CHECKS:
        start = time.perf_counter()
        try:
            detail, passed = check(), True
        except Exception as e:
            detail, passed = f"{type(e).__name__}: {e}", False
        result = CheckResult(name, passed, detail, time.perf_counter() - start)
        if verbose:
            log = logger.info if passed else logger.error
            log(f"{'PASS' if passed else 'FAIL'} {name} ({result.seconds:.2f}s): {detail}")
        results.append(result)
    return results
