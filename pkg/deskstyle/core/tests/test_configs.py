import unittest

import pytest
from pydantic import ValidationError

from deskstyle.core.attention import BlockId
from deskstyle.core.configs import StyleTransferConfig
from deskstyle.core.enums import AblationVariant, DenoiserKind


class StyleTransferConfigTests(unittest.TestCase):
    def test_defaults(self):
        cfg = StyleTransferConfig()
        self.assertEqual(cfg.T, 20)
        self.assertEqual(cfg.spi_n, 5)
        self.assertEqual((cfg.alpha_c, cfg.alpha_s), (0.4, 0.6))
        self.assertEqual(cfg.guidance_scale, 3.0)
        self.assertEqual(cfg.injection.label, "[5,6]")
        self.assertEqual((cfg.weights_seed, cfg.codec_seed, cfg.embedder_seed), (0, 1, 2))
        self.assertTrue(cfg.sgsa and cfg.spi and cfg.ca_adain and cfg.dfca)
        self.assertIs(cfg.denoiser, DenoiserKind.toy)

    def test_seed_expansion(self):
        cfg = StyleTransferConfig(seed=7)
        self.assertEqual((cfg.weights_seed, cfg.codec_seed, cfg.embedder_seed), (7, 8, 9))
        cfg = StyleTransferConfig(seed=7, codec_seed=100)
        self.assertEqual(cfg.codec_seed, 100)

    def test_alpha_pair(self):
        self.assertAlmostEqual(StyleTransferConfig(alpha_c=0.3).alpha_s, 0.7)
        self.assertAlmostEqual(StyleTransferConfig(alpha_s=0.9).alpha_c, 0.1)
        with self.assertRaises(ValidationError):
            StyleTransferConfig(alpha_c=0.3, alpha_s=0.3)

    def test_validation(self):
        with self.assertRaises(ValidationError):
            StyleTransferConfig(T=0)
        with self.assertRaises(ValidationError):
            StyleTransferConfig(spi_n=-1)
        with self.assertRaises(ValidationError):
            StyleTransferConfig(injection_blocks="up-9")
        with self.assertRaises(ValidationError):
            StyleTransferConfig(not_a_field=1)

    def test_blocks_forms(self):
        cfg = StyleTransferConfig(injection_blocks="[4,5,6]")
        self.assertEqual(cfg.injection.label, "[4,5,6]")
        cfg = StyleTransferConfig(injection_blocks=[BlockId.parse("down-1")])
        self.assertEqual(cfg.injection.label, "down-1")

    def test_ablated(self):
        base = StyleTransferConfig()
        self.assertEqual(base.ablated(AblationVariant.full), base)
        self.assertFalse(base.ablated(AblationVariant.no_spi).spi)
        self.assertEqual(base.ablated(AblationVariant.no_spi).spi_config.n, 0)
        self.assertFalse(base.ablated(AblationVariant.no_dfca).dfca)
        self.assertTrue(base.ablated(AblationVariant.no_dfca).sgsa)

    def test_with_overrides(self):
        base = StyleTransferConfig(alpha_c=0.2, injection_blocks="late")
        cfg = base.with_overrides(alpha_c=0.9)
        self.assertAlmostEqual(cfg.alpha_s, 0.1)
        self.assertEqual(cfg.injection_blocks, base.injection_blocks)
        self.assertEqual(base.with_overrides(spi_n=None), base)


def test_from_file_with_overrides(tmp_path):
    path = tmp_path / "transfer.cfg"
    path.write_text(
        "# transfer settings\n"
        "T = 8\n"
        "alpha_c = 0.25  # content weight\n"
        "injection_blocks = [4,5,6]\n"
        "prompt_style = an oil painting\n"
        "weights_seed = 3\n"
        "sgsa = false\n"
    )
    cfg = StyleTransferConfig.from_file(path)
    assert cfg.T == 8
    assert cfg.alpha_s == 0.75
    assert cfg.injection.label == "[4,5,6]"
    assert cfg.prompt_style == "an oil painting"
    assert cfg.sgsa is False

    overridden = StyleTransferConfig.from_file(path, alpha_s=0.5, seed=11, T=None)
    assert overridden.alpha_c == 0.5
    assert overridden.T == 8
    assert overridden.weights_seed == 11


def test_from_file_errors(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("T 8\n")
    with pytest.raises(ValueError, match="bad.cfg:1"):
        StyleTransferConfig.from_file(path)

    path.write_text("colour = blue\n")
    with pytest.raises(ValidationError):
        StyleTransferConfig.from_file(path)
