import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from deskstyle.core.configs import StyleTransferConfig
from deskstyle.core.enums import DenoiserKind, SweepAxis
from deskstyle.evaluation.studies import seeded_image
from deskstyle.evaluation.sweeps import SweepSpec, parse_sweep_values, run_sweep

SIZE = 16


@pytest.fixture(scope="module")
def images():
    return seeded_image(11, SIZE), seeded_image(12, SIZE)


def test_parse_sweep_values():
    assert parse_sweep_values("0, 0.5,1") == ["0", "0.5", "1"]
    assert parse_sweep_values("[5,6],4,[3,4,5,6]") == ["[5,6]", "4", "[3,4,5,6]"]


def test_spec_normalizes_values():
    spec = SweepSpec(axis="alpha", values="0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")
    assert spec.axis is SweepAxis.alpha
    assert len(spec.values) == 11 and spec.values[-1] == 1.0
    assert SweepSpec(axis="spi_n", values="0,1,5").values == [0, 1, 5]

    blocks = SweepSpec(axis="blocks", values="[5,6],4")
    assert [v.label for v in blocks.values] == ["[5,6]", "4"]

    table = SweepSpec(axis="blocks", values="table")
    assert [v.label for v in table.values] == [
        "1",
        "2",
        "3",
        "4",
        "5",
        "6",
        "[5,6]",
        "[4,5,6]",
        "[3,4,5,6]",
        "[2,3,4,5,6]",
    ]


@pytest.mark.parametrize(
    "axis, values",
    [
        ("alpha", "0.5,1.2"),
        ("spi_n", "2,-1"),
        ("guidance", "-3"),
        ("alpha", ""),
        ("blocks", "up-9"),
    ],
)
def test_spec_rejects_bad_values(axis, values):
    with pytest.raises(ValidationError):
        SweepSpec(axis=axis, values=values)


def test_labels():
    assert SweepSpec(axis="alpha", values="0.3").label(0.3) == "alpha=0.3"
    assert SweepSpec(axis="spi_n", values="5").label(5) == "spi_n=5"
    blocks = SweepSpec(axis="blocks", values="[5,6]")
    assert blocks.label(blocks.values[0]) == "blocks=5;6"


def test_point_config():
    base = StyleTransferConfig(T=4)
    alpha = SweepSpec(axis="alpha", values="0.7")
    assert alpha.point_config(base, 0.7).alpha_s == pytest.approx(0.3)
    assert SweepSpec(axis="guidance", values="1").point_config(base, 1.0).guidance_scale == 1.0
    blocks = SweepSpec(axis="blocks", values="4")
    assert blocks.point_config(base, blocks.values[0]).injection.label == "4"


def test_alpha_sweep(images, tmp_path):
    out = tmp_path / "alpha.csv"
    spec = SweepSpec(axis="alpha", values=[i / 10 for i in range(11)])
    df = run_sweep(*images, StyleTransferConfig(T=2), spec, out)
    assert len(df) == 11
    assert df["variant"].iloc[4] == "alpha=0.4"
    assert np.allclose(df["alpha_c"] + df["alpha_s"], 1.0)
    assert pd.read_csv(out)["variant"].tolist() == df["variant"].tolist()


def test_spi_n_sweep_improves_reconstruction(images, tmp_path):
    spec = SweepSpec(axis="spi_n", values="0,1,2,3,5,8")
    base = StyleTransferConfig(T=10, denoiser=DenoiserKind.linear)
    errors = run_sweep(*images, base, spec, tmp_path / "spi.csv")["recon_error"].tolist()
    assert errors[-1] < errors[0]
    for before, after in zip(errors, errors[1:]):
        assert after <= before + 1e-6


def test_block_table_sweep(images, tmp_path):
    spec = SweepSpec(axis="blocks", values="table")
    df = run_sweep(*images, StyleTransferConfig(T=2, diagnostics=False), spec, tmp_path / "b.csv")
    assert len(df) == 10
    assert df["variant"].tolist()[-4:] == [
        "blocks=5;6",
        "blocks=4;5;6",
        "blocks=3;4;5;6",
        "blocks=2;3;4;5;6",
    ]
    assert df["blocks"].iloc[0] == "1"
