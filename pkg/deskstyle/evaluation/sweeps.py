from pathlib import Path
from typing import Any, List

import pandas as pd
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from tqdm import tqdm

from deskstyle.core.configs import StyleTransferConfig
from deskstyle.core.enums import SweepAxis
from deskstyle.core.pipeline import transfer
from deskstyle.core.style import InjectionConfig
from deskstyle.core.tensor import Tensor
from deskstyle.evaluation.metrics import MetricsRow, metrics_row, write_metrics_csv
from deskstyle.settings import logger
from deskstyle.utils import split_top_level

BLOCK_TABLE = "table"


def parse_sweep_values(text: str) -> List[str]:
    """Split a comma-separated value list, keeping bracketed block sets such as `[5,6]` whole"""
    return split_top_level(text)


class SweepSpec(BaseModel):
    """One axis of a parameter sweep and the values to visit, in order.

    Values are validated and normalized for their axis: `alpha` values are alpha_c in [0, 1],
    `spi_n` values are non-negative integers, `guidance` values are non-negative floats and
    `blocks` values are block sets (the single value `table` expands to the ten up-path rows
    of the injection-block study).
    """

    model_config = ConfigDict(extra="forbid")

    axis: SweepAxis
    """Parameter to vary"""

    values: List[Any]
    """Values to visit, in output order"""

    @field_validator("values", mode="before")
    @classmethod
    def values_listify(cls, v: Any):
        if isinstance(v, str):
            v = parse_sweep_values(v)
        elif not isinstance(v, list):
            v = list(v)
        return v

    @model_validator(mode="after")
    def normalize_values(self):
        if not self.values:
            raise ValueError("A sweep needs at least one value")
        if self.axis is SweepAxis.blocks:
            if [str(v).strip() for v in self.values] == [BLOCK_TABLE]:
                self.values = InjectionConfig.table_rows()
            else:
                self.values = [
                    v if isinstance(v, InjectionConfig) else InjectionConfig(blocks=v)
                    for v in self.values
                ]
        elif self.axis is SweepAxis.spi_n:
            self.values = [int(v) for v in self.values]
            if any(v < 0 for v in self.values):
                raise ValueError(f"spi_n values must be non-negative, got {self.values}")
        else:
            self.values = [float(v) for v in self.values]
            if any(v < 0 for v in self.values):
                raise ValueError(f"{self.axis} values must be non-negative, got {self.values}")
            if self.axis is SweepAxis.alpha and any(v > 1 for v in self.values):
                raise ValueError(f"alpha values must lie in [0, 1], got {self.values}")
        return self

    def label(self, value: Any) -> str:
        if isinstance(value, InjectionConfig):
            return f"{self.axis}={value.csv_label}"
        return f"{self.axis}={value:g}"

    def point_config(self, base_cfg: StyleTransferConfig, value: Any) -> StyleTransferConfig:
        """`base_cfg` with this axis set to `value`"""
        if self.axis is SweepAxis.alpha:
            return base_cfg.with_overrides(alpha_c=value)
        if self.axis is SweepAxis.spi_n:
            return base_cfg.with_overrides(spi_n=value)
        if self.axis is SweepAxis.guidance:
            return base_cfg.with_overrides(guidance_scale=value)
        return base_cfg.with_overrides(injection_blocks=value.blocks)


def run_sweep(
    content: Tensor,
    style: Tensor,
    base_cfg: StyleTransferConfig,
    spec: SweepSpec,
    out_path: Path,
    verbose: bool = False,
) -> pd.DataFrame:
    """Run one transfer per sweep value and write the metrics CSV

    Args:
        content (Tensor): Content image
        style (Tensor): Style image
        base_cfg (StyleTransferConfig): Config every point starts from
        spec (SweepSpec): Axis and values
        out_path (Path): CSV destination, written once after every point ran
        verbose (bool, optional): Show progress. Defaults to False.

    Raises:
        OSError: Destination not writable

    Returns:
        pd.DataFrame: The rows written, in `spec.values` order
    """
    rows: List[MetricsRow] = []
    for value in tqdm(spec.values, desc=f"Sweep {spec.axis}", disable=not verbose):
        cfg = spec.point_config(base_cfg, value)
        report = transfer(content, style, cfg)
        rows.append(metrics_row(spec.label(value), report, content, style))
        if verbose:
            logger.info(f"{spec.label(value)}: recon_error={rows[-1].recon_error:.6f}")
    return write_metrics_csv(rows, out_path, verbose=verbose)
