import math
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing_extensions import Annotated

from deskstyle import constants
from deskstyle.core.configs import StyleTransferConfig
from deskstyle.core.pipeline import TransferReport
from deskstyle.core.tensor import Tensor, as_tensor, channel_moments, rms
from deskstyle.exceptions import DimensionError, ParameterError
from deskstyle.settings import logger
from deskstyle.utils import atomic_write

NonNegative = Annotated[float, Field(ge=0.0)]


def artfid(fid: float, lpips: float) -> float:
    """Combined style/content score (1 + LPIPS) * (1 + FID); lower is better

    Raises:
        ParameterError: Either input is negative or not a number
    """
    for name, value in (("fid", fid), ("lpips", lpips)):
        if math.isnan(value) or value < 0:
            raise ParameterError(f"{name} must be a non-negative number, got {value}")
    return (1.0 + lpips) * (1.0 + fid)


def recon_error(a: Tensor, b: Tensor) -> float:
    """Root-mean-square pixel difference between two equally shaped images"""
    return rms(a, b)


def style_moment_distance(stylized: Tensor, style: Tensor) -> float:
    """L2 distance between the concatenated per-channel (mean, std) vectors of two images

    Raises:
        DimensionError: Channel counts differ
    """
    stylized, style = as_tensor(stylized), as_tensor(style)
    if stylized.ndim != 3 or style.ndim != 3 or stylized.shape[0] != style.shape[0]:
        raise DimensionError(
            f"Channel counts differ: shapes {stylized.shape} and {style.shape}"
        )
    mu_a, sigma_a = channel_moments(stylized)
    mu_b, sigma_b = channel_moments(style)
    return float(np.linalg.norm(np.concatenate([mu_a - mu_b, sigma_a - sigma_b])))


class MetricsRow(BaseModel):
    """One line of a metrics CSV"""

    model_config = ConfigDict(extra="forbid")

    variant: str
    """Variant or sweep-point label"""

    alpha_c: NonNegative
    alpha_s: NonNegative

    spi_n: Annotated[int, Field(ge=0)]
    """Refinements actually used (0 when SPI is ablated)"""

    blocks: str
    """Injection block label, e.g. `[5,6]`"""

    guidance: NonNegative

    recon_error: NonNegative
    """Content round-trip RMS error"""

    style_moment_distance: NonNegative
    """Moment distance between the output and the style image"""

    fid: Optional[NonNegative] = None
    """Externally computed FID"""

    lpips: Optional[NonNegative] = None
    """Externally computed LPIPS"""

    artfid: Optional[NonNegative] = None
    """Filled in from fid and lpips when both are given"""

    @model_validator(mode="after")
    def compose_artfid(self):
        if self.fid is not None and self.lpips is not None:
            self.artfid = artfid(self.fid, self.lpips)
        elif self.artfid is not None:
            raise ValueError("artfid requires both fid and lpips")
        return self


def metrics_row(
    variant: str,
    report: TransferReport,
    content_img: Tensor,
    style_img: Tensor,
    fid: Optional[float] = None,
    lpips: Optional[float] = None,
) -> MetricsRow:
    """Summarize a transfer as a metrics row.

    `recon_error` is the content round-trip error from the report's diagnostics; without
    diagnostics it falls back to the distance between the output and the content image.
    """
    cfg: StyleTransferConfig = report.config
    error = report.content_roundtrip_error
    if error is None:
        error = recon_error(report.stylized, content_img)
    return MetricsRow(
        variant=variant,
        alpha_c=cfg.alpha_c,
        alpha_s=cfg.alpha_s,
        spi_n=cfg.spi_config.n,
        blocks=cfg.injection.label,
        guidance=cfg.guidance_scale,
        recon_error=error,
        style_moment_distance=style_moment_distance(report.stylized, style_img),
        fid=fid,
        lpips=lpips,
    )


def rows_to_frame(rows: Iterable[MetricsRow]) -> pd.DataFrame:
    """Metrics rows as a data frame with the fixed CSV columns (block labels CSV-safe)"""
    df = pd.DataFrame([row.model_dump() for row in rows], columns=constants.CSV_COLUMNS)
    df["blocks"] = df["blocks"].str.strip("[]").str.replace(",", ";", regex=False)
    for col in ("alpha_c", "alpha_s", "guidance", "recon_error", "style_moment_distance"):
        df[col] = df[col].astype(float)
    for col in ("fid", "lpips", "artfid"):
        df[col] = df[col].astype(float)
    df["spi_n"] = df["spi_n"].astype(int)
    return df


def write_metrics_csv(
    rows: Iterable[MetricsRow], out_path: Path, verbose: bool = False
) -> pd.DataFrame:
    """Write metrics rows as an LF-terminated CSV; absent externals become empty cells

    Args:
        rows (Iterable[MetricsRow]): Rows, written in order
        out_path (Path): Destination, written atomically
        verbose (bool, optional): Log the written path. Defaults to False.

    Raises:
        OSError: Destination not writable

    Returns:
        pd.DataFrame: The frame that was written
    """
    df = rows_to_frame(rows)
    text = df.to_csv(
        index=False, float_format=constants.CSV_FLOAT_FORMAT, na_rep="", lineterminator="\n"
    )
    atomic_write(Path(out_path), text.encode("utf-8"))
    if verbose:
        logger.info(f"Wrote {len(df)} metrics rows to {out_path}")
    return df
