"""Published reference scores, and a consistency check of their ArtFID column.

Scores are as printed (three decimals), so recomputed ArtFID agrees to about 0.02 at best.
"""

import pandas as pd

from deskstyle.evaluation.metrics import artfid

ARTFID_TOLERANCE = 0.02

_COLUMNS = ["method", "artfid", "fid", "lpips"]

# Comparison against other style-transfer methods
COMPARISON = [
    ("full", 28.693, 18.559, 0.467),
    ("StyleID", 31.613, 20.190, 0.492),
    ("DiffuseIT", 41.965, 23.818, 0.691),
    ("InST", 35.846, 20.068, 0.702),
    ("DiffStyle", 42.486, 22.051, 0.843),
    ("StyleAlign", 35.349, 20.827, 0.620),
    ("InstantStyle", 38.596, 21.824, 0.691),
    ("AdaIN", 32.515, 19.337, 0.599),
    ("AesPA-Net", 32.080, 20.247, 0.509),
    ("AdaConv", 32.094, 19.294, 0.581),
    ("StyTR2", 30.419, 18.722, 0.542),
]

# Each mechanism removed in turn
ABLATION = [
    ("full", 28.693, 18.559, 0.467),
    ("-SG-SA", 40.133, 25.839, 0.495),
    ("-SPI", 36.448, 24.107, 0.452),
    ("-CA-AdaIN", 31.093, 19.772, 0.497),
    ("-DF-CA", 31.906, 20.500, 0.484),
]

# Style injection into different up-path blocks
INJECTION_BLOCKS = [
    ("1", 36.736, 22.295, 0.577),
    ("2", 34.138, 21.182, 0.539),
    ("3", 35.031, 22.622, 0.483),
    ("4", 32.304, 20.827, 0.480),
    ("5", 32.200, 21.268, 0.446),
    ("6", 30.267, 19.731, 0.460),
    ("[5,6]", 28.693, 18.559, 0.467),
    ("[4,5,6]", 28.775, 18.439, 0.492),
    ("[3,4,5,6]", 29.197, 18.286, 0.502),
    ("[2,3,4,5,6]", 29.376, 18.467, 0.509),
]


def _table(rows) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=_COLUMNS)


def comparison_table() -> pd.DataFrame:
    return _table(COMPARISON)


def ablation_table() -> pd.DataFrame:
    return _table(ABLATION)


def injection_blocks_table() -> pd.DataFrame:
    return _table(INJECTION_BLOCKS)


def check_artfid(table: pd.DataFrame, tolerance: float = ARTFID_TOLERANCE) -> pd.DataFrame:
    """Recompute ArtFID from the FID and LPIPS columns of a published table

    Args:
        table (pd.DataFrame): Frame with `fid`, `lpips` and `artfid` columns
        tolerance (float, optional): Largest absolute error counted as consistent.
            Defaults to ARTFID_TOLERANCE.

    Returns:
        pd.DataFrame: Copy of `table` with `artfid_computed`, `abs_error` and `consistent`
    """
    df = table.copy()
    df["artfid_computed"] = [artfid(f, lp) for f, lp in zip(df["fid"], df["lpips"])]
    df["abs_error"] = (df["artfid_computed"] - df["artfid"]).abs()
    df["consistent"] = df["abs_error"] <= tolerance
    return df
