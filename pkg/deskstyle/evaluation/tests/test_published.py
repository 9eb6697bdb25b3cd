import pytest

from deskstyle.evaluation.published import (
    ablation_table,
    check_artfid,
    comparison_table,
    injection_blocks_table,
)


@pytest.mark.parametrize("table", [comparison_table, ablation_table])
def test_tables_are_consistent(table):
    checked = check_artfid(table())
    assert checked["consistent"].all(), checked.loc[~checked["consistent"]]


def test_injection_block_rows():
    checked = check_artfid(injection_blocks_table())
    assert len(checked) == 10
    bad = checked.loc[~checked["consistent"], "method"].tolist()
    assert bad == ["[4,5,6]", "[3,4,5,6]"]
    assert checked.loc[~checked["consistent"], "abs_error"].between(0.2, 0.25).all()


def test_check_artfid_keeps_input():
    table = ablation_table()
    checked = check_artfid(table, tolerance=0.0)
    assert "artfid_computed" not in table.columns
    assert not checked["consistent"].all()
