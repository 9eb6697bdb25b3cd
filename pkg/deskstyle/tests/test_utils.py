import pytest

from deskstyle.exceptions import ImageParseError
from deskstyle.utils import atomic_write, read_exact, read_key_value_file, split_top_level


@pytest.mark.parametrize(
    "text, expected",
    [
        ("1,2,[5,6]", ["1", "2", "[5,6]"]),
        ("0.1, 0.2 ,", ["0.1", "0.2"]),
        ("[[1,2],3]", ["[[1,2],3]"]),
        ("", []),
    ],
)
def test_split_top_level(text, expected):
    assert split_top_level(text) == expected


@pytest.mark.parametrize("text", ["[5,6", "5,6]"])
def test_split_top_level_unbalanced(text):
    with pytest.raises(ValueError, match="Unbalanced"):
        split_top_level(text)


def test_read_key_value_file(tmp_path):
    path = tmp_path / "settings.cfg"
    path.write_text("# header\n\nT = 4\nprompt_content = a = b  # trailing\n")
    assert read_key_value_file(path) == {"T": "4", "prompt_content": "a = b"}

    path.write_text("T = 4\nT = 5\n")
    with pytest.raises(ValueError, match="settings.cfg:2: duplicate key"):
        read_key_value_file(path)


def test_read_exact():
    assert read_exact(b"abcdef", 2, 3) == b"cde"
    with pytest.raises(ImageParseError) as info:
        read_exact(b"abcdef", 4, 3)
    assert info.value.offset == 6


def test_atomic_write(tmp_path):
    path = tmp_path / "out.bin"
    path.write_bytes(b"old")
    assert atomic_write(path, b"new") == path
    assert path.read_bytes() == b"new"
    assert [p.name for p in tmp_path.iterdir()] == ["out.bin"]

    with pytest.raises(OSError):
        atomic_write(tmp_path / "missing" / "out.bin", b"x")
