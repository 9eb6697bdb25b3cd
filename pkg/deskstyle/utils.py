import os
import tempfile
from pathlib import Path
from typing import Dict, List

from deskstyle.exceptions import ImageParseError


def split_top_level(s: str, sep: str = ",") -> List[str]:
    """Split a string on `sep`, ignoring separators nested inside square brackets.

    Examples:
        "1,2,[5,6]" -> ["1", "2", "[5,6]"]
        "0.1, 0.2" -> ["0.1", "0.2"]

    Args:
        s (str): String to split
        sep (str, optional): Single-character separator. Defaults to ",".

    Returns:
        List[str]: Stripped, non-empty items
    """
    items, depth, current = [], 0, []
    for char in s:
        if char == "[":
            depth += 1
        elif char == "]":
            depth -= 1
            if depth < 0:
                raise ValueError(f"Unbalanced brackets in {s!r}")
        if char == sep and depth == 0:
            items.append("".join(current))
            current = []
        else:
            current.append(char)
    if depth != 0:
        raise ValueError(f"Unbalanced brackets in {s!r}")
    items.append("".join(current))
    return [item.strip() for item in items if item.strip()]


def read_key_value_file(path: Path) -> Dict[str, str]:
    """Read a plain-text `key=value` file.

    Blank lines and anything after a `#` are ignored. Keys and values are stripped.

    Args:
        path (Path): File to read

    Raises:
        ValueError: A non-empty line has no `=`, or a key repeats

    Returns:
        Dict[str, str]: Raw string values keyed by name
    """
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def read_exact(buffer: bytes, offset: int, n: int) -> bytes:
    """Return `n` bytes of `buffer` from `offset`, failing with the offset if short"""
    chunk = buffer[offset : offset + n]
    if len(chunk) != n:
        raise ImageParseError(f"Expected {n} bytes, found {len(chunk)}", offset + len(chunk))
    return chunk


def atomic_write(path: Path, data: bytes) -> Path:
    """Write `data` to `path` through a temporary sibling file and an atomic rename.

    A failure leaves no partial file at `path`.

    Args:
        path (Path): Destination file
        data (bytes): Full file contents

    Raises:
        OSError: The directory is missing or not writable

    Returns:
        Path: The written path
    """
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    return path
