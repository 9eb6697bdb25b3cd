"""Binary PPM (P6, maxval 255) reading and writing.

Header grammar: `P6`, whitespace, width, whitespace, height, whitespace, `255`, exactly one
whitespace byte, then 3 * width * height bytes in row-major RGB order. `#` comments are
allowed between header tokens.
"""

from pathlib import Path
from typing import Tuple

import numpy as np

from deskstyle import constants
from deskstyle.core.tensor import Tensor, as_tensor
from deskstyle.exceptions import DimensionError, ImageFormatError, ImageParseError
from deskstyle.settings import logger
from deskstyle.utils import atomic_write, read_exact

MAGIC = b"P6"
MAXVAL = 255
_WHITESPACE = b" \t\n\r\v\f"


def _skip_whitespace_and_comments(buffer: bytes, offset: int) -> int:
    while offset < len(buffer):
        byte = buffer[offset : offset + 1]
        if byte in _WHITESPACE:
            offset += 1
        elif byte == b"#":
            while offset < len(buffer) and buffer[offset : offset + 1] != b"\n":
                offset += 1
        else:
            break
    return offset


def _read_int(buffer: bytes, offset: int, what: str) -> Tuple[int, int]:
    start = _skip_whitespace_and_comments(buffer, offset)
    if start == offset:
        raise ImageParseError(f"Expected whitespace before {what}", offset)
    end = start
    while end < len(buffer) and buffer[end : end + 1].isdigit():
        end += 1
    if end == start:
        raise ImageParseError(f"Expected {what}", start)
    return int(buffer[start:end]), end


def parse_ppm(buffer: bytes) -> Tensor:
    """Decode PPM bytes to a 3 x H x W tensor with values in [0, 1]

    Args:
        buffer (bytes): File contents

    Raises:
        ImageParseError: Malformed header or truncated pixel data; carries the byte offset
        ImageFormatError: Another netpbm variant, or maxval other than 255

    Returns:
        Tensor: 3 x H x W image, pixel bytes divided by 255
    """
    magic = read_exact(buffer, 0, 2)
    if magic != MAGIC:
        if magic[:1] == b"P" and magic[1:2].isdigit():
            raise ImageFormatError(f"Unsupported netpbm variant {magic.decode()}, only P6")
        raise ImageParseError(f"Bad magic number {magic!r}", 0)
    width, offset = _read_int(buffer, 2, "width")
    height, offset = _read_int(buffer, offset, "height")
    maxval, offset = _read_int(buffer, offset, "maxval")
    if width < 1 or height < 1:
        raise ImageParseError(f"Image size {width} x {height} is empty", offset)
    if maxval != MAXVAL:
        raise ImageFormatError(f"Unsupported maxval {maxval}, only {MAXVAL}")
    if read_exact(buffer, offset, 1) not in _WHITESPACE:
        raise ImageParseError("Expected a single whitespace byte after maxval", offset)
    offset += 1
    n = constants.IMAGE_CHANNELS * width * height
    pixels = np.frombuffer(read_exact(buffer, offset, n), dtype=np.uint8)
    img = pixels.reshape(height, width, constants.IMAGE_CHANNELS).transpose(2, 0, 1)
    return img.astype(np.float64) / MAXVAL


def load_image(path: Path) -> Tensor:
    """Read a binary PPM file; see `parse_ppm`"""
    return parse_ppm(Path(path).read_bytes())


def to_bytes(img: Tensor) -> bytes:
    """Encode a 3 x H x W tensor in [0, 1] as PPM bytes, rounding to the nearest level"""
    img = as_tensor(img)
    if img.ndim != 3 or img.shape[0] != constants.IMAGE_CHANNELS:
        raise DimensionError(f"Expected a 3 x H x W image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("Image has non-finite values")
    _, height, width = img.shape
    levels = np.rint(np.clip(img, 0.0, 1.0) * MAXVAL).astype(np.uint8)
    header = f"P6\n{width} {height}\n{MAXVAL}\n".encode("ascii")
    return header + levels.transpose(1, 2, 0).tobytes()


def save_image(path: Path, img: Tensor, verbose: bool = False) -> Path:
    """Write `img` as a binary PPM file atomically

    Args:
        path (Path): Destination
        img (Tensor): 3 x H x W image in [0, 1]; values outside are clipped
        verbose (bool, optional): Log the written path. Defaults to False.

    Raises:
        DimensionError: Not a 3-channel image
        OSError: Destination not writable

    Returns:
        Path: The written path
    """
    written = atomic_write(Path(path), to_bytes(img))
    if verbose:
        logger.info(f"Wrote {written}")
    return written
