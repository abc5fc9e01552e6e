"""Reading and writing PGM (P5), PBM (P4) and 0/1 text matrix files.

Grayscale images use 8-bit binary PGM with maxval 255.  On write, binary01
and unit_interval pixels are scaled by 255 and rounded to nearest;
byte0_255 pixels are rounded if stored as floats.  On read, pixels come
back as a byte0_255 image.  Module matrices use PBM P4 (1 = black = dark
module) or a plain text format with one row of 0/1 characters per line.
"""

from __future__ import annotations

import numpy as np

from .codegen import BINARY01, BYTE0_255, UNIT_INTERVAL, ModuleMatrix, PixelImage
from .errors import DomainError, FormatError


def _read_tokens(data: bytes, count: int, pos: int):
    """Read whitespace-separated header tokens, skipping # comments."""
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def write_pgm(img: PixelImage, path) -> None:
    """Write an image as binary PGM (P5, maxval 255)."""
    if img.domain == BYTE0_255:
        px = img.pixels
        if px.dtype != np.uint8:
            px = np.clip(np.rint(px), 0, 255).astype(np.uint8)
    elif img.domain in (BINARY01, UNIT_INTERVAL):
        px = np.rint(img.pixels.astype(np.float64) * 255.0).astype(np.uint8)
    else:
        raise DomainError(f"cannot write domain {img.domain!r} as PGM")
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(px.tobytes())


def read_pgm(path) -> PixelImage:
    """Read a binary PGM (P5) file into a byte0_255 image."""
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P5"):
        raise FormatError(f"not a P5 PGM file: {path}")
    tokens, pos = _read_tokens(data, 4, 0)
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise FormatError(f"bad PGM header in {path}") from exc
    if maxval != 255:
        raise FormatError(f"unsupported PGM maxval {maxval} (want 255)")
    raster = data[pos : pos + width * height]
    if len(raster) != width * height:
        raise FormatError(f"truncated PGM raster in {path}")
    px = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return PixelImage(px.copy(), BYTE0_255)


def write_pbm(m: ModuleMatrix, path) -> None:
    """Write a module matrix as binary PBM (P4); bit 1 = black."""
    header = f"P4\n{m.cols} {m.rows}\n".encode("ascii")
    packed = np.packbits(m.bits, axis=1)
    with open(path, "wb") as f:
        f.write(header)
        f.write(packed.tobytes())


def read_pbm(path) -> ModuleMatrix:
    """Read a binary PBM (P4) file into a module matrix."""
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P4"):
        raise FormatError(f"not a P4 PBM file: {path}")
    tokens, pos = _read_tokens(data, 3, 0)
    try:
        width, height = int(tokens[1]), int(tokens[2])
    except ValueError as exc:
        raise FormatError(f"bad PBM header in {path}") from exc
    row_bytes = (width + 7) // 8
    raster = data[pos : pos + row_bytes * height]
    if len(raster) != row_bytes * height:
        raise FormatError(f"truncated PBM raster in {path}")
    packed = np.frombuffer(raster, dtype=np.uint8).reshape(height, row_bytes)
    bits = np.unpackbits(packed, axis=1)[:, :width]
    return ModuleMatrix(bits)


def write_matrix_text(m: ModuleMatrix, path) -> None:
    """Write a module matrix as one line of 0/1 characters per row."""
    lines = ["".join("1" if b else "0" for b in row) for row in m.bits]
    with open(path, "w", encoding="ascii") as f:
        f.write("\n".join(lines) + "\n")


def read_matrix_text(path) -> ModuleMatrix:
    """Read the 0/1 text matrix format written by write_matrix_text."""
    with open(path, "r", encoding="ascii") as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines:
        raise FormatError(f"empty matrix file: {path}")
    width = len(lines[0])
    rows = []
    for ln in lines:
        if len(ln) != width or set(ln) - {"0", "1"}:
            raise FormatError(f"malformed matrix row in {path}")
        rows.append([1 if ch == "1" else 0 for ch in ln])
    return ModuleMatrix(np.array(rows, dtype=np.uint8))
