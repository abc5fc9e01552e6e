"""Binary module codes and their pixel-domain representations.

A code is a square-module grid; bit 1 means a dark (inked) module.  Codes
are rendered to pixel rasters, cut into fixed-size non-overlapping blocks
for model input, and recovered from pixel data by thresholding plus a
per-module majority vote.  All operations here are pure and stateless.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, ParameterError

BINARY01 = "binary01"
BYTE0_255 = "byte0_255"
UNIT_INTERVAL = "unit_interval"

HIGH_IS_ONE = "high_is_one"
LOW_IS_ONE = "low_is_one"

_DOMAINS = (BINARY01, BYTE0_255, UNIT_INTERVAL)


@dataclass(frozen=True)
class Geometry:
    """Code geometry: module grid size, pixels per module, block edge."""

    rows: int = 64
    cols: int = 64
    module_px: int = 6
    block_px: int = 24

    def validate(self) -> None:
        for name in ("rows", "cols", "module_px", "block_px"):
            if getattr(self, name) < 1:
                raise ParameterError(f"geometry.{name} must be >= 1")
        if (self.rows * self.module_px) % self.block_px:
            raise DimensionError(
                f"block_px {self.block_px} does not divide image height "
                f"{self.rows * self.module_px}"
            )
        if (self.cols * self.module_px) % self.block_px:
            raise DimensionError(
                f"block_px {self.block_px} does not divide image width "
                f"{self.cols * self.module_px}"
            )

    @property
    def image_height(self) -> int:
        return self.rows * self.module_px

    @property
    def image_width(self) -> int:
        return self.cols * self.module_px

    @property
    def blocks_per_image(self) -> int:
        return (self.image_height // self.block_px) * (self.image_width // self.block_px)

    @property
    def block_dim(self) -> int:
        return self.block_px * self.block_px


@dataclass
class ModuleMatrix:
    """Binary module grid; ``bits[r, c] == 1`` is a dark module."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if bits.ndim != 2:
            raise DimensionError(f"module matrix must be 2-D, got shape {bits.shape}")
        if bits.size and bits.max() > 1:
            raise DomainError("module bits must be 0 or 1")
        self.bits = bits

    @property
    def rows(self) -> int:
        return self.bits.shape[0]

    @property
    def cols(self) -> int:
        return self.bits.shape[1]


@dataclass
class PixelImage:
    """2-D grayscale raster with an explicit value domain.

    Domains: ``binary01`` (uint8 bits, 1 = dark ink), ``unit_interval``
    (float32 in [0, 1]) and ``byte0_255`` (luminance, 0 = black; uint8 when
    quantized, float32 otherwise).
    """

    pixels: np.ndarray
    domain: str

    def __post_init__(self):
        if self.domain not in _DOMAINS:
            raise DomainError(f"unknown pixel domain {self.domain!r}")
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise DimensionError(f"image must be 2-D, got shape {px.shape}")
        if self.domain == BINARY01:
            px = np.ascontiguousarray(px, dtype=np.uint8)
            if px.size and px.max() > 1:
                raise DomainError("binary01 pixels must be 0 or 1")
        elif self.domain == UNIT_INTERVAL:
            px = np.ascontiguousarray(px, dtype=np.float32)
            if px.size and (px.min() < 0.0 or px.max() > 1.0):
                raise DomainError("unit_interval pixels must lie in [0, 1]")
        else:  # byte0_255
            if px.dtype != np.uint8:
                px = np.ascontiguousarray(px, dtype=np.float32)
                if px.size and (px.min() < 0.0 or px.max() > 255.0):
                    raise DomainError("byte0_255 pixels must lie in [0, 255]")
        self.pixels = px

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass
class BlockSet:
    """Non-overlapping square blocks of one image, each flattened row-major.

    Blocks are ordered row-major by their position in the block grid, so
    ``blocks[gr * grid_cols + gc]`` is the block at grid row ``gr``, column
    ``gc`` of the source image.
    """

    block_px: int
    grid_rows: int
    grid_cols: int
    blocks: np.ndarray  # shape (grid_rows * grid_cols, block_px ** 2)
    domain: str

    def __post_init__(self):
        blocks = np.asarray(self.blocks)
        if blocks.ndim != 2 or blocks.shape[1] != self.block_px * self.block_px:
            raise DimensionError(
                f"blocks must have shape (n, {self.block_px * self.block_px}), "
                f"got {blocks.shape}"
            )
        if blocks.shape[0] != self.grid_rows * self.grid_cols:
            raise DimensionError(
                f"expected {self.grid_rows * self.grid_cols} blocks, got {blocks.shape[0]}"
            )
        self.blocks = blocks


def generate_module_matrix(seed: int, rows: int = 64, cols: int = 64) -> ModuleMatrix:
    """Draw a rows x cols matrix of i.i.d. uniform bits from a seeded PRNG."""
    if rows < 1 or cols < 1:
        raise ParameterError("rows and cols must be >= 1")
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=(rows, cols), dtype=np.uint8)
    return ModuleMatrix(bits)


def render(m: ModuleMatrix, module_px: int) -> PixelImage:
    """Expand each module to a constant module_px x module_px square (1 = dark)."""
    if module_px < 1:
        raise ParameterError("module_px must be >= 1")
    px = np.repeat(np.repeat(m.bits, module_px, axis=0), module_px, axis=1)
    return PixelImage(px, BINARY01)


def split_blocks(img: PixelImage, block_px: int) -> BlockSet:
    """Cut an image into non-overlapping block_px x block_px blocks.

    Blocks are ordered row-major over the block grid and each block is
    flattened row-major.
    """
    if block_px < 1:
        raise ParameterError("block_px must be >= 1")
    h, w = img.height, img.width
    if h % block_px or w % block_px:
        raise DimensionError(
            f"image {h}x{w} not divisible into {block_px}x{block_px} blocks"
        )
    gr, gc = h // block_px, w // block_px
    blocks = (
        img.pixels.reshape(gr, block_px, gc, block_px)
        .transpose(0, 2, 1, 3)
        .reshape(gr * gc, block_px * block_px)
    )
    return BlockSet(block_px, gr, gc, np.ascontiguousarray(blocks), img.domain)


def assemble_blocks(bs: BlockSet) -> PixelImage:
    """Reassemble blocks into the image they were split from (exact inverse)."""
    gr, gc, bpx = bs.grid_rows, bs.grid_cols, bs.block_px
    px = (
        np.asarray(bs.blocks)
        .reshape(gr, gc, bpx, bpx)
        .transpose(0, 2, 1, 3)
        .reshape(gr * bpx, gc * bpx)
    )
    return PixelImage(np.ascontiguousarray(px), bs.domain)


def binarize(values, t: float, polarity: str = HIGH_IS_ONE):
    """Threshold unit-interval values to bits.

    ``high_is_one``: output 1 iff value >= t (ties go to 1).  ``low_is_one``:
    output 1 iff value < t, used on raw luminance where ink is dark.  Accepts
    an array (returned as a uint8 array) or a PixelImage (returned as a
    binary01 PixelImage).
    """
    if not 0.0 <= t <= 1.0:
        raise ParameterError(f"threshold {t} outside [0, 1]")
    if polarity not in (HIGH_IS_ONE, LOW_IS_ONE):
        raise ParameterError(f"unknown polarity {polarity!r}")
    if isinstance(values, PixelImage):
        if values.domain == BYTE0_255:
            raise DomainError("binarize expects unit_interval input; normalize first")
        bits = binarize(values.pixels, t, polarity)
        return PixelImage(bits, BINARY01)
    arr = np.asarray(values)
    if polarity == HIGH_IS_ONE:
        return (arr >= t).astype(np.uint8)
    return (arr < t).astype(np.uint8)


def modules_from_pixels(img: PixelImage, module_px: int) -> ModuleMatrix:
    """Recover a module matrix by majority vote over each module cell.

    A module is 1 iff strictly more than half of its pixels are 1; an exact
    half votes 0 (tie-break toward white).
    """
    if module_px < 1:
        raise ParameterError("module_px must be >= 1")
    if img.domain != BINARY01:
        raise DomainError("modules_from_pixels expects a binary01 image")
    h, w = img.height, img.width
    if h % module_px or w % module_px:
        raise DimensionError(
            f"image {h}x{w} not divisible into {module_px}x{module_px} cells"
        )
    rows, cols = h // module_px, w // module_px
    counts = (
        img.pixels.reshape(rows, module_px, cols, module_px)
        .sum(axis=(1, 3), dtype=np.int64)
    )
    bits = (2 * counts > module_px * module_px).astype(np.uint8)
    return ModuleMatrix(bits)


def ink_intensity(img: PixelImage) -> PixelImage:
    """Convert a luminance scan to ink intensity: 1 - value / 255.

    More ink means a larger value, matching the rendering convention where
    bit 1 is dark.
    """
    if img.domain != BYTE0_255:
        raise DomainError("ink_intensity expects a byte0_255 luminance image")
    ink = (1.0 - img.pixels.astype(np.float32) / np.float32(255.0)).astype(np.float32)
    return PixelImage(ink, UNIT_INTERVAL)
