"""Perceptual fingerprints for slide/frame comparison.

Two complementary signals per image:

* ``bits``: a 256-bit difference hash (16x16 horizontal gradient signs),
  invariant to uniform brightness shifts and cheap to compare by Hamming
  distance.
* ``grid_cells``: one 64-bit hash per cell of an 8x8 grid, thresholded
  against the cell mean so that near-uniform cells hash to zero ("blank").
  The grid supports the overlay subset test used by curation: content that
  is present in one slide and unchanged in the next keeps its cell hashes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

HASH_SIDE = 16
HASH_BITS = HASH_SIDE * HASH_SIDE
GRID_SIDE = 8
GRID_IMAGE_SIDE = 64
_CELL = GRID_IMAGE_SIDE // GRID_SIDE
_BLANK_EPSILON = 2.0

BLANK_CELL = 0


@dataclass(frozen=True)
class Fingerprint:
    bits: int
    nbits: int
    grid_cells: tuple[int, ...]


def fingerprint_image(image: Image.Image) -> Fingerprint:
    gray = image.convert("L")

    small = gray.resize((HASH_SIDE + 1, HASH_SIDE), Image.Resampling.LANCZOS)
    px = np.asarray(small, dtype=np.int16)
    diff = (px[:, 1:] > px[:, :-1]).flatten()
    bits = int.from_bytes(np.packbits(diff).tobytes(), "big")

    grid = np.asarray(gray.resize((GRID_IMAGE_SIDE, GRID_IMAGE_SIDE), Image.Resampling.LANCZOS),
                      dtype=np.float32)
    cells = []
    for row in range(GRID_SIDE):
        for col in range(GRID_SIDE):
            block = grid[row * _CELL:(row + 1) * _CELL, col * _CELL:(col + 1) * _CELL]
            mask = (block > block.mean() + _BLANK_EPSILON).flatten()
            cells.append(int.from_bytes(np.packbits(mask).tobytes(), "big"))
    return Fingerprint(bits=bits, nbits=HASH_BITS, grid_cells=tuple(cells))


def hamming(a: Fingerprint, b: Fingerprint) -> int:
    if a.nbits != b.nbits:
        raise ValueError(f"fingerprint widths differ: {a.nbits} vs {b.nbits}")
    return (a.bits ^ b.bits).bit_count()


def similarity(a: Fingerprint, b: Fingerprint) -> float:
    return 1.0 - hamming(a, b) / a.nbits


def nonblank_cells(fp: Fingerprint) -> int:
    return sum(1 for cell in fp.grid_cells if cell != BLANK_CELL)


def subset_score(a: Fingerprint, b: Fingerprint) -> float:
    """Fraction of a's non-blank grid cells that appear unchanged in b.

    Vacuously 1.0 when a has no non-blank cells (an empty slide is a subset
    of anything).
    """
    active = [(x, y) for x, y in zip(a.grid_cells, b.grid_cells) if x != BLANK_CELL]
    if not active:
        return 1.0
    return sum(1 for x, y in active if x == y) / len(active)
