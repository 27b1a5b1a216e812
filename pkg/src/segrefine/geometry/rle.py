"""Run-length encoding of binary masks.

Runs are "start length" pairs over the row-major flattening, starts 1-indexed,
joined by single spaces. An empty mask encodes to "".
"""

from __future__ import annotations

import numpy as np

from segrefine.errors import CorruptEncoding
from segrefine.geometry.masks import BinaryMask


def mask_to_rle(mask: BinaryMask) -> str:
    pixels = mask.bits.ravel().astype(np.int8)
    pixels = np.concatenate([[0], pixels, [0]])
    runs = np.flatnonzero(pixels[1:] != pixels[:-1]) + 1
    runs[1::2] -= runs[::2]
    return " ".join(str(int(x)) for x in runs)


def rle_to_mask(rle: str, height: int, width: int) -> BinaryMask:
    flat = np.zeros(height * width, dtype=bool)
    tokens = rle.split()
    if len(tokens) % 2:
        raise CorruptEncoding("rle", "odd number of run tokens")
    try:
        values = np.asarray([int(token) for token in tokens], dtype=np.int64)
    except ValueError as exc:
        raise CorruptEncoding("rle", str(exc)) from exc
    starts, lengths = values[0::2] - 1, values[1::2]
    for start, length in zip(starts, lengths):
        if start < 0 or length < 0 or start + length > flat.size:
            raise CorruptEncoding("rle", f"run ({start + 1}, {length}) exceeds {height}x{width}")
        flat[start : start + length] = True
    return BinaryMask(flat.reshape(height, width))
