# Moore-neighbour contour tracing, stopped on the first repeated tracer state.
# Multi-component masks yield one traced loop per 8-connected component,
# concatenated in connected_components order.

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from segrefine.geometry.masks import BinaryMask, connected_components

# Clockwise in image coordinates (row grows downward), starting west.
_NEIGHBOURS = ((0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1))
_NEIGHBOUR_INDEX = {offset: index for index, offset in enumerate(_NEIGHBOURS)}


@dataclass(frozen=True)
class Contour:
    points: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.points)

    def unique_points(self) -> list[tuple[int, int]]:
        """Points with repeats removed, first visit order kept."""
        return list(dict.fromkeys(self.points))


def _trace_component(bits: np.ndarray) -> list[tuple[int, int]]:
    padded = np.pad(bits, 1, constant_values=False)
    rows, cols = np.nonzero(padded)
    start = (int(rows[0]), int(cols[0]))
    # The raster-first pixel always has a background west neighbour.
    initial_backtrack = (start[0], start[1] - 1)

    contour = [start]
    current, backtrack = start, initial_backtrack
    first_state = None
    limit = 8 * int(rows.size) + 8
    for _ in range(limit):
        direction = _NEIGHBOUR_INDEX[(backtrack[0] - current[0], backtrack[1] - current[1])]
        found = None
        for step in range(1, 9):
            d_row, d_col = _NEIGHBOURS[(direction + step) % 8]
            candidate = (current[0] + d_row, current[1] + d_col)
            if padded[candidate]:
                found = candidate
                break
            backtrack = candidate
        if found is None:
            break
        current = found
        # The tracer is a deterministic state machine: a repeated
        # (pixel, backtrack) state closes the loop.
        state = (current, backtrack)
        if first_state is None:
            first_state = state
        elif state == first_state:
            if len(contour) > 1 and contour[-1] == start:
                contour.pop()
            break
        contour.append(current)
    return [(row - 1, col - 1) for row, col in contour]


def trace_contour(mask: BinaryMask) -> Contour:
    points: list[tuple[int, int]] = []
    for component in connected_components(mask, connectivity=8):
        points.extend(_trace_component(component.bits))
    return Contour(points=tuple(points))


def contour_mask(mask: BinaryMask) -> BinaryMask:
    """Raster of every traced contour point of ``mask``."""
    bits = np.zeros(mask.shape, dtype=bool)
    for row, col in trace_contour(mask).points:
        bits[row, col] = True
    return BinaryMask(bits)
