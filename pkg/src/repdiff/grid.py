"""Horizontal image strips: sweep cells joined by uniform separators.

Layout is fully deterministic so strips can be compared byte-for-byte
after PNG encoding.
"""

from __future__ import annotations

import numpy as np

from repdiff.errors import ValidationError

SEPARATOR_WIDTH = 2
SEPARATOR_VALUE = 1.0


def _as_cell(arr, index: int) -> np.ndarray:
    cell = np.asarray(arr, dtype=np.float64)
    if cell.ndim != 3 or cell.shape[0] not in (1, 3):
        raise ValidationError(
            f"cell {index}: expected (1|3, H, W) image, got shape {cell.shape}"
        )
    if cell.shape[1] < 1 or cell.shape[2] < 1:
        raise ValidationError(f"cell {index}: empty image {cell.shape}")
    if not np.isfinite(cell).all():
        raise ValidationError(f"cell {index}: non-finite values")
    if cell.min() < 0.0 or cell.max() > 1.0:
        raise ValidationError(f"cell {index}: values outside [0, 1]")
    if cell.shape[0] == 1:
        cell = np.repeat(cell, 3, axis=0)
    return cell


def make_grid(cells, separator_width: int = SEPARATOR_WIDTH) -> np.ndarray:
    """Concatenate cells left to right with white separator columns.

    Cells are (1|3, H, W) images in [0, 1]; gray cells are promoted to
    RGB. Heights must agree; widths may vary. Returns (3, H, total).
    """
    if separator_width < 0:
        raise ValidationError("separator_width must be >= 0")
    prepared = [_as_cell(c, i) for i, c in enumerate(cells)]
    if not prepared:
        raise ValidationError("grid needs at least one cell")
    height = prepared[0].shape[1]
    for i, cell in enumerate(prepared):
        if cell.shape[1] != height:
            raise ValidationError(
                f"cell {i}: height {cell.shape[1]} != first cell's {height}"
            )
    separator = np.full((3, height, separator_width), SEPARATOR_VALUE)
    parts = []
    for i, cell in enumerate(prepared):
        if i:
            parts.append(separator)
        parts.append(cell)
    return np.concatenate(parts, axis=2)
