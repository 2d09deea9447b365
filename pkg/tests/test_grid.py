"""Strip-assembly tests: hand-built layouts, promotion, and validation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repdiff.errors import ValidationError
from repdiff.grid import SEPARATOR_WIDTH, make_grid
from repdiff.png_io import decode_png, encode_png, quantize


def solid(value, channels=3, h=4, w=3):
    return np.full((channels, h, w), value, dtype=np.float64)


class TestLayout:
    def test_two_cells_hand_assembled(self):
        a = solid(0.0, h=2, w=2)
        b = solid(0.5, h=2, w=2)
        grid = make_grid([a, b])
        expected = np.concatenate(
            [a, np.ones((3, 2, 2)), b], axis=2
        )
        np.testing.assert_array_equal(grid, expected)
        assert grid.shape == (3, 2, 6)

    def test_single_cell_is_the_cell(self):
        a = solid(0.25)
        grid = make_grid([a])
        np.testing.assert_array_equal(grid, a)
        grid[0, 0, 0] = 1.0
        assert a[0, 0, 0] == 0.25

    def test_separator_width_zero_is_plain_concat(self):
        a, b = solid(0.1, w=2), solid(0.9, w=5)
        grid = make_grid([a, b], separator_width=0)
        np.testing.assert_array_equal(grid, np.concatenate([a, b], axis=2))

    def test_gray_cells_promoted_to_rgb(self):
        gray = np.full((1, 4, 4), 0.4)
        grid = make_grid([gray, gray])
        assert grid.shape == (3, 4, 10)
        for ch in range(3):
            np.testing.assert_array_equal(grid[ch], grid[0])

    def test_mixed_gray_and_rgb(self):
        grid = make_grid([np.full((1, 4, 2), 0.2), solid(0.7, w=3)])
        assert grid.shape == (3, 4, 2 + SEPARATOR_WIDTH + 3)

    def test_varying_widths(self):
        cells = [solid(0.3, w=w) for w in (1, 4, 2)]
        grid = make_grid(cells)
        assert grid.shape[2] == 1 + 4 + 2 + 2 * SEPARATOR_WIDTH

    def test_separators_are_white(self):
        grid = make_grid([solid(0.0, w=3), solid(0.0, w=3)])
        np.testing.assert_array_equal(grid[:, :, 3:5], np.ones((3, 4, 2)))


class TestValidation:
    def test_empty_cell_list(self):
        with pytest.raises(ValidationError, match="at least one"):
            make_grid([])

    def test_height_mismatch(self):
        with pytest.raises(ValidationError, match="height"):
            make_grid([solid(0.1, h=4), solid(0.1, h=5)])

    @pytest.mark.parametrize(
        "bad",
        [
            np.zeros((4, 4)),
            np.zeros((2, 4, 4)),
            np.zeros((3, 0, 4)),
            np.full((3, 4, 4), 1.5),
            np.full((3, 4, 4), -0.1),
            np.full((3, 4, 4), np.nan),
        ],
    )
    def test_bad_cells(self, bad):
        with pytest.raises(ValidationError):
            make_grid([bad])

    def test_negative_separator(self):
        with pytest.raises(ValidationError):
            make_grid([solid(0.5)], separator_width=-1)


class TestPngRoundTrip:
    def test_grid_survives_encoding(self, tmp_path):
        rng = np.random.default_rng(0)
        cells = [rng.random((3, 8, 8)) for _ in range(3)]
        grid = make_grid(cells)
        decoded = decode_png(encode_png(grid))
        np.testing.assert_array_equal(quantize(grid), quantize(decoded))


@given(
    widths=st.lists(st.integers(min_value=1, max_value=6), min_size=1, max_size=5),
    height=st.integers(min_value=1, max_value=6),
    sep=st.integers(min_value=0, max_value=4),
)
@settings(max_examples=40, deadline=None)
def test_total_width_formula(widths, height, sep):
    rng = np.random.default_rng(1)
    cells = [rng.random((3, height, w)) for w in widths]
    grid = make_grid(cells, separator_width=sep)
    assert grid.shape == (3, height, sum(widths) + sep * (len(widths) - 1))
    offset = 0
    for i, w in enumerate(widths):
        np.testing.assert_array_equal(grid[:, :, offset : offset + w], cells[i])
        offset += w
        if i + 1 < len(widths):
            np.testing.assert_array_equal(
                grid[:, :, offset : offset + sep], np.ones((3, height, sep))
            )
            offset += sep
