/** Horizontal strip composition matching the command-line grid layout:
 * cells joined left to right by 2-pixel white separator columns. Working
 * in decoded uint8 pixels keeps the result byte-identical to a grid the
 * CLI encodes from the same cells, because quantization is elementwise
 * and the separator quantizes to pure white.
 */

import { RgbImage, encodePng } from "./png.js";

export const SEPARATOR_WIDTH = 2;
const SEPARATOR_BYTE = 255;

export function composeStrip(
  cells: RgbImage[],
  separatorWidth: number = SEPARATOR_WIDTH,
): RgbImage {
  if (!cells.length) throw new Error("strip needs at least one cell");
  if (separatorWidth < 0) throw new Error("separatorWidth must be >= 0");
  const height = cells[0].height;
  for (const [i, cell] of cells.entries()) {
    if (cell.height !== height) {
      throw new Error(`cell ${i}: height ${cell.height} != first cell's ${height}`);
    }
  }
  const totalWidth =
    cells.reduce((n, c) => n + c.width, 0) + separatorWidth * (cells.length - 1);
  const pixels = new Uint8Array(totalWidth * height * 3).fill(SEPARATOR_BYTE);
  let xOffset = 0;
  for (const cell of cells) {
    for (let y = 0; y < height; y++) {
      const src = cell.pixels.subarray(y * cell.width * 3, (y + 1) * cell.width * 3);
      pixels.set(src, (y * totalWidth + xOffset) * 3);
    }
    xOffset += cell.width + separatorWidth;
  }
  return { width: totalWidth, height, pixels };
}

export function exportStripPng(
  cells: RgbImage[],
  separatorWidth: number = SEPARATOR_WIDTH,
): Uint8Array {
  return encodePng(composeStrip(cells, separatorWidth));
}
