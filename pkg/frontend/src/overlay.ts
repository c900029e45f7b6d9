/** Overlay rendering model: which voxels are painted, with which colors.
 * The RGBA buffer derives from the same slice extraction the tests assert
 * on, so the painted pixels and the reported voxel set cannot diverge. */

import { DecodedMask } from "./rle.js";
import { Axis, cellToVoxel, linearIndex, planeSize } from "./slicing.js";

/** Fixed high-contrast palette by label index (1-based). */
export const LABEL_COLORS: [number, number, number][] = [
  [230, 57, 70],   // 1 red
  [69, 123, 157],  // 2 steel blue
  [42, 157, 143],  // 3 teal
  [244, 162, 97],  // 4 orange
  [153, 102, 255], // 5 violet
  [201, 203, 64],  // 6 olive
];

export function labelColor(label: number): [number, number, number] {
  return LABEL_COLORS[(label - 1) % LABEL_COLORS.length];
}

export interface SlicePlane {
  rows: number;
  cols: number;
  /** per-cell label on this slice, row-major */
  labels: Uint8Array;
  /** linear 3D indices of the foreground cells on this slice */
  voxels: Set<number>;
}

export function extractSlice(mask: DecodedMask, axis: Axis, index: number): SlicePlane {
  const { rows, cols } = planeSize(mask.dims, axis);
  const labels = new Uint8Array(rows * cols);
  const voxels = new Set<number>();
  for (let row = 0; row < rows; row++) {
    for (let col = 0; col < cols; col++) {
      const v = cellToVoxel(axis, index, row, col);
      const lab = mask.labels[linearIndex(mask.dims, v)];
      labels[row * cols + col] = lab;
      if (lab > 0) voxels.add(linearIndex(mask.dims, v));
    }
  }
  return { rows, cols, labels, voxels };
}

/** RGBA pixels for one slice of the overlay (alpha 0 where background). */
export function sliceToRgba(plane: SlicePlane, opacity: number): Uint8ClampedArray<ArrayBuffer> {
  const rgba = new Uint8ClampedArray(new ArrayBuffer(4 * plane.rows * plane.cols));
  const alpha = Math.round(255 * opacity);
  for (let i = 0; i < plane.labels.length; i++) {
    const lab = plane.labels[i];
    if (lab === 0) continue;
    const [r, g, b] = labelColor(lab);
    rgba[4 * i] = r;
    rgba[4 * i + 1] = g;
    rgba[4 * i + 2] = b;
    rgba[4 * i + 3] = alpha;
  }
  return rgba;
}
