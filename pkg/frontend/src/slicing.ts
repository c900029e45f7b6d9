/** Axis-aware mapping between voxels, slice-plane cells, and canvas pixels.
 *
 * Slice planes follow the server's slicing convention:
 *   axis z, index i -> plane rows = y, cols = x
 *   axis y, index i -> plane rows = z, cols = x
 *   axis x, index i -> plane rows = z, cols = y
 */

export type Axis = "z" | "y" | "x";

export interface Voxel {
  z: number;
  y: number;
  x: number;
}

export type Dims = [number, number, number]; // (depth, height, width)

export function axisExtent(dims: Dims, axis: Axis): number {
  return axis === "z" ? dims[0] : axis === "y" ? dims[1] : dims[2];
}

export function planeSize(dims: Dims, axis: Axis): { rows: number; cols: number } {
  const [d, h, w] = dims;
  if (axis === "z") return { rows: h, cols: w };
  if (axis === "y") return { rows: d, cols: w };
  return { rows: d, cols: h };
}

export function cellToVoxel(axis: Axis, index: number, row: number, col: number): Voxel {
  if (axis === "z") return { z: index, y: row, x: col };
  if (axis === "y") return { z: row, y: index, x: col };
  return { z: row, y: col, x: index };
}

export function voxelToCell(axis: Axis, v: Voxel): { row: number; col: number } {
  if (axis === "z") return { row: v.y, col: v.x };
  if (axis === "y") return { row: v.z, col: v.x };
  return { row: v.z, col: v.y };
}

export function voxelOnSlice(axis: Axis, index: number, v: Voxel): boolean {
  return (axis === "z" ? v.z : axis === "y" ? v.y : v.x) === index;
}

export function linearIndex(dims: Dims, v: Voxel): number {
  const [, h, w] = dims;
  return (v.z * h + v.y) * w + v.x;
}

/** Canvas-relative CSS pixel position -> voxel, or null outside the image. */
export function canvasPointToVoxel(
  cssX: number,
  cssY: number,
  dims: Dims,
  axis: Axis,
  index: number,
  zoom: number
): Voxel | null {
  const { rows, cols } = planeSize(dims, axis);
  const col = Math.floor(cssX / zoom);
  const row = Math.floor(cssY / zoom);
  if (row < 0 || row >= rows || col < 0 || col >= cols) return null;
  return cellToVoxel(axis, index, row, col);
}

/** Center of the voxel's cell in canvas CSS pixels (inverse of the above). */
export function voxelToCanvasPoint(
  v: Voxel,
  axis: Axis,
  zoom: number
): { cssX: number; cssY: number } {
  const { row, col } = voxelToCell(axis, v);
  return { cssX: (col + 0.5) * zoom, cssY: (row + 0.5) * zoom };
}
