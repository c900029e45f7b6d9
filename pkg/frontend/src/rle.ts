/** Run-length mask wire format shared with the server:
 *  {"shape":[d,h,w], "labels":{"1":[[start,len],...], ...}} over the fixed
 *  (z,y,x) linearization. */

export interface MaskRle {
  shape: [number, number, number];
  labels: Record<string, [number, number][]>;
}

export interface DecodedMask {
  dims: [number, number, number];
  /** flat per-voxel labels, length d*h*w */
  labels: Uint8Array;
}

export function decodeMask(rle: MaskRle): DecodedMask {
  const [d, h, w] = rle.shape;
  const n = d * h * w;
  const labels = new Uint8Array(n);
  for (const [key, runs] of Object.entries(rle.labels)) {
    const label = parseInt(key, 10);
    for (const [start, len] of runs) {
      if (start < 0 || start + len > n) {
        throw new Error(`run [${start},${len}] escapes ${n} voxels`);
      }
      labels.fill(label, start, start + len);
    }
  }
  return { dims: [d, h, w], labels };
}

export function encodeMask(mask: DecodedMask): MaskRle {
  const [d, h, w] = mask.dims;
  const labels: Record<string, [number, number][]> = {};
  let runLabel = 0;
  let runStart = 0;
  const flush = (end: number) => {
    if (runLabel > 0) {
      (labels[String(runLabel)] ??= []).push([runStart, end - runStart]);
    }
  };
  for (let i = 0; i < mask.labels.length; i++) {
    if (mask.labels[i] !== runLabel) {
      flush(i);
      runLabel = mask.labels[i];
      runStart = i;
    }
  }
  flush(mask.labels.length);
  return { shape: [d, h, w], labels };
}

/** Set of linear voxel indices carrying any foreground label. */
export function foregroundVoxels(mask: DecodedMask): Set<number> {
  const out = new Set<number>();
  for (let i = 0; i < mask.labels.length; i++) {
    if (mask.labels[i] > 0) out.add(i);
  }
  return out;
}
