import { describe, expect, it } from "vitest";

import { decodeMask, encodeMask, foregroundVoxels, MaskRle } from "../src/rle.js";

describe("mask run-length codec", () => {
  it("decodes runs into flat labels", () => {
    const rle: MaskRle = { shape: [2, 2, 2], labels: { "1": [[0, 2]], "2": [[5, 3]] } };
    const mask = decodeMask(rle);
    expect(Array.from(mask.labels)).toEqual([1, 1, 0, 0, 0, 2, 2, 2]);
    expect(foregroundVoxels(mask)).toEqual(new Set([0, 1, 5, 6, 7]));
  });

  it("round trips encode(decode(x))", () => {
    const rle: MaskRle = {
      shape: [2, 3, 4],
      labels: { "1": [[0, 3], [10, 2]], "3": [[5, 1], [20, 4]] },
    };
    expect(encodeMask(decodeMask(rle))).toEqual(rle);
  });

  it("rejects runs escaping the volume", () => {
    expect(() => decodeMask({ shape: [1, 1, 4], labels: { "1": [[3, 2]] } })).toThrow(/escapes/);
  });

  it("empty mask has no runs", () => {
    const mask = decodeMask({ shape: [2, 2, 2], labels: {} });
    expect(foregroundVoxels(mask).size).toBe(0);
    expect(encodeMask(mask)).toEqual({ shape: [2, 2, 2], labels: {} });
  });
});
