import { describe, expect, it } from 'vitest';

import { erode, erodeK, labelCounts, prunedLabel } from '../src/morphology.js';

function flat(rows: number[][]): Uint8Array {
  return Uint8Array.from(rows.flat());
}

function grid(data: ArrayLike<number>, height: number, width: number): number[][] {
  const out: number[][] = [];
  for (let r = 0; r < height; r++) {
    out.push(Array.from({ length: width }, (_, c) => data[r * width + c]));
  }
  return out;
}

describe('erode', () => {
  it('keeps only pixels whose cross neighbourhood is foreground', () => {
    const eroded = erode(
      flat([
        [1, 1, 1],
        [1, 1, 1],
        [1, 1, 1],
      ]),
      3,
      3,
    );
    expect(grid(eroded, 3, 3)).toEqual([
      [0, 0, 0],
      [0, 1, 0],
      [0, 0, 0],
    ]);
  });

  it('treats pixels beyond the border as background', () => {
    // a full 1x3 strip erodes away entirely: every pixel touches the border
    expect(grid(erode(flat([[1, 1, 1]]), 1, 3), 1, 3)).toEqual([[0, 0, 0]]);
  });

  it('erodes a plus shape to its centre and a 5x5 block to its core', () => {
    const plus = flat([
      [0, 1, 0],
      [1, 1, 1],
      [0, 1, 0],
    ]);
    expect(grid(erode(plus, 3, 3), 3, 3)).toEqual([
      [0, 0, 0],
      [0, 1, 0],
      [0, 0, 0],
    ]);
    const block = new Uint8Array(25).fill(1);
    expect(grid(erodeK(block, 5, 5, 2), 5, 5)).toEqual([
      [0, 0, 0, 0, 0],
      [0, 0, 0, 0, 0],
      [0, 0, 1, 0, 0],
      [0, 0, 0, 0, 0],
      [0, 0, 0, 0, 0],
    ]);
  });

  it('erodeK(m, k) equals k repeated single erosions', () => {
    let state = 99;
    const next = () => {
      state = (state * 1103515245 + 12345) % 2147483648;
      return state / 2147483648;
    };
    for (let trial = 0; trial < 50; trial++) {
      const height = 1 + Math.floor(next() * 10);
      const width = 1 + Math.floor(next() * 10);
      const data = Uint8Array.from({ length: height * width }, () =>
        next() < 0.6 ? 1 : 0,
      );
      let manual: Uint8Array = Uint8Array.from(data);
      for (let i = 0; i < 3; i++) manual = erode(manual, height, width);
      expect(Array.from(erodeK(data, height, width, 3))).toEqual(Array.from(manual));
    }
  });

  it('erodeK with k=0 copies the mask', () => {
    const data = flat([
      [1, 0],
      [1, 1],
    ]);
    const out = erodeK(data, 2, 2, 0);
    expect(Array.from(out)).toEqual(Array.from(data));
    expect(out).not.toBe(data);
  });
});

describe('prunedLabel', () => {
  it('keeps confident cores and marks the eroded band unknown', () => {
    // 9x9 with a 3x3 foreground block at rows/cols 3..5.  One erosion keeps
    // only the block centre as positive; background keeps pixels that are at
    // least one step away from both the block and the image border (beyond
    // the border counts as non-foreground for either polarity).
    const data = new Uint8Array(81);
    for (let r = 3; r <= 5; r++) {
      for (let c = 3; c <= 5; c++) data[r * 9 + c] = 1;
    }
    const label = prunedLabel(data, 9, 9, 1);
    const at = (r: number, c: number) => label[r * 9 + c];
    // only the block centre survives as positive
    expect(at(4, 4)).toBe(1);
    expect(at(3, 3)).toBe(-1);
    expect(at(3, 4)).toBe(-1);
    // deep background survives as negative
    expect(at(1, 1)).toBe(0);
    expect(at(2, 2)).toBe(0);
    expect(at(7, 4)).toBe(0);
    // the image border ring and the band hugging the block are unknown
    expect(at(0, 0)).toBe(-1);
    expect(at(0, 4)).toBe(-1);
    expect(at(8, 8)).toBe(-1);
    expect(at(2, 4)).toBe(-1);
    expect(at(6, 5)).toBe(-1);
  });

  it('marks the border ring unknown on an all-background mask', () => {
    // the inverted (all-ones) mask erodes down to the centre pixel, so only
    // that pixel keeps a confident background label
    const label = prunedLabel(new Uint8Array(9), 3, 3, 1);
    expect(Array.from(label)).toEqual([-1, -1, -1, -1, 0, -1, -1, -1, -1]);
  });

  it('with k=0 labels every pixel by its mask value', () => {
    const data = flat([
      [1, 0],
      [0, 1],
    ]);
    expect(Array.from(prunedLabel(data, 2, 2, 0))).toEqual([1, 0, 0, 1]);
  });

  it('counts labels by polarity', () => {
    const counts = labelCounts(Int8Array.from([1, 1, 0, -1, -1, -1]));
    expect(counts).toEqual({ positive: 2, negative: 1, unknown: 3 });
  });
});
