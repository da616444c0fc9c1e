/**
 * Binary morphology for the client-side label preview.
 *
 * Mirrors the server's definitions exactly: erosion uses the 4-connected
 * cross structuring element, pixels beyond the border count as background,
 * and the pruned ternary label is the union of the separately eroded
 * foreground and background with the eroded-away band marked unknown (-1).
 */

export function erode(mask: Uint8Array, height: number, width: number): Uint8Array {
  const out = new Uint8Array(mask.length);
  for (let r = 0; r < height; r++) {
    for (let c = 0; c < width; c++) {
      const i = r * width + c;
      if (mask[i] !== 1) continue;
      const up = r > 0 && mask[i - width] === 1;
      const down = r < height - 1 && mask[i + width] === 1;
      const left = c > 0 && mask[i - 1] === 1;
      const right = c < width - 1 && mask[i + 1] === 1;
      if (up && down && left && right) {
        out[i] = 1;
      }
    }
  }
  return out;
}

export function erodeK(
  mask: Uint8Array,
  height: number,
  width: number,
  k: number,
): Uint8Array {
  let out: Uint8Array = Uint8Array.from(mask);
  for (let i = 0; i < k; i++) {
    out = erode(out, height, width);
  }
  return out;
}

/** Ternary label: 1 = eroded foreground, 0 = eroded background, -1 = band. */
export function prunedLabel(
  mask: Uint8Array,
  height: number,
  width: number,
  k: number,
): Int8Array {
  const inverted = new Uint8Array(mask.length);
  for (let i = 0; i < mask.length; i++) {
    inverted[i] = mask[i] === 1 ? 0 : 1;
  }
  const fg = erodeK(mask, height, width, k);
  const bg = erodeK(inverted, height, width, k);
  const out = new Int8Array(mask.length).fill(-1);
  for (let i = 0; i < mask.length; i++) {
    if (fg[i] === 1) out[i] = 1;
    else if (bg[i] === 1) out[i] = 0;
  }
  return out;
}

export interface LabelCounts {
  positive: number;
  negative: number;
  unknown: number;
}

export function labelCounts(label: Int8Array): LabelCounts {
  const counts: LabelCounts = { positive: 0, negative: 0, unknown: 0 };
  for (const v of label) {
    if (v === 1) counts.positive += 1;
    else if (v === 0) counts.negative += 1;
    else counts.unknown += 1;
  }
  return counts;
}
