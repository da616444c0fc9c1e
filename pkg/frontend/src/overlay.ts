/**
 * Pure pixel math for the annotation canvas: mask tinting, ternary-label
 * coloring, and display-to-pixel coordinate mapping.  Everything here works
 * on raw RGBA buffers so it runs identically in the browser and in tests.
 */

import type { DecodedMask } from './rle.js';

export interface Marker {
  row: number;
  col: number;
  positive: boolean;
}

/** Foreground tint and marker colors: green = foreground/positive, red =
 * background/negative, blue = the unknown band of a pruned label. */
export const GREEN: [number, number, number] = [46, 204, 64];
export const RED: [number, number, number] = [255, 65, 54];
export const BLUE: [number, number, number] = [0, 116, 217];

/**
 * Blend a semi-transparent green over every foreground pixel of an RGBA
 * image buffer (length 4*H*W, same dimensions as the mask).  Returns a new
 * buffer; background pixels are untouched.
 */
export function compositeOverlay(
  imageRgba: Uint8ClampedArray,
  mask: DecodedMask,
  alpha = 0.45,
): Uint8ClampedArray {
  const expected = 4 * mask.height * mask.width;
  if (imageRgba.length !== expected) {
    throw new Error(`image buffer has ${imageRgba.length} bytes, expected ${expected}`);
  }
  const out = Uint8ClampedArray.from(imageRgba);
  for (let i = 0; i < mask.data.length; i++) {
    if (mask.data[i] !== 1) continue;
    const o = 4 * i;
    out[o] = (1 - alpha) * out[o] + alpha * GREEN[0];
    out[o + 1] = (1 - alpha) * out[o + 1] + alpha * GREEN[1];
    out[o + 2] = (1 - alpha) * out[o + 2] + alpha * GREEN[2];
  }
  return out;
}

/** Solid-color rendering of a ternary label: green 1, red 0, blue -1. */
export function ternaryToRgba(label: Int8Array): Uint8ClampedArray {
  const out = new Uint8ClampedArray(4 * label.length);
  for (let i = 0; i < label.length; i++) {
    const color = label[i] === 1 ? GREEN : label[i] === 0 ? RED : BLUE;
    const o = 4 * i;
    out[o] = color[0];
    out[o + 1] = color[1];
    out[o + 2] = color[2];
    out[o + 3] = 255;
  }
  return out;
}

/**
 * Display offset (CSS pixels within the canvas box) to a unit fraction of
 * the image area, or null when the point lies outside the box.
 */
export function displayToFraction(
  offsetX: number,
  offsetY: number,
  boxWidth: number,
  boxHeight: number,
): { fx: number; fy: number } | null {
  if (boxWidth <= 0 || boxHeight <= 0) return null;
  if (offsetX < 0 || offsetY < 0 || offsetX >= boxWidth || offsetY >= boxHeight) {
    return null;
  }
  return { fx: offsetX / boxWidth, fy: offsetY / boxHeight };
}

/** Unit fraction to working-resolution pixel: floor after scaling. */
export function fractionToPixel(
  fx: number,
  fy: number,
  width: number,
  height: number,
): { row: number; col: number } {
  const row = Math.min(height - 1, Math.floor(fy * height));
  const col = Math.min(width - 1, Math.floor(fx * width));
  return { row, col };
}

/** Center of a working-resolution pixel in display coordinates. */
export function pixelToDisplay(
  row: number,
  col: number,
  width: number,
  height: number,
  boxWidth: number,
  boxHeight: number,
): { x: number; y: number } {
  return {
    x: ((col + 0.5) / width) * boxWidth,
    y: ((row + 0.5) / height) * boxHeight,
  };
}
