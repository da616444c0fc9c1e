/**
 * Run-length wire format for binary masks.
 *
 * Layout, all little-endian uint32:
 *
 *     [H] [W] [run_0] [run_1] ... [run_n]
 *
 * Runs are row-major pixel counts alternating between background and
 * foreground, always starting with the background run.  A mask whose first
 * pixel is foreground therefore begins with a zero-length background run;
 * every other run must be positive, and the runs must sum to exactly H*W.
 */

export interface DecodedMask {
  height: number;
  width: number;
  /** Row-major 0/1 values, length height*width. */
  data: Uint8Array;
}

export class RleError extends Error {}

const HEADER_BYTES = 8;

export function decodeRle(bytes: Uint8Array): DecodedMask {
  if (bytes.length < HEADER_BYTES) {
    throw new RleError('payload shorter than header');
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const height = view.getUint32(0, true);
  const width = view.getUint32(4, true);
  if (height === 0 || width === 0) {
    throw new RleError('zero-sized mask dimensions');
  }
  const bodyBytes = bytes.length - HEADER_BYTES;
  if (bodyBytes % 4 !== 0) {
    throw new RleError('run section is not a whole number of uint32s');
  }
  if (bodyBytes === 0) {
    throw new RleError('missing run section');
  }
  const runCount = bodyBytes / 4;
  const total = height * width;
  const data = new Uint8Array(total);
  let pos = 0;
  let value = 0;
  for (let i = 0; i < runCount; i++) {
    const run = view.getUint32(HEADER_BYTES + 4 * i, true);
    if (i > 0 && run === 0) {
      throw new RleError('zero-length run after the first');
    }
    if (pos + run > total) {
      throw new RleError(`runs sum past ${total} pixels`);
    }
    if (value === 1) {
      data.fill(1, pos, pos + run);
    }
    pos += run;
    value ^= 1;
  }
  if (pos !== total) {
    throw new RleError(`runs sum to ${pos}, expected ${total}`);
  }
  return { height, width, data };
}

export function encodeRle(mask: DecodedMask): Uint8Array {
  const { height, width, data } = mask;
  if (data.length !== height * width) {
    throw new RleError(`mask has ${data.length} pixels, expected ${height * width}`);
  }
  const runs: number[] = [];
  if (data[0] === 1) {
    runs.push(0);
  }
  let current = data[0];
  let length = 0;
  for (const v of data) {
    if (v !== 0 && v !== 1) {
      throw new RleError(`mask value ${v} is not binary`);
    }
    if (v === current) {
      length += 1;
    } else {
      runs.push(length);
      current = v;
      length = 1;
    }
  }
  runs.push(length);
  const out = new Uint8Array(HEADER_BYTES + 4 * runs.length);
  const view = new DataView(out.buffer);
  view.setUint32(0, height, true);
  view.setUint32(4, width, true);
  runs.forEach((run, i) => view.setUint32(HEADER_BYTES + 4 * i, run, true));
  return out;
}

export function base64ToBytes(b64: string): Uint8Array {
  const binary = atob(b64);
  const out = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) {
    out[i] = binary.charCodeAt(i);
  }
  return out;
}

export function bytesToBase64(bytes: Uint8Array): string {
  let binary = '';
  const chunk = 0x8000;
  for (let i = 0; i < bytes.length; i += chunk) {
    binary += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(binary);
}
