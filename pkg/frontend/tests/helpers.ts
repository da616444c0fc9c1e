/**
 * Shared fixtures for the DOM-driven tests: a minimal annotation page, a
 * recording painter, and synthetic mask payloads.  Only jsdom tests import
 * this module (it touches `document` when called, not at import time).
 */

import type { AppElements, Painter } from '../src/app.js';
import type { Marker } from '../src/overlay.js';
import { bytesToBase64, encodeRle, type DecodedMask } from '../src/rle.js';

export class RecordingPainter implements Painter {
  overlays: Array<{ mask: DecodedMask; markers: Marker[] }> = [];
  previews: Array<{ label: Int8Array; height: number; width: number }> = [];
  interactive: boolean[] = [];

  renderOverlay(mask: DecodedMask, markers: Marker[]): void {
    this.overlays.push({ mask, markers });
  }

  renderTernaryPreview(label: Int8Array, height: number, width: number): void {
    this.previews.push({ label, height, width });
  }

  setInteractive(enabled: boolean): void {
    this.interactive.push(enabled);
  }
}

export interface ConfigValues {
  ca?: string;
  rm?: string;
  cm?: string;
  k?: string;
  lr?: string;
}

/** Build the annotation page elements inside the jsdom document. */
export function buildElements(values: ConfigValues = {}): AppElements {
  document.body.innerHTML = '';
  const select = (options: string[], value: string): HTMLSelectElement => {
    const s = document.createElement('select');
    for (const o of options) {
      const opt = document.createElement('option');
      opt.value = o;
      opt.textContent = o;
      s.appendChild(opt);
    }
    s.value = value;
    return s;
  };
  const input = (value: string): HTMLInputElement => {
    const i = document.createElement('input');
    i.value = value;
    return i;
  };
  const div = (): HTMLElement => document.createElement('div');

  const canvas = document.createElement('canvas');
  const el: AppElements = {
    canvas,
    counter: div(),
    lossLine: div(),
    summary: div(),
    toasts: div(),
    config: {
      ca: select(['none', 'reset', 'continual'], values.ca ?? 'reset'),
      rm: select(['none', 'eroded', 'untreated'], values.rm ?? 'eroded'),
      cm: select(['off', 'on'], values.cm ?? 'on'),
      k: input(values.k ?? '5'),
      lr: input(values.lr ?? '0.01'),
    },
    undoButton: document.createElement('button'),
    acceptButton: document.createElement('button'),
    rejectButton: document.createElement('button'),
  };
  document.body.append(
    el.canvas,
    el.counter,
    el.lossLine,
    el.summary,
    el.toasts,
    el.config.ca,
    el.config.rm,
    el.config.cm,
    el.config.k,
    el.config.lr,
    el.undoButton,
    el.acceptButton,
    el.rejectButton,
  );
  return el;
}

/** Pin the canvas to a fixed display box so click math is deterministic. */
export function pinCanvasBox(canvas: HTMLCanvasElement, width: number, height: number): void {
  canvas.getBoundingClientRect = () =>
    ({
      x: 0,
      y: 0,
      left: 0,
      top: 0,
      right: width,
      bottom: height,
      width,
      height,
      toJSON: () => ({}),
    }) as DOMRect;
}

export function mouseDown(
  canvas: HTMLCanvasElement,
  clientX: number,
  clientY: number,
  opts: { button?: number; ctrlKey?: boolean } = {},
): void {
  canvas.dispatchEvent(
    new MouseEvent('mousedown', {
      clientX,
      clientY,
      button: opts.button ?? 0,
      ctrlKey: opts.ctrlKey ?? false,
      bubbles: true,
      cancelable: true,
    }),
  );
}

/** Base64 RLE payload for a mask with the given foreground pixels. */
export function maskB64(
  height: number,
  width: number,
  fg: Array<[number, number]> = [],
): string {
  const data = new Uint8Array(height * width);
  for (const [r, c] of fg) data[r * width + c] = 1;
  return bytesToBase64(encodeRle({ height, width, data }));
}

/** Let queued promise callbacks and zero-delay timers run. */
export function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
