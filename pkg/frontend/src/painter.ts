/**
 * Canvas-backed Painter: draws the uploaded image, tints the mask, dots the
 * click markers, and fills the ternary preview canvas.  This is the only
 * module that touches a 2D context.
 *
 * The canvas backing store adopts the mask's working resolution on the first
 * overlay render (the service reveals it with the first response); before
 * that the image is shown at its natural size.  CSS keeps the on-screen box
 * size constant either way.
 */

import type { Painter } from './app.js';
import type { DecodedMask } from './rle.js';
import { compositeOverlay, GREEN, RED, ternaryToRgba, type Marker } from './overlay.js';

export class CanvasPainter implements Painter {
  private bitmap: ImageBitmap | null = null;
  private baseRgba: Uint8ClampedArray | null = null;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly preview: HTMLCanvasElement,
  ) {}

  /** Show the chosen image at its natural size until the session starts. */
  setBaseImage(bitmap: ImageBitmap): void {
    this.bitmap = bitmap;
    this.baseRgba = null;
    this.preview.style.display = 'none';
    this.rasterize(bitmap.width, bitmap.height);
  }

  renderOverlay(mask: DecodedMask, markers: Marker[]): void {
    if (this.bitmap === null) return;
    if (
      this.baseRgba === null ||
      this.canvas.width !== mask.width ||
      this.canvas.height !== mask.height
    ) {
      this.rasterize(mask.width, mask.height);
    }
    const ctx = this.context(this.canvas);
    const blended = compositeOverlay(this.baseRgba!, mask);
    const frame = ctx.createImageData(mask.width, mask.height);
    frame.data.set(blended);
    ctx.putImageData(frame, 0, 0);
    const radius = Math.max(1.5, mask.width / 64);
    for (const marker of markers) {
      ctx.beginPath();
      ctx.arc(marker.col + 0.5, marker.row + 0.5, radius, 0, 2 * Math.PI);
      const [r, g, b] = marker.positive ? GREEN : RED;
      ctx.fillStyle = `rgb(${r}, ${g}, ${b})`;
      ctx.fill();
      ctx.lineWidth = radius / 3;
      ctx.strokeStyle = 'white';
      ctx.stroke();
    }
  }

  renderTernaryPreview(label: Int8Array, height: number, width: number): void {
    this.preview.width = width;
    this.preview.height = height;
    this.preview.style.display = 'block';
    const ctx = this.context(this.preview);
    const frame = ctx.createImageData(width, height);
    frame.data.set(ternaryToRgba(label));
    ctx.putImageData(frame, 0, 0);
  }

  setInteractive(enabled: boolean): void {
    this.canvas.style.cursor = enabled ? 'crosshair' : 'not-allowed';
  }

  private rasterize(width: number, height: number): void {
    if (this.bitmap === null) return;
    this.canvas.width = width;
    this.canvas.height = height;
    const ctx = this.context(this.canvas);
    ctx.imageSmoothingEnabled = true;
    ctx.drawImage(this.bitmap, 0, 0, width, height);
    this.baseRgba = ctx.getImageData(0, 0, width, height).data;
  }

  private context(canvas: HTMLCanvasElement): CanvasRenderingContext2D {
    const ctx = canvas.getContext('2d');
    if (ctx === null) throw new Error('2D canvas is unavailable');
    return ctx;
  }
}
