/**
 * Browser entry point: grabs the page elements, wires the file picker to the
 * app, and starts listening for clicks.
 */

import { AnnotationClient } from './api.js';
import { AnnotationApp, type AppElements } from './app.js';
import { CanvasPainter } from './painter.js';
import { bytesToBase64 } from './rle.js';

function grab<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el as T;
}

const elements: AppElements = {
  canvas: grab<HTMLCanvasElement>('canvas'),
  counter: grab('counter'),
  lossLine: grab('loss'),
  summary: grab('summary'),
  toasts: grab('toasts'),
  config: {
    ca: grab<HTMLSelectElement>('cfg-ca'),
    rm: grab<HTMLSelectElement>('cfg-rm'),
    cm: grab<HTMLSelectElement>('cfg-cm'),
    k: grab<HTMLInputElement>('cfg-k'),
    lr: grab<HTMLInputElement>('cfg-lr'),
  },
  undoButton: grab<HTMLButtonElement>('undo'),
  acceptButton: grab<HTMLButtonElement>('accept'),
  rejectButton: grab<HTMLButtonElement>('reject'),
};

const painter = new CanvasPainter(elements.canvas, grab<HTMLCanvasElement>('preview'));
const client = new AnnotationClient('');
const app = new AnnotationApp(client, painter, elements);

const filePicker = grab<HTMLInputElement>('file');
filePicker.addEventListener('change', () => {
  const file = filePicker.files?.[0];
  if (file === undefined) return;
  void (async () => {
    const bytes = new Uint8Array(await file.arrayBuffer());
    const bitmap = await createImageBitmap(file);
    painter.setBaseImage(bitmap);
    app.loadImage(bytesToBase64(bytes));
  })();
});

void client
  .listDecoders()
  .then((res) => {
    grab('status').textContent =
      `connected - decoders: ${res.decoders.map((d) => d.name).join(', ')}`;
  })
  .catch(() => {
    grab('status').textContent = 'service unreachable';
  });
