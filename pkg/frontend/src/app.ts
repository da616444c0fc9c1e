/**
 * Annotation application logic, independent of any concrete canvas.
 *
 * The app owns the session state machine (idle -> ready -> active ->
 * finished), the click queue, and the config freeze; all drawing goes
 * through an injected Painter so the same code runs in the browser and in
 * a scripted DOM test.
 *
 * Interaction contract:
 *  - left-click places a positive (foreground) click, right-click or
 *    ctrl+click a negative one;
 *  - at most one request is in flight per session, later clicks queue in
 *    order behind it;
 *  - the session on the server is created lazily by the first click, and
 *    the config toggles freeze at that moment;
 *  - every overlay repaint is driven by a server response, never by local
 *    mask edits.
 */

import {
  AnnotationClient,
  ApiError,
  type AdaptationConfigPayload,
  type ClickLabel,
  type FinishResponse,
} from './api.js';
import { base64ToBytes, decodeRle, type DecodedMask } from './rle.js';
import { labelCounts, prunedLabel } from './morphology.js';
import { displayToFraction, fractionToPixel, type Marker } from './overlay.js';

export interface Painter {
  /** Repaint the mask overlay and click markers over the base image. */
  renderOverlay(mask: DecodedMask, markers: Marker[]): void;
  /** Show the ternary pruned-label preview of the accepted mask. */
  renderTernaryPreview(label: Int8Array, height: number, width: number): void;
  /** Flip the pointer affordance when the session stops taking clicks. */
  setInteractive(enabled: boolean): void;
}

export interface ConfigInputs {
  ca: HTMLSelectElement;
  rm: HTMLSelectElement;
  cm: HTMLSelectElement;
  k: HTMLInputElement;
  lr: HTMLInputElement;
}

export interface AppElements {
  canvas: HTMLCanvasElement;
  counter: HTMLElement;
  lossLine: HTMLElement;
  summary: HTMLElement;
  toasts: HTMLElement;
  config: ConfigInputs;
  undoButton: HTMLButtonElement;
  acceptButton: HTMLButtonElement;
  rejectButton: HTMLButtonElement;
}

export type AppStatus = 'idle' | 'ready' | 'active' | 'finished';

export class AnnotationApp {
  status: AppStatus = 'idle';
  sessionId: string | null = null;
  height = 0;
  width = 0;
  readonly markers: Marker[] = [];
  lastMask: DecodedMask | null = null;
  overlayRefreshes = 0;

  private imagePngBase64: string | null = null;
  private decoder = 'default';
  private chain: Promise<void> = Promise.resolve();
  private configFrozen = false;

  constructor(
    private readonly client: AnnotationClient,
    private readonly painter: Painter,
    private readonly el: AppElements,
  ) {
    el.canvas.addEventListener('mousedown', (ev) => {
      ev.preventDefault();
      this.handleCanvasClick(ev);
    });
    el.canvas.addEventListener('contextmenu', (ev) => ev.preventDefault());
    el.undoButton.addEventListener('click', () => void this.undo());
    el.acceptButton.addEventListener('click', () => void this.finish(true));
    el.rejectButton.addEventListener('click', () => void this.finish(false));
  }

  /** Stage an image (raw PNG bytes, base64): the session starts on first click. */
  loadImage(imagePngBase64: string, decoder = 'default'): void {
    this.imagePngBase64 = imagePngBase64;
    this.decoder = decoder;
    this.sessionId = null;
    this.status = 'ready';
    this.markers.length = 0;
    this.lastMask = null;
    this.configFrozen = false;
    this.setConfigDisabled(false);
    this.painter.setInteractive(true);
    this.el.summary.textContent = '';
    this.el.lossLine.textContent = '';
    this.el.counter.textContent = '0 clicks';
  }

  readConfig(): AdaptationConfigPayload {
    const cfg = this.el.config;
    return {
      ca: cfg.ca.value as AdaptationConfigPayload['ca'],
      rm: cfg.rm.value as AdaptationConfigPayload['rm'],
      cm: cfg.cm.value as AdaptationConfigPayload['cm'],
      k: Number(cfg.k.value),
      lr: Number(cfg.lr.value),
    };
  }

  /** Resolves when every queued request has been answered. */
  whenIdle(): Promise<void> {
    return this.chain;
  }

  handleCanvasClick(ev: MouseEvent): void {
    if (this.status !== 'ready' && this.status !== 'active') return;
    const rect = this.el.canvas.getBoundingClientRect();
    const point = displayToFraction(
      ev.clientX - rect.left,
      ev.clientY - rect.top,
      rect.width,
      rect.height,
    );
    if (point === null) return;
    const label: ClickLabel = ev.button === 2 || ev.ctrlKey ? 'negative' : 'positive';
    this.enqueueClick(point.fx, point.fy, label);
  }

  /** Queue a click given as image fractions; pixel coords are fixed once the
   * session (and therefore the working resolution) exists. */
  enqueueClick(fx: number, fy: number, label: ClickLabel): Promise<void> {
    this.chain = this.chain.then(async () => {
      if (this.status !== 'ready' && this.status !== 'active') return;
      try {
        await this.ensureSession();
        const { row, col } = fractionToPixel(fx, fy, this.width, this.height);
        const res = await this.client.click(this.sessionId!, row, col, label);
        this.markers.push({ row, col, positive: label === 'positive' });
        this.refreshOverlay(res.mask_rle);
        this.el.counter.textContent = `${res.clicks} clicks`;
        this.el.lossLine.textContent =
          res.loss === null ? '' : `click-adaptation loss ${res.loss.toFixed(4)}`;
      } catch (err) {
        this.toast(err);
      }
    });
    return this.chain;
  }

  undo(): Promise<void> {
    this.chain = this.chain.then(async () => {
      if (this.status !== 'active') return;
      try {
        const res = await this.client.undo(this.sessionId!);
        this.markers.pop();
        this.refreshOverlay(res.mask_rle);
        this.el.counter.textContent = `${res.clicks} clicks`;
      } catch (err) {
        this.toast(err);
      }
    });
    return this.chain;
  }

  async finish(accept: boolean): Promise<FinishResponse | null> {
    await this.chain;
    if (this.status !== 'active' || this.sessionId === null) {
      this.toast(new Error('no active session to finish'));
      return null;
    }
    const cfg = this.readConfig();
    try {
      const res = await this.client.finish(this.sessionId, accept);
      this.status = 'finished';
      this.painter.setInteractive(false);
      this.el.summary.textContent = summarize(res, cfg);
      if (accept && cfg.rm === 'eroded' && this.lastMask !== null) {
        const label = prunedLabel(
          this.lastMask.data,
          this.lastMask.height,
          this.lastMask.width,
          cfg.k ?? 5,
        );
        this.painter.renderTernaryPreview(label, this.lastMask.height, this.lastMask.width);
      }
      return res;
    } catch (err) {
      this.toast(err);
      return null;
    }
  }

  /** The client-side view of the label the server trains on (RM=eroded). */
  previewCounts(k: number): ReturnType<typeof labelCounts> | null {
    if (this.lastMask === null) return null;
    const label = prunedLabel(
      this.lastMask.data,
      this.lastMask.height,
      this.lastMask.width,
      k,
    );
    return labelCounts(label);
  }

  private async ensureSession(): Promise<void> {
    if (this.sessionId !== null) return;
    if (this.imagePngBase64 === null) {
      throw new Error('no image loaded');
    }
    const config = this.readConfig();
    const created = await this.client.createSession(
      this.imagePngBase64,
      this.decoder,
      config,
    );
    this.sessionId = created.session_id;
    this.height = created.height;
    this.width = created.width;
    this.status = 'active';
    this.freezeConfig();
  }

  private refreshOverlay(maskB64: string): void {
    const mask = decodeRle(base64ToBytes(maskB64));
    this.lastMask = mask;
    this.overlayRefreshes += 1;
    this.painter.renderOverlay(mask, [...this.markers]);
  }

  private freezeConfig(): void {
    if (this.configFrozen) return;
    this.configFrozen = true;
    this.setConfigDisabled(true);
  }

  private setConfigDisabled(disabled: boolean): void {
    const cfg = this.el.config;
    for (const input of [cfg.ca, cfg.rm, cfg.cm, cfg.k, cfg.lr]) {
      input.disabled = disabled;
    }
  }

  private toast(err: unknown): void {
    const div = this.el.toasts.ownerDocument.createElement('div');
    div.className = 'toast';
    div.textContent =
      err instanceof ApiError
        ? `${err.code}: ${err.message}`
        : err instanceof Error
          ? err.message
          : String(err);
    this.el.toasts.appendChild(div);
    setTimeout(() => div.remove(), 4000);
  }
}

export function summarize(res: FinishResponse, cfg: AdaptationConfigPayload): string {
  const baseline =
    (cfg.ca ?? 'none') === 'none' &&
    (cfg.rm ?? 'none') === 'none' &&
    (cfg.cm ?? 'off') === 'off';
  const parts: string[] = [];
  if (res.steps === 1) {
    parts.push('1 post-image step');
  } else {
    parts.push(`${res.steps} steps${baseline ? ' (baseline)' : ''}`);
  }
  if (res.restored) {
    parts.push('weights restored');
  }
  if (res.label_positive || res.label_negative || res.label_unknown) {
    parts.push(
      `label ${res.label_positive} fg / ${res.label_negative} bg / ` +
        `${res.label_unknown} unknown`,
    );
  }
  if (res.loss !== null) {
    parts.push(`loss ${res.loss.toFixed(4)}`);
  }
  parts.push(res.accepted ? 'accepted' : 'rejected');
  return parts.join(' · ');
}
