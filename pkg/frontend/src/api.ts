/**
 * Typed HTTP client for the annotation service.  One method per endpoint,
 * no extra routes; server-side failures surface as ApiError with the
 * service's error code and HTTP status attached.
 */

export interface AdaptationConfigPayload {
  ca?: 'none' | 'reset' | 'continual';
  rm?: 'none' | 'eroded' | 'untreated';
  cm?: 'off' | 'on';
  k?: number;
  lr?: number;
  seed?: number;
}

export interface CreateSessionResponse {
  session_id: string;
  height: number;
  width: number;
  clicks: number;
  mask_rle: string;
}

export interface ClickResponse {
  mask_rle: string;
  clicks: number;
  loss: number | null;
}

export interface UndoResponse {
  mask_rle: string;
  clicks: number;
}

export interface FinishResponse {
  steps: number;
  restored: boolean;
  label_positive: number;
  label_negative: number;
  label_unknown: number;
  loss: number | null;
  accepted: boolean;
  clicks: number;
  status: string;
}

export interface MaskResponse {
  mask_rle: string;
  clicks: number;
  height: number;
  width: number;
  status: string;
}

export interface DecoderInfo {
  name: string;
  step_count: number;
}

export type ClickLabel = 'positive' | 'negative';

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    detail: string,
  ) {
    super(detail);
  }
}

export class AnnotationClient {
  constructor(
    private readonly baseUrl = '',
    private readonly fetchImpl: typeof fetch = globalThis.fetch.bind(globalThis),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, init);
    if (!response.ok) {
      let code = 'HttpError';
      let detail = `${response.status} on ${path}`;
      try {
        const body = (await response.json()) as { error?: string; detail?: string };
        code = body.error ?? code;
        detail = body.detail ?? detail;
      } catch {
        // non-JSON error body; keep the generic detail
      }
      throw new ApiError(response.status, code, detail);
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, body?: unknown): Promise<T> {
    return this.request<T>(path, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
  }

  createSession(
    imagePngBase64: string,
    decoder = 'default',
    config?: AdaptationConfigPayload,
  ): Promise<CreateSessionResponse> {
    return this.post('/sessions', {
      image_png_base64: imagePngBase64,
      decoder,
      ...(config === undefined ? {} : { config }),
    });
  }

  click(
    sessionId: string,
    row: number,
    col: number,
    label: ClickLabel,
  ): Promise<ClickResponse> {
    return this.post(`/sessions/${sessionId}/clicks`, { row, col, label });
  }

  undo(sessionId: string): Promise<UndoResponse> {
    return this.post(`/sessions/${sessionId}/undo`);
  }

  finish(sessionId: string, accept: boolean): Promise<FinishResponse> {
    return this.post(`/sessions/${sessionId}/finish`, { accept });
  }

  mask(sessionId: string): Promise<MaskResponse> {
    return this.request(`/sessions/${sessionId}/mask`);
  }

  listDecoders(): Promise<{ decoders: DecoderInfo[] }> {
    return this.request('/decoders');
  }

  cloneDecoder(name: string, to: string): Promise<unknown> {
    return this.post(`/decoders/${name}/clone`, { to });
  }

  resetDecoder(name: string): Promise<unknown> {
    return this.post(`/decoders/${name}/reset`);
  }

  metrics(): Promise<Record<string, number>> {
    return this.request('/metrics');
  }
}
