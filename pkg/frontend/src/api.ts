// HTTP client for the segmentation service. Every request the UI makes
// goes through this module; nothing else talks to the network.

import type {
  ExportCollection,
  PaletteEntry,
  SegmentRequest,
  SegmentResponse,
  WireLabelMask,
} from './types';

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly field?: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

// Pull the human-readable message out of an error response body; the
// service wraps everything as {"error": {"message": ...}}.
export function extractErrorMessage(status: number, body: unknown): string {
  if (typeof body === 'object' && body !== null) {
    const error = (body as Record<string, unknown>)['error'];
    if (typeof error === 'object' && error !== null) {
      const message = (error as Record<string, unknown>)['message'];
      if (typeof message === 'string' && message.length > 0) {
        return message;
      }
    }
  }
  return `HTTP ${status}`;
}

function extractErrorField(body: unknown): string | undefined {
  if (typeof body === 'object' && body !== null) {
    const error = (body as Record<string, unknown>)['error'];
    if (typeof error === 'object' && error !== null) {
      const field = (error as Record<string, unknown>)['field'];
      if (typeof field === 'string') {
        return field;
      }
    }
  }
  return undefined;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, `network error: ${err instanceof Error ? err.message : String(err)}`);
    }
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      // non-JSON body; fall through to the status-based message
    }
    if (!response.ok) {
      throw new ApiError(response.status, extractErrorMessage(response.status, body), extractErrorField(body));
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(payload),
    });
  }

  async health(): Promise<{ status: string; model_id: string }> {
    return this.request('/api/health');
  }

  async fetchPalette(): Promise<PaletteEntry[]> {
    const body = await this.request<{ classes: PaletteEntry[] }>('/api/palette');
    return body.classes;
  }

  segment(payload: SegmentRequest): Promise<SegmentResponse> {
    return this.post('/api/segment', payload);
  }

  exportGeoJson(labelMask: WireLabelMask): Promise<ExportCollection> {
    return this.post('/api/export', { label_mask: labelMask });
  }
}

// At most one segmentation request is on the wire at a time. Submissions
// made while one is in flight are queued, and a newer submission replaces
// the queued one, so after a burst of clicks the server sees the first
// request plus the latest.
export class SegmentQueue {
  private inFlight = false;
  private queued: SegmentRequest | null = null;

  constructor(
    private readonly client: ApiClient,
    private readonly onResult: (response: SegmentResponse) => void,
    private readonly onError: (error: ApiError) => void,
  ) {}

  get busy(): boolean {
    return this.inFlight;
  }

  submit(request: SegmentRequest): void {
    if (this.inFlight) {
      this.queued = request;
      return;
    }
    void this.launch(request);
  }

  private async launch(request: SegmentRequest): Promise<void> {
    this.inFlight = true;
    try {
      const response = await this.client.segment(request);
      this.onResult(response);
    } catch (err) {
      this.onError(err instanceof ApiError ? err : new ApiError(0, String(err)));
    } finally {
      this.inFlight = false;
      const next = this.queued;
      this.queued = null;
      if (next !== null) {
        void this.launch(next);
      }
    }
  }
}
