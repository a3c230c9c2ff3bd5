import { describe, expect, it } from 'vitest';

import { ApiClient, ApiError, extractErrorMessage, SegmentQueue } from '../src/api';
import type { SegmentRequest, SegmentResponse } from '../src/types';

interface PendingCall {
  url: string;
  body: SegmentRequest;
  resolve: (r: Response) => void;
  reject: (e: Error) => void;
}

// fetch stub whose responses are resolved by hand, so in-flight ordering
// is fully controlled by the test.
function makeFetchStub() {
  const calls: PendingCall[] = [];
  const fetchImpl = (url: string, init?: RequestInit): Promise<Response> =>
    new Promise((resolve, reject) => {
      calls.push({ url, body: JSON.parse(String(init?.body ?? 'null')), resolve, reject });
    });
  return { calls, fetchImpl };
}

function jsonResponse(status: number, payload: unknown): Response {
  return {
    ok: status >= 200 && status < 300,
    status,
    json: () => Promise.resolve(payload),
  } as unknown as Response;
}

function okSegmentBody(tag: number): SegmentResponse {
  return {
    label_mask: { width: 1, height: 1, runs: [[0, 1]], palette: {} },
    timing_ms: { total: tag },
  };
}

function request(tag: number): SegmentRequest {
  return { image: `img${tag}`, squiggles: [{ points: [[1, 1]], class_id: 1, radius: 2 }] };
}

const flush = () => new Promise((r) => setTimeout(r, 0));

describe('segment queue', () => {
  it('keeps at most one request in flight and replaces the queued one', async () => {
    const { calls, fetchImpl } = makeFetchStub();
    const client = new ApiClient('', fetchImpl);
    const results: number[] = [];
    const errors: string[] = [];
    const queue = new SegmentQueue(
      client,
      (r) => results.push(r.timing_ms['total']!),
      (e) => errors.push(e.message),
    );

    queue.submit(request(1));
    await flush();
    expect(calls.length).toBe(1);
    expect(queue.busy).toBe(true);

    // two more submissions while the first is on the wire: the second is
    // queued, the third replaces it
    queue.submit(request(2));
    queue.submit(request(3));
    await flush();
    expect(calls.length).toBe(1);

    calls[0]!.resolve(jsonResponse(200, okSegmentBody(1)));
    await flush();
    expect(results).toEqual([1]);
    expect(calls.length).toBe(2);
    expect(calls[1]!.body.image).toBe('img3'); // request 2 never sent

    calls[1]!.resolve(jsonResponse(200, okSegmentBody(3)));
    await flush();
    expect(results).toEqual([1, 3]);
    expect(queue.busy).toBe(false);
    expect(errors).toEqual([]);
  });

  it('reports failures through the error callback and keeps going', async () => {
    const { calls, fetchImpl } = makeFetchStub();
    const client = new ApiClient('', fetchImpl);
    const results: number[] = [];
    const errors: ApiError[] = [];
    const queue = new SegmentQueue(
      client,
      (r) => results.push(r.timing_ms['total']!),
      (e) => errors.push(e),
    );

    queue.submit(request(1));
    await flush();
    calls[0]!.resolve(jsonResponse(422, { error: { message: 'invalid class id 9' } }));
    await flush();
    expect(results).toEqual([]);
    expect(errors.length).toBe(1);
    expect(errors[0]!.status).toBe(422);
    expect(errors[0]!.message).toBe('invalid class id 9');

    // the queue recovers: a later submission still goes out
    queue.submit(request(2));
    await flush();
    expect(calls.length).toBe(2);
    calls[1]!.resolve(jsonResponse(200, okSegmentBody(2)));
    await flush();
    expect(results).toEqual([2]);
  });

  it('maps network failures to status 0 errors', async () => {
    const { calls, fetchImpl } = makeFetchStub();
    const client = new ApiClient('', fetchImpl);
    const errors: ApiError[] = [];
    const queue = new SegmentQueue(client, () => undefined, (e) => errors.push(e));
    queue.submit(request(1));
    await flush();
    calls[0]!.reject(new Error('connection refused'));
    await flush();
    expect(errors.length).toBe(1);
    expect(errors[0]!.status).toBe(0);
    expect(errors[0]!.message).toContain('connection refused');
  });
});

describe('api client plumbing', () => {
  it('extracts the palette list', async () => {
    const { calls, fetchImpl } = makeFetchStub();
    const client = new ApiClient('http://svc', fetchImpl);
    const pending = client.fetchPalette();
    await flush();
    expect(calls[0]!.url).toBe('http://svc/api/palette');
    calls[0]!.resolve(
      jsonResponse(200, { classes: [{ id: 1, name: 'tumour', color: [214, 39, 40] }] }),
    );
    const palette = await pending;
    expect(palette).toEqual([{ id: 1, name: 'tumour', color: [214, 39, 40] }]);
  });

  it('carries the error field through ApiError', async () => {
    const { calls, fetchImpl } = makeFetchStub();
    const client = new ApiClient('', fetchImpl);
    const pending = client.segment(request(1));
    await flush();
    calls[0]!.resolve(jsonResponse(400, { error: { message: 'image must be set', field: 'image' } }));
    await expect(pending).rejects.toMatchObject({
      status: 400,
      message: 'image must be set',
      field: 'image',
    });
  });
});

describe('error message extraction', () => {
  it('prefers the server-provided message', () => {
    expect(extractErrorMessage(422, { error: { message: 'invalid class id 7' } })).toBe(
      'invalid class id 7',
    );
  });

  it('falls back to the HTTP status', () => {
    expect(extractErrorMessage(500, null)).toBe('HTTP 500');
    expect(extractErrorMessage(502, 'gateway soup')).toBe('HTTP 502');
    expect(extractErrorMessage(400, { error: {} })).toBe('HTTP 400');
  });
});
