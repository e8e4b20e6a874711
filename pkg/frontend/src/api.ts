/** Thin typed client over the service's JSON API. */

import type { LabelSets, ReviewItemView, ScanRecordView } from './types.js';

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        if (body && typeof body.detail === 'string') {
          detail = body.detail;
        }
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  labels(): Promise<LabelSets> {
    return this.request<LabelSets>('/api/labels');
  }

  queue(): Promise<ReviewItemView[]> {
    return this.request<ReviewItemView[]>('/api/review-queue');
  }

  scan(scanId: string): Promise<ScanRecordView> {
    return this.request<ScanRecordView>(`/api/scans/${encodeURIComponent(scanId)}`);
  }

  submitDecision(
    scanId: string,
    reviewerId: string,
    instrument: string,
    defect: string,
  ): Promise<ScanRecordView> {
    return this.request<ScanRecordView>(
      `/api/review-queue/${encodeURIComponent(scanId)}/decision`,
      {
        method: 'POST',
        headers: { 'content-type': 'application/json' },
        body: JSON.stringify({
          reviewer_id: reviewerId,
          instrument,
          defect,
        }),
      },
    );
  }
}
