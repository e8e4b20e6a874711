import { describe, expect, it } from 'vitest';

import { ApiClient, ApiError } from '../src/api.js';
import { FakeServer, LABELS, reviewItem } from './fakes.js';

describe('ApiClient', () => {
  it('fetches the closed label sets', async () => {
    const server = new FakeServer();
    server.route('GET', '/api/labels', 200, LABELS);
    const client = new ApiClient('', server.fetch);
    const labels = await client.labels();
    expect(labels.instruments).toHaveLength(12);
    expect(labels.defects).toContain('NoDefect');
  });

  it('fetches the queue oldest first as served', async () => {
    const server = new FakeServer();
    const items = [reviewItem('a', 1), reviewItem('b', 2)];
    server.route('GET', '/api/review-queue', 200, items);
    const client = new ApiClient('', server.fetch);
    expect(await client.queue()).toEqual(items);
  });

  it('posts a decision with the exact payload shape', async () => {
    const server = new FakeServer();
    server.route('POST', '/api/review-queue/s1/decision', 200, {
      scan_id: 's1',
      status: 'reviewed',
      submitted_at: 1,
      decision: null,
      post_review_defect: null,
    });
    const client = new ApiClient('', server.fetch);
    await client.submitDecision('s1', 'rev-9', 'Scalpel', 'Pores');
    expect(server.requests[0]).toEqual({
      url: '/api/review-queue/s1/decision',
      method: 'POST',
      body: { reviewer_id: 'rev-9', instrument: 'Scalpel', defect: 'Pores' },
    });
  });

  it('raises ApiError with status and server detail on conflict', async () => {
    const server = new FakeServer();
    server.route('POST', '/api/review-queue/s1/decision', 409, {
      detail: 'scan s1 is reviewed, not awaiting review',
    });
    const client = new ApiClient('', server.fetch);
    const attempt = client.submitDecision('s1', 'rev', 'Probe', 'Crack');
    await expect(attempt).rejects.toMatchObject({
      name: 'ApiError',
      status: 409,
      message: 'scan s1 is reviewed, not awaiting review',
    });
    await expect(
      client.submitDecision('s1', 'rev', 'Probe', 'Crack'),
    ).rejects.toBeInstanceOf(ApiError);
  });

  it('propagates network failures', async () => {
    const server = new FakeServer();
    const client = new ApiClient('', server.fetch);
    await expect(client.queue()).rejects.toBeInstanceOf(TypeError);
  });
});
