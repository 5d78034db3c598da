/**
 * Minimal fetch client for the review service.
 *
 * Every method resolves to a discriminated result instead of throwing:
 * network failures become { ok: false, code: 'network' } so the session
 * can keep the draft and offer a retry.
 */

import type { NextTaskResponse, ReviewScorePayload, ReviewTaskData } from './types.js';

export interface ApiFailure {
  ok: false;
  code: string; // 'network' | service error codes like 'task_conflict'
  message: string;
}

export type ApiResult<T> = { ok: true; value: T } | ApiFailure;

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function failureFrom(response: Response): Promise<ApiFailure> {
  try {
    const body = await response.json();
    if (body && body.error && typeof body.error.code === 'string') {
      return { ok: false, code: body.error.code, message: body.error.message ?? '' };
    }
  } catch {
    // fall through to the generic failure
  }
  return { ok: false, code: `http_${response.status}`, message: response.statusText };
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async getJson<T>(path: string): Promise<ApiResult<T>> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`);
    } catch (err) {
      return { ok: false, code: 'network', message: String(err) };
    }
    if (!response.ok) return failureFrom(response);
    return { ok: true, value: (await response.json()) as T };
  }

  nextTask(reviewer: string): Promise<ApiResult<NextTaskResponse>> {
    return this.getJson(`/api/tasks/next?reviewer=${encodeURIComponent(reviewer)}`);
  }

  async submitReview(
    taskId: string,
    score: ReviewScorePayload,
  ): Promise<ApiResult<ReviewTaskData>> {
    let response: Response;
    try {
      response = await this.fetchImpl(
        `${this.baseUrl}/api/tasks/${encodeURIComponent(taskId)}/review`,
        {
          method: 'POST',
          headers: { 'Content-Type': 'application/json' },
          body: JSON.stringify(score),
        },
      );
    } catch (err) {
      return { ok: false, code: 'network', message: String(err) };
    }
    if (!response.ok) return failureFrom(response);
    return { ok: true, value: (await response.json()) as ReviewTaskData };
  }

  figureUrl(contentHash: string): string {
    return `${this.baseUrl}/api/figures/${contentHash}`;
  }

  reportUrl(): string {
    return `${this.baseUrl}/api/report`;
  }

  report(): Promise<ApiResult<Record<string, unknown>>> {
    return this.getJson('/api/report');
  }
}
