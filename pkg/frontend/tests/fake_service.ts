/**
 * In-memory stand-in for the review service, exposed as a fetch
 * implementation so tests exercise the real ApiClient parsing. Claim,
 * conflict, and validation semantics mirror the service.
 */

import type { FetchLike } from '../src/api.js';
import type { ReviewScorePayload, ReviewTaskData, TaskSnapshot } from '../src/types.js';

export function snapshotFixture(n: number): TaskSnapshot {
  return {
    item_id: `item-${n}`,
    task_type: 'causal',
    stem: `Q${n} which change does the figure show?`,
    options: ['a smaller lattice constant', 'a doubled peak intensity',
              'an amorphous halo', 'a shifted absorption edge'],
    answer_index: 2,
    figure_hash: 'abc123',
    caption: `Caption for task ${n}.`,
    chain_summary: 'E: field applied. S: peaks merge. Pe: intensity doubles.',
    stage: 'caption_removed',
  };
}

export interface FakeService {
  fetch: FetchLike;
  tasks: ReviewTaskData[];
  records: Array<{ task_id: string; score: ReviewScorePayload }>;
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

function error(status: number, code: string, message: string): Response {
  return json(status, { error: { code, message } });
}

export function fakeService(taskCount: number): FakeService {
  const tasks: ReviewTaskData[] = [];
  for (let n = 1; n <= taskCount; n += 1) {
    tasks.push({
      task_id: `task-${n}`,
      item_id: `item-${n}`,
      snapshot: snapshotFixture(n),
      status: 'pending',
      reviewer: null,
      order: n - 1,
      score: null,
    });
  }
  const records: FakeService['records'] = [];

  const impl: FetchLike = async (url, init) => {
    const parsed = new URL(url, 'http://fake');
    const method = init?.method ?? 'GET';

    if (method === 'GET' && parsed.pathname === '/api/tasks/next') {
      const reviewer = parsed.searchParams.get('reviewer') ?? '';
      if (!reviewer) return error(400, 'missing_reviewer', 'reviewer required');
      const done = tasks.filter((t) => t.status === 'done').length;
      const next = tasks.find((t) => t.status === 'pending') ?? null;
      if (next) {
        next.status = 'in_review';
        next.reviewer = reviewer;
      }
      return json(200, { task: next, progress: { done, total: tasks.length } });
    }

    const submitMatch = parsed.pathname.match(/^\/api\/tasks\/([^/]+)\/review$/);
    if (method === 'POST' && submitMatch) {
      const task = tasks.find((t) => t.task_id === submitMatch[1]);
      if (!task) return error(404, 'task_not_found', 'no such task');
      if (task.status === 'done') return error(409, 'task_conflict', 'already done');
      const score = JSON.parse(String(init?.body)) as ReviewScorePayload;
      const axes = [score.scientific_accuracy, score.logical_consistency,
                    score.contextual_relevance];
      if (axes.some((v) => !Number.isInteger(v) || v < 1 || v > 5)) {
        return error(400, 'invalid_score', 'axis outside [1, 5]');
      }
      if (score.verdict === 'reject' && score.note.trim() === '') {
        return error(400, 'invalid_score', 'reject requires a note');
      }
      task.status = 'done';
      task.score = score;
      records.push({ task_id: task.task_id, score });
      return json(200, task);
    }

    if (method === 'GET' && parsed.pathname === '/api/report') {
      const done = tasks.filter((t) => t.status === 'done').length;
      return json(200, { completed: done, total: tasks.length });
    }

    return error(404, 'not_found', parsed.pathname);
  };

  return { fetch: impl, tasks, records };
}
