/**
 * Wire types for the review service API, mirrored field-for-field.
 */

export const AXES = [
  'scientific_accuracy',
  'logical_consistency',
  'contextual_relevance',
] as const;

export type AxisName = (typeof AXES)[number];

export const AXIS_LABELS: Record<AxisName, string> = {
  scientific_accuracy: 'Scientific accuracy',
  logical_consistency: 'Logical consistency',
  contextual_relevance: 'Contextual relevance',
};

export type Verdict = 'accept' | 'reject';

export interface TaskSnapshot {
  item_id: string;
  task_type: string;
  stem: string;
  options: string[];
  answer_index: number; // 1-based position of the correct option
  figure_hash: string;
  caption: string;
  chain_summary: string;
  stage: string;
}

export interface ReviewTaskData {
  task_id: string;
  item_id: string;
  snapshot: TaskSnapshot;
  status: string;
  reviewer: string | null;
  order: number;
  score: ReviewScorePayload | null;
}

export interface Progress {
  done: number;
  total: number;
}

export interface NextTaskResponse {
  task: ReviewTaskData | null;
  progress: Progress;
}

export interface ReviewScorePayload {
  scientific_accuracy: number;
  logical_consistency: number;
  contextual_relevance: number;
  verdict: Verdict;
  note: string;
  reviewer: string;
}

/** Axis values are null until the reviewer sets them (1-5). */
export interface ScoreDraft {
  axes: [number | null, number | null, number | null];
  verdict: Verdict | null;
  note: string;
}

export function emptyDraft(): ScoreDraft {
  return { axes: [null, null, null], verdict: null, note: '' };
}

export type DraftGate = { allowed: true } | { allowed: false; reason: string };

/** Mirror of the service-side score validation; a draft passing this gate
 *  can never fail service validation. */
export function draftGate(draft: ScoreDraft): DraftGate {
  if (draft.axes.some((axis) => axis === null)) {
    return { allowed: false, reason: 'score all three axes first' };
  }
  if (draft.verdict === null) {
    return { allowed: false, reason: 'choose accept (A) or reject (R)' };
  }
  if (draft.verdict === 'reject' && draft.note.trim() === '') {
    return { allowed: false, reason: 'reject requires a note' };
  }
  return { allowed: true };
}

export function draftToPayload(draft: ScoreDraft, reviewer: string): ReviewScorePayload {
  if (draft.axes[0] === null || draft.axes[1] === null || draft.axes[2] === null) {
    throw new Error('draft has unset axes');
  }
  if (draft.verdict === null) {
    throw new Error('draft has no verdict');
  }
  return {
    scientific_accuracy: draft.axes[0],
    logical_consistency: draft.axes[1],
    contextual_relevance: draft.axes[2],
    verdict: draft.verdict,
    note: draft.note,
    reviewer,
  };
}
