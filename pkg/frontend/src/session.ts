/**
 * Client-side review session: one active task, a score draft, and the
 * submit gate.
 *
 * The draft must satisfy the same rules the service enforces (all three
 * axes set, reject only with a note), so a submit this class allows can
 * never be rejected by service-side validation. Network failures keep
 * the draft and surface a retry notice; a conflict response means some
 * other session finished the task first, so it is skipped.
 */

import type { ApiClient } from './api.js';
import type { DraftGate, Progress, ReviewTaskData, ScoreDraft, Verdict } from './types.js';
import { draftGate, draftToPayload, emptyDraft } from './types.js';

export type SubmitOutcome = 'submitted' | 'blocked' | 'skipped' | 'failed';

export type SubmitGate = DraftGate;

export type SessionState =
  | { kind: 'loading' }
  | {
      kind: 'reviewing';
      task: ReviewTaskData;
      progress: Progress;
      draft: ScoreDraft;
      focusedAxis: number;
      notice: string | null;
      submitting: boolean;
    }
  | { kind: 'complete'; progress: Progress }
  | { kind: 'error'; message: string };

export class ReviewSession {
  private phase: 'loading' | 'reviewing' | 'complete' | 'error' = 'loading';
  private task: ReviewTaskData | null = null;
  private progress: Progress = { done: 0, total: 0 };
  private draft: ScoreDraft = emptyDraft();
  private focusedAxis = 0;
  private notice: string | null = null;
  private submitting = false;
  private errorMessage = '';
  private listeners: Array<(state: SessionState) => void> = [];

  constructor(
    readonly api: ApiClient,
    readonly reviewer: string,
  ) {}

  subscribe(listener: (state: SessionState) => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    const state = this.state;
    for (const listener of this.listeners) listener(state);
  }

  get state(): SessionState {
    switch (this.phase) {
      case 'loading':
        return { kind: 'loading' };
      case 'complete':
        return { kind: 'complete', progress: this.progress };
      case 'error':
        return { kind: 'error', message: this.errorMessage };
      case 'reviewing':
        return {
          kind: 'reviewing',
          task: this.task as ReviewTaskData,
          progress: this.progress,
          draft: {
            axes: [...this.draft.axes] as ScoreDraft['axes'],
            verdict: this.draft.verdict,
            note: this.draft.note,
          },
          focusedAxis: this.focusedAxis,
          notice: this.notice,
          submitting: this.submitting,
        };
    }
  }

  async start(): Promise<void> {
    await this.loadNext();
  }

  private async loadNext(): Promise<void> {
    this.phase = 'loading';
    this.emit();
    const result = await this.api.nextTask(this.reviewer);
    if (!result.ok) {
      this.phase = 'error';
      this.errorMessage = `could not load the next task (${result.code}): ${result.message}`;
      this.emit();
      return;
    }
    this.progress = result.value.progress;
    if (result.value.task === null) {
      this.phase = 'complete';
      this.task = null;
    } else {
      this.phase = 'reviewing';
      this.task = result.value.task;
      this.draft = emptyDraft();
      this.focusedAxis = 0;
      this.notice = null;
    }
    this.emit();
  }

  // -- draft editing; all no-ops unless a task is on screen ----------------

  setAxis(index: number, value: number): void {
    if (this.phase !== 'reviewing' || index < 0 || index > 2) return;
    if (!Number.isInteger(value) || value < 1 || value > 5) return;
    this.draft.axes[index] = value;
    this.emit();
  }

  /** Digit keys score the focused axis, then focus moves to the next one. */
  pressDigit(value: number): void {
    if (this.phase !== 'reviewing') return;
    if (!Number.isInteger(value) || value < 1 || value > 5) return;
    this.draft.axes[this.focusedAxis] = value;
    if (this.focusedAxis < 2) this.focusedAxis += 1;
    this.emit();
  }

  moveFocus(delta: number): void {
    if (this.phase !== 'reviewing') return;
    this.focusedAxis = Math.min(2, Math.max(0, this.focusedAxis + delta));
    this.emit();
  }

  setVerdict(verdict: Verdict): void {
    if (this.phase !== 'reviewing') return;
    this.draft.verdict = verdict;
    this.emit();
  }

  setNote(text: string): void {
    if (this.phase !== 'reviewing') return;
    this.draft.note = text;
    this.emit();
  }

  canSubmit(): SubmitGate {
    if (this.phase !== 'reviewing') return { allowed: false, reason: 'no task on screen' };
    if (this.submitting) return { allowed: false, reason: 'submit in progress' };
    return draftGate(this.draft);
  }

  /**
   * Post the draft. Blocked drafts never reach the network; a network
   * failure keeps the draft so Enter retries it, and a conflict (someone
   * else finished the task) skips forward. Retrying a submit whose
   * response was lost hits the conflict path, so the service ends up
   * with exactly one record either way.
   */
  async submit(): Promise<SubmitOutcome> {
    const gate = this.canSubmit();
    if (!gate.allowed) {
      if (this.phase === 'reviewing') {
        this.notice = gate.reason;
        this.emit();
      }
      return 'blocked';
    }
    const task = this.task as ReviewTaskData;
    const payload = draftToPayload(this.draft, this.reviewer);
    this.submitting = true;
    this.notice = null;
    this.emit();
    const result = await this.api.submitReview(task.task_id, payload);
    this.submitting = false;
    if (result.ok) {
      await this.loadNext();
      return 'submitted';
    }
    if (result.code === 'task_conflict') {
      await this.loadNext();
      if (this.phase === 'reviewing' || this.phase === 'complete') {
        this.notice = 'task was already reviewed elsewhere; skipped';
      }
      this.emit();
      return 'skipped';
    }
    if (result.code === 'network') {
      this.notice = 'submit failed to reach the service; draft kept, press Enter to retry';
      this.emit();
      return 'failed';
    }
    this.notice = `service rejected the score (${result.code}): ${result.message}`;
    this.emit();
    return 'failed';
  }
}
