/**
 * Round-trip against a live review service: a scripted keyboard-only
 * session works through the 5-task fixture queue, then the persisted
 * review log is checked record-for-record against what was entered.
 */

import { type ChildProcess, spawn } from 'node:child_process';
import { readFileSync } from 'node:fs';
import path from 'node:path';
import { afterAll, beforeAll, expect, it } from 'vitest';

import { ApiClient, type FetchLike } from '../src/api.js';
import { actionForKey } from '../src/keyboard.js';
import { ReviewSession, type SubmitOutcome } from '../src/session.js';
import { draftToPayload, type ReviewScorePayload } from '../src/types.js';

const FRONTEND_ROOT = path.resolve(__dirname, '..');

let server: ChildProcess;
let baseUrl = '';
let logPath = '';

beforeAll(async () => {
  server = spawn('python3', ['scripts/serve_fixture.py'], {
    cwd: FRONTEND_ROOT,
    stdio: ['ignore', 'pipe', 'inherit'],
  });
  const ready = await new Promise<string>((resolve, reject) => {
    let buffered = '';
    const timer = setTimeout(() => reject(new Error('fixture server never became ready')), 25000);
    server.stdout?.on('data', (chunk: Buffer) => {
      buffered += chunk.toString();
      const match = buffered.match(/READY (\d+) (\S+)/);
      if (match) {
        clearTimeout(timer);
        resolve(buffered);
      }
    });
    server.on('exit', (code) => reject(new Error(`fixture server exited early (${code})`)));
  });
  const match = ready.match(/READY (\d+) (\S+)/);
  if (!match) throw new Error('unparseable READY line');
  baseUrl = `http://127.0.0.1:${match[1]}`;
  logPath = match[2] as string;
  // the port is printed before uvicorn binds; poll until it accepts
  for (let attempt = 0; ; attempt += 1) {
    try {
      await fetch(`${baseUrl}/api/report`);
      break;
    } catch {
      if (attempt > 100) throw new Error('fixture server not reachable');
      await new Promise((resolve) => setTimeout(resolve, 100));
    }
  }
});

afterAll(() => {
  server?.kill();
});

/** Replays main.ts's keydown dispatch without a DOM: note focus is a flag,
 *  unmapped printable keys land in the note when it has focus. */
class KeyboardDriver {
  noteFocused = false;
  lastOutcome: SubmitOutcome | null = null;

  constructor(private readonly session: ReviewSession) {}

  async press(key: string): Promise<void> {
    const action = actionForKey(key, this.noteFocused);
    if (action === null) {
      if (this.noteFocused && key.length === 1) {
        const state = this.session.state;
        if (state.kind === 'reviewing') this.session.setNote(state.draft.note + key);
      }
      return;
    }
    switch (action.type) {
      case 'digit':
        this.session.pressDigit(action.value);
        break;
      case 'moveFocus':
        this.session.moveFocus(action.delta);
        break;
      case 'verdict':
        this.session.setVerdict(action.value);
        if (action.value === 'reject') this.noteFocused = true;
        break;
      case 'focusNote':
        this.noteFocused = true;
        break;
      case 'leaveNote':
        this.noteFocused = false;
        break;
      case 'submit':
        this.lastOutcome = await this.session.submit();
        break;
    }
  }

  async type(text: string): Promise<void> {
    for (const key of text) await this.press(key);
  }
}

it('criterion 9: keyboard-only review round-trip persists exactly the entered scores', async () => {
  let postAttempts = 0;
  const countingFetch: FetchLike = (url, init) => {
    if (init?.method === 'POST') postAttempts += 1;
    return fetch(url, init);
  };
  const api = new ApiClient(baseUrl, countingFetch);
  const session = new ReviewSession(api, 'expert-a');
  const driver = new KeyboardDriver(session);
  await session.start();

  const entered: Array<{ taskId: string; payload: ReviewScorePayload }> = [];
  const recordDraft = () => {
    const state = session.state;
    if (state.kind !== 'reviewing') throw new Error('no task on screen');
    entered.push({
      taskId: state.task.task_id,
      payload: draftToPayload(state.draft, 'expert-a'),
    });
  };

  // tasks 1 and 2: straight accepts
  for (const digits of ['545', '443']) {
    await driver.type(digits);
    await driver.press('A');
    recordDraft();
    await driver.press('Enter');
    expect(driver.lastOutcome).toBe('submitted');
  }

  // task 3: reject; first prove the client blocks reject-without-note
  await driver.type('321');
  await driver.press('R'); // focus moves into the note field
  await driver.press('Escape'); // leave it empty
  const postsBefore = postAttempts;
  await driver.press('Enter');
  expect(driver.lastOutcome).toBe('blocked');
  expect(postAttempts).toBe(postsBefore); // blocked client-side, nothing sent
  const blockedState = session.state;
  if (blockedState.kind !== 'reviewing') throw new Error('task was lost');
  expect(blockedState.notice).toBe('reject requires a note');

  await driver.press('N');
  await driver.type('option 3 contradicts the measured trend');
  await driver.press('Escape');
  recordDraft();
  await driver.press('Enter');
  expect(driver.lastOutcome).toBe('submitted');

  // tasks 4 and 5: accepts again
  for (const digits of ['555', '234']) {
    await driver.type(digits);
    await driver.press('A');
    recordDraft();
    await driver.press('Enter');
    expect(driver.lastOutcome).toBe('submitted');
  }

  expect(session.state).toEqual({ kind: 'complete', progress: { done: 5, total: 5 } });
  expect(entered).toHaveLength(5);

  // the persisted log holds exactly one review record per entered score
  const events = readFileSync(logPath, 'utf-8')
    .trim()
    .split('\n')
    .map((line) => JSON.parse(line) as { kind: string; task_id: string; score?: ReviewScorePayload });
  const reviews = events.filter((event) => event.kind === 'review');
  expect(reviews).toHaveLength(5);
  const byTask = new Map(reviews.map((event) => [event.task_id, event.score]));
  for (const { taskId, payload } of entered) {
    const persisted = byTask.get(taskId);
    expect(persisted).toBeDefined();
    expect(persisted?.scientific_accuracy).toBe(payload.scientific_accuracy);
    expect(persisted?.logical_consistency).toBe(payload.logical_consistency);
    expect(persisted?.contextual_relevance).toBe(payload.contextual_relevance);
    expect(persisted?.verdict).toBe(payload.verdict);
    expect(persisted?.note).toBe(payload.note);
    expect(persisted?.reviewer).toBe('expert-a');
  }

  // and the service agrees the audit is complete
  const report = await api.report();
  if (!report.ok) throw new Error(`report failed: ${report.message}`);
  expect(report.value['completed']).toBe(5);
  expect(report.value['accept_rate']).toBe(0.8);

  console.log('criterion 9: PASS - 5 keyboard-only reviews round-tripped; '
    + 'reject-without-note blocked before the network');
});
