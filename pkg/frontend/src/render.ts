/**
 * DOM renderer. Rebuilds the app container from a SessionState snapshot;
 * every value lands in an element tagged data-field so tests (and
 * stylesheets) address fields by name instead of by position.
 */

import type { ApiClient } from './api.js';
import type { SessionState } from './session.js';
import { AXES, AXIS_LABELS, draftGate } from './types.js';

function el(
  doc: Document,
  tag: string,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElement {
  const node = doc.createElement(tag);
  for (const [name, value] of Object.entries(attrs)) node.setAttribute(name, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

export function render(state: SessionState, api: ApiClient, root: HTMLElement): void {
  const doc = root.ownerDocument;
  root.replaceChildren();

  if (state.kind === 'loading') {
    root.append(el(doc, 'p', { 'data-field': 'loading', class: 'status' }, 'Loading next task…'));
    return;
  }

  if (state.kind === 'error') {
    root.append(
      el(doc, 'p', { 'data-field': 'error', class: 'status error' }, state.message),
      el(doc, 'button', { 'data-field': 'retry' }, 'Retry (Enter)'),
    );
    return;
  }

  if (state.kind === 'complete') {
    const done = el(doc, 'section', { 'data-field': 'complete', class: 'complete' });
    done.append(
      el(doc, 'h1', {}, 'Queue complete'),
      el(
        doc,
        'p',
        { 'data-field': 'progress' },
        `${state.progress.done} / ${state.progress.total} reviewed`,
      ),
      el(doc, 'a', { 'data-field': 'report-link', href: api.reportUrl() }, 'Audit summary'),
    );
    root.append(done);
    return;
  }

  const { task, progress, draft, focusedAxis, notice, submitting } = state;
  const snapshot = task.snapshot;

  const header = el(doc, 'header', { class: 'bar' });
  header.append(
    el(doc, 'span', { 'data-field': 'progress' }, `${progress.done} / ${progress.total} reviewed`),
    el(doc, 'span', { 'data-field': 'task-type' }, snapshot.task_type),
    el(doc, 'span', { 'data-field': 'stage' }, snapshot.stage),
    el(doc, 'span', { 'data-field': 'item-id' }, snapshot.item_id),
  );

  const figure = el(doc, 'figure', { class: 'figure' });
  if (snapshot.figure_hash) {
    figure.append(
      el(doc, 'img', {
        'data-field': 'figure',
        src: api.figureUrl(snapshot.figure_hash),
        alt: 'figure under review',
      }),
    );
  }
  figure.append(el(doc, 'figcaption', { 'data-field': 'caption' }, snapshot.caption));

  const question = el(doc, 'section', { class: 'question' });
  question.append(el(doc, 'p', { 'data-field': 'stem', class: 'stem' }, snapshot.stem));
  const options = el(doc, 'ol', { 'data-field': 'options' });
  snapshot.options.forEach((option, i) => {
    const correct = i + 1 === snapshot.answer_index;
    options.append(
      el(
        doc,
        'li',
        {
          'data-option-index': String(i + 1),
          class: correct ? 'option correct' : 'option',
        },
        option,
      ),
    );
  });
  question.append(options);
  question.append(
    el(doc, 'p', { 'data-field': 'chain-summary', class: 'chain' }, snapshot.chain_summary),
  );

  const form = el(doc, 'section', { class: 'scoring' });
  const axisList = el(doc, 'ul', { 'data-field': 'axes' });
  AXES.forEach((axis, i) => {
    const row = el(doc, 'li', {
      'data-axis': axis,
      class: i === focusedAxis ? 'axis focused' : 'axis',
    });
    row.append(
      el(doc, 'span', { class: 'axis-label' }, AXIS_LABELS[axis]),
      el(doc, 'span', { 'data-field': `axis-${axis}`, class: 'axis-value' },
        draft.axes[i] === null ? '·' : String(draft.axes[i])),
    );
    axisList.append(row);
  });
  form.append(axisList);

  const verdictText =
    draft.verdict === null ? 'verdict: — (A accept / R reject)' : `verdict: ${draft.verdict}`;
  form.append(el(doc, 'p', { 'data-field': 'verdict' }, verdictText));

  const note = el(doc, 'textarea', {
    'data-field': 'note',
    placeholder: 'note (required to reject; N to focus)',
    rows: '2',
  }) as HTMLTextAreaElement;
  note.value = draft.note;
  form.append(note);

  const gate = draftGate(draft);
  const submit = el(doc, 'button', { 'data-field': 'submit' }, 'Submit (Enter)');
  if (!gate.allowed || submitting) submit.setAttribute('disabled', '');
  form.append(submit);
  if (!gate.allowed) {
    form.append(el(doc, 'p', { 'data-field': 'gate-hint', class: 'hint' }, gate.reason));
  }
  if (notice) {
    form.append(el(doc, 'p', { 'data-field': 'notice', class: 'notice' }, notice));
  }

  const main = el(doc, 'main', { class: 'task' });
  main.append(figure, question, form);
  root.append(header, main);
}
