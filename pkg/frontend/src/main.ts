/**
 * Browser entry point: wires the session, keyboard handling, and renderer
 * together. Service base URL and reviewer id come from query parameters,
 * e.g. index.html?reviewer=alice&service=http://127.0.0.1:8100 (empty
 * service means same origin, the static server proxies /api there).
 */

import { ApiClient } from './api.js';
import { actionForKey } from './keyboard.js';
import { render } from './render.js';
import { ReviewSession } from './session.js';

function param(name: string): string {
  return new URL(window.location.href).searchParams.get(name) ?? '';
}

const root = document.getElementById('app');
if (!(root instanceof HTMLElement)) throw new Error('missing #app container');

const reviewer = param('reviewer');
if (!reviewer) {
  root.textContent = 'Add ?reviewer=<your id> to the URL to start reviewing.';
} else {
  const api = new ApiClient(param('service'));
  const session = new ReviewSession(api, reviewer);

  const noteField = (): HTMLTextAreaElement | null =>
    root.querySelector('textarea[data-field="note"]');

  const focusNote = (): void => {
    const note = noteField();
    if (note) {
      note.focus();
      note.setSelectionRange(note.value.length, note.value.length);
    }
  };

  session.subscribe((state) => {
    const hadNoteFocus = document.activeElement === noteField();
    render(state, api, root);
    noteField()?.addEventListener('input', (event) => {
      session.setNote((event.target as HTMLTextAreaElement).value);
    });
    root
      .querySelector('button[data-field="submit"]')
      ?.addEventListener('click', () => void session.submit());
    root
      .querySelector('button[data-field="retry"]')
      ?.addEventListener('click', () => void session.start());
    if (hadNoteFocus) focusNote();
  });

  window.addEventListener('keydown', (event) => {
    const inNoteField = event.target instanceof HTMLTextAreaElement;
    const action = actionForKey(event.key, inNoteField);
    if (!action) return;
    event.preventDefault();
    switch (action.type) {
      case 'digit':
        session.pressDigit(action.value);
        break;
      case 'moveFocus':
        session.moveFocus(action.delta);
        break;
      case 'verdict':
        session.setVerdict(action.value);
        // a reject needs a note, so hand focus straight to the field
        if (action.value === 'reject') focusNote();
        break;
      case 'focusNote':
        focusNote();
        break;
      case 'leaveNote':
        (event.target as HTMLElement).blur();
        break;
      case 'submit':
        if (session.state.kind === 'error') void session.start();
        else void session.submit();
        break;
    }
  });

  void session.start();
}
