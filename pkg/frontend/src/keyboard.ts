/**
 * Key-to-action mapping for keyboard-only review.
 *
 * Digits 1-5 score the focused axis, arrows (or j/k) move between axes,
 * A accepts, R rejects, N jumps to the note field, Enter submits. While
 * the note field has focus only Enter and Escape act (they hand focus
 * back); everything else is note text.
 */

import type { Verdict } from './types.js';

export type KeyAction =
  | { type: 'digit'; value: number }
  | { type: 'moveFocus'; delta: number }
  | { type: 'verdict'; value: Verdict }
  | { type: 'focusNote' }
  | { type: 'leaveNote' }
  | { type: 'submit' };

export function actionForKey(key: string, inNoteField: boolean): KeyAction | null {
  if (inNoteField) {
    if (key === 'Enter' || key === 'Escape') return { type: 'leaveNote' };
    return null;
  }
  if (key >= '1' && key <= '5' && key.length === 1) {
    return { type: 'digit', value: Number(key) };
  }
  switch (key) {
    case 'ArrowUp':
    case 'k':
    case 'K':
      return { type: 'moveFocus', delta: -1 };
    case 'ArrowDown':
    case 'j':
    case 'J':
      return { type: 'moveFocus', delta: 1 };
    case 'a':
    case 'A':
      return { type: 'verdict', value: 'accept' };
    case 'r':
    case 'R':
      return { type: 'verdict', value: 'reject' };
    case 'n':
    case 'N':
      return { type: 'focusNote' };
    case 'Enter':
      return { type: 'submit' };
    default:
      return null;
  }
}
