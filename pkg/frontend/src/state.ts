/**
 * View state and its pure transitions. Rendering reads this; controllers
 * write it. Keeping transitions pure makes the invariants testable
 * without a browser.
 */

import type { AlignmentPayload, QueryResponse, RankedEntry } from "./api.js";

export const THRESHOLD_MIN = 0;
export const THRESHOLD_MAX = 1;
export const THRESHOLD_STEP = 0.01;

export interface ViewState {
  question: string;
  answerSentences: string[];
  alignment: AlignmentPayload | null;
  reranked: RankedEntry[];
  retrieved: RankedEntry[];
  chunkBodies: Record<string, string>;
  selectedSegment: number | null;
  threshold: number;
  busy: boolean;
  error: string | null;
}

export function initialState(defaultThreshold = 0): ViewState {
  return {
    question: "",
    answerSentences: [],
    alignment: null,
    reranked: [],
    retrieved: [],
    chunkBodies: {},
    selectedSegment: null,
    threshold: clampThreshold(defaultThreshold),
    busy: false,
    error: null,
  };
}

export function clampThreshold(value: number): number {
  if (Number.isNaN(value)) {
    return THRESHOLD_MIN;
  }
  return Math.min(THRESHOLD_MAX, Math.max(THRESHOLD_MIN, value));
}

/** Replace the whole view with a fresh query result. */
export function applyQueryResult(state: ViewState, result: QueryResponse): ViewState {
  return {
    ...state,
    question: result.question,
    answerSentences: result.answer_sentences,
    alignment: result.alignment,
    reranked: result.reranked,
    retrieved: result.retrieved,
    chunkBodies: result.chunk_bodies,
    selectedSegment: null,
    threshold: clampThreshold(result.alignment.threshold),
    busy: false,
    error: null,
  };
}

/** Swap in a re-matched alignment; the answer text never changes here. */
export function applyRematch(state: ViewState, alignment: AlignmentPayload): ViewState {
  const selected =
    state.selectedSegment !== null && state.selectedSegment < alignment.segments.length
      ? state.selectedSegment
      : null;
  return { ...state, alignment, selectedSegment: selected, busy: false, error: null };
}

/** Record a failure without losing the prior view. */
export function applyError(state: ViewState, message: string): ViewState {
  return { ...state, busy: false, error: message };
}

export function selectSegment(state: ViewState, index: number | null): ViewState {
  if (index === null) {
    return { ...state, selectedSegment: null };
  }
  if (!state.alignment || index < 0 || index >= state.alignment.segments.length) {
    return state;
  }
  return { ...state, selectedSegment: index };
}

export function hasAnswer(state: ViewState): boolean {
  return state.alignment !== null && state.answerSentences.length > 0;
}

export function canSubmit(state: ViewState, question: string): boolean {
  return question.trim().length > 0 && !state.busy;
}

/** Sentence indices (1-based) inside referenced segments. */
export function referencedSentences(alignment: AlignmentPayload): Set<number> {
  const out = new Set<number>();
  for (const segment of alignment.segments) {
    if (!segment.referenced) {
      continue;
    }
    for (let index = segment.start; index <= segment.end; index += 1) {
      out.add(index);
    }
  }
  return out;
}
