/**
 * View state and its pure transitions. Rendering reads this; controllers
 * write it. Keeping transitions pure makes the invariants testable
 * without a browser.
 */
export const THRESHOLD_MIN = 0;
export const THRESHOLD_MAX = 1;
export const THRESHOLD_STEP = 0.01;
export function initialState(defaultThreshold = 0) {
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
export function clampThreshold(value) {
    if (Number.isNaN(value)) {
        return THRESHOLD_MIN;
    }
    return Math.min(THRESHOLD_MAX, Math.max(THRESHOLD_MIN, value));
}
/** Replace the whole view with a fresh query result. */
export function applyQueryResult(state, result) {
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
export function applyRematch(state, alignment) {
    const selected = state.selectedSegment !== null && state.selectedSegment < alignment.segments.length
        ? state.selectedSegment
        : null;
    return { ...state, alignment, selectedSegment: selected, busy: false, error: null };
}
/** Record a failure without losing the prior view. */
export function applyError(state, message) {
    return { ...state, busy: false, error: message };
}
export function selectSegment(state, index) {
    if (index === null) {
        return { ...state, selectedSegment: null };
    }
    if (!state.alignment || index < 0 || index >= state.alignment.segments.length) {
        return state;
    }
    return { ...state, selectedSegment: index };
}
export function hasAnswer(state) {
    return state.alignment !== null && state.answerSentences.length > 0;
}
export function canSubmit(state, question) {
    return question.trim().length > 0 && !state.busy;
}
/** Sentence indices (1-based) inside referenced segments. */
export function referencedSentences(alignment) {
    const out = new Set();
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
