/** View state and its transitions, kept pure so they are testable headless.
 * Every displayed score is a server value verbatim; no inference happens
 * here. Highlighted word ids are validated against the open document. */

import type { DocumentPayload, DocumentSummary, RetrievePayload } from "./types.js";

export interface ViewState {
  docs: DocumentSummary[];
  doc: DocumentPayload | null;
  query: string;
  loading: boolean;
  error: string | null;
  result: RetrievePayload | null;
  highlight: number; // index into result.candidates
  history: string[];
}

export const initialState: ViewState = {
  docs: [],
  doc: null,
  query: "",
  loading: false,
  error: null,
  result: null,
  highlight: 0,
  history: [],
};

export function docsLoaded(s: ViewState, docs: DocumentSummary[]): ViewState {
  return { ...s, docs, error: null };
}

export function docOpened(s: ViewState, doc: DocumentPayload): ViewState {
  return { ...s, doc, result: null, highlight: 0, error: null, loading: false };
}

export function queryChanged(s: ViewState, query: string): ViewState {
  return { ...s, query };
}

/** Empty queries never reach the service; they surface inline validation. */
export function submitStarted(s: ViewState): ViewState {
  if (s.doc === null) {
    return { ...s, error: "open a document first", loading: false };
  }
  if (s.query.trim() === "") {
    return { ...s, error: "enter a query", loading: false };
  }
  return { ...s, loading: true, error: null };
}

export function resultReceived(s: ViewState, payload: RetrievePayload): ViewState {
  if (s.doc === null || payload.doc_id !== s.doc.doc_id) {
    return { ...s, loading: false }; // stale response for another document
  }
  const known = new Set(s.doc.words.map((w) => w.id));
  for (const cand of payload.candidates) {
    if (!cand.word_ids.every((id) => known.has(id))) {
      return failed(s, `service returned unknown word ids for ${payload.doc_id}`);
    }
  }
  const history = s.history.includes(payload.query)
    ? s.history
    : [...s.history, payload.query];
  return { ...s, loading: false, error: null, result: payload, highlight: 0, history };
}

export function candidateSelected(s: ViewState, index: number): ViewState {
  if (s.result === null || index < 0 || index >= s.result.candidates.length) {
    return s;
  }
  return { ...s, highlight: index };
}

export function failed(s: ViewState, message: string): ViewState {
  return { ...s, loading: false, error: message };
}

/** Word ids the canvas should highlight right now. */
export function highlightedWordIds(s: ViewState): number[] {
  if (s.result === null || s.result.candidates.length === 0) return [];
  return [...s.result.candidates[s.highlight].word_ids];
}
