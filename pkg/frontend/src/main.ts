/** Wiring: DOM events -> api calls -> state transitions -> render. One
 * retrieve request is in flight at a time; a newer submission aborts the
 * pending one. */

import { ApiError, getDocument, imageUrl, listDocuments, retrieve } from "./api.js";
import {
  drawDocument, renderCandidates, renderDocList, renderHistory, renderStatus,
} from "./render.js";
import * as st from "./state.js";

let state = st.initialState;
let pageImage: HTMLImageElement | null = null;
let inflight: AbortController | null = null;

const $ = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;
const canvas = () => $<HTMLCanvasElement>("page");
const docSelect = () => $<HTMLSelectElement>("doc-select");
const queryInput = () => $<HTMLInputElement>("query");

function render(): void {
  renderStatus($("error-banner"), $("spinner"), state);
  renderDocList(docSelect(), state);
  renderCandidates($("candidates"), state, (i) => {
    state = st.candidateSelected(state, i);
    render();
  });
  renderHistory($("history"), state, (q) => {
    state = st.queryChanged(state, q);
    queryInput().value = q;
    void submit();
  });
  drawDocument(canvas(), state, pageImage);
}

async function refreshDocuments(): Promise<void> {
  try {
    state = st.docsLoaded(state, await listDocuments());
  } catch (err) {
    state = st.failed(state, err instanceof ApiError ? err.message : String(err));
  }
  render();
}

async function openDocument(docId: string): Promise<void> {
  if (!docId) return;
  try {
    const doc = await getDocument(docId);
    pageImage = null;
    if (doc.has_image) {
      pageImage = await loadImage(imageUrl(docId)).catch(() => null);
    }
    state = st.docOpened(state, doc);
  } catch (err) {
    state = st.failed(state, err instanceof ApiError ? err.message : String(err));
  }
  render();
}

function loadImage(url: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => reject(new Error(`image failed: ${url}`));
    img.src = url;
  });
}

async function submit(): Promise<void> {
  state = st.queryChanged(state, queryInput().value);
  state = st.submitStarted(state);
  render();
  if (!state.loading || state.doc === null) return;

  inflight?.abort();
  const controller = new AbortController();
  inflight = controller;
  try {
    const payload = await retrieve(state.doc.doc_id, state.query, controller.signal);
    if (controller !== inflight) return; // a newer submission superseded us
    state = st.resultReceived(state, payload);
  } catch (err) {
    if (err instanceof DOMException && err.name === "AbortError") return;
    state = st.failed(state, err instanceof ApiError ? err.message : String(err));
  } finally {
    if (controller === inflight) inflight = null;
  }
  render();
}

export function start(): void {
  docSelect().addEventListener("change", () => void openDocument(docSelect().value));
  $("ask").addEventListener("click", () => void submit());
  queryInput().addEventListener("keydown", (ev) => {
    if ((ev as KeyboardEvent).key === "Enter") void submit();
  });
  $("reload").addEventListener("click", () => void refreshDocuments());
  void refreshDocuments();
}

start();
