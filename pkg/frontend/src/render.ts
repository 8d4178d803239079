/** Canvas and DOM rendering: a thin layer over the pure state/geometry. */

import { buildOverlays, fitScale, toCanvas } from "./geometry.js";
import type { ViewState } from "./state.js";
import type { DocumentPayload } from "./types.js";

const MAX_W = 660;
const MAX_H = 860;

export function pageScale(doc: DocumentPayload): number {
  return fitScale(doc.page_width, doc.page_height, MAX_W, MAX_H);
}

export function drawDocument(
  canvas: HTMLCanvasElement,
  state: ViewState,
  image: HTMLImageElement | null,
): void {
  const doc = state.doc;
  if (!doc) return;
  const scale = pageScale(doc);
  canvas.width = Math.round(doc.page_width * scale);
  canvas.height = Math.round(doc.page_height * scale);
  const ctx = canvas.getContext("2d");
  if (!ctx) return;

  ctx.fillStyle = "#ffffff";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  if (image) {
    ctx.drawImage(image, 0, 0, canvas.width, canvas.height);
  }

  // every word box faintly, as the wireframe (and as a guide over images)
  ctx.strokeStyle = image ? "rgba(60,100,200,0.25)" : "rgba(120,120,120,0.45)";
  ctx.lineWidth = 1;
  ctx.font = `${Math.max(8, Math.round(10 * scale * 4)) / 4}px sans-serif`;
  for (const w of doc.words) {
    const [x0, y0, x1, y1] = toCanvas(w.box_px, doc.page_width, doc.page_height, scale);
    ctx.strokeRect(x0, y0, x1 - x0, y1 - y0);
    if (!image) {
      ctx.fillStyle = "rgba(60,60,60,0.8)";
      ctx.fillText(w.text, x0 + 1, y1 - 2, Math.max(4, x1 - x0 - 2));
    }
  }

  if (state.result) {
    const overlays = buildOverlays(
      state.result.candidates, state.highlight,
      doc.page_width, doc.page_height, scale);
    for (const ov of [...overlays].reverse()) { // highlighted one last, on top
      const [x0, y0, x1, y1] = ov.box;
      if (ov.style === "prediction") {
        ctx.fillStyle = "rgba(255,200,40,0.35)";
        ctx.fillRect(x0, y0, x1 - x0, y1 - y0);
        ctx.strokeStyle = "#d97706";
        ctx.lineWidth = 2;
        ctx.setLineDash([]);
      } else {
        ctx.strokeStyle = "rgba(37,99,235,0.8)";
        ctx.lineWidth = 1;
        ctx.setLineDash([4, 3]);
      }
      ctx.strokeRect(x0, y0, x1 - x0, y1 - y0);
      ctx.setLineDash([]);
      if (ov.style === "prediction") {
        ctx.fillStyle = "#92400e";
        ctx.fillText(ov.label, x0, Math.max(10, y0 - 3));
      }
    }
  }
}

export function renderDocList(
  select: HTMLSelectElement,
  state: ViewState,
): void {
  select.innerHTML = "";
  const placeholder = document.createElement("option");
  placeholder.value = "";
  placeholder.textContent = state.docs.length
    ? "choose a document…" : "no documents on server";
  select.appendChild(placeholder);
  for (const d of state.docs) {
    const opt = document.createElement("option");
    opt.value = d.doc_id;
    opt.textContent = `${d.doc_id} (${d.word_count} words)`;
    if (state.doc && state.doc.doc_id === d.doc_id) opt.selected = true;
    select.appendChild(opt);
  }
}

export function renderCandidates(
  list: HTMLElement,
  state: ViewState,
  onSelect: (index: number) => void,
): void {
  list.innerHTML = "";
  if (!state.result) return;
  state.result.candidates.forEach((c, i) => {
    const li = document.createElement("li");
    li.className = i === state.highlight ? "candidate selected" : "candidate";
    const score = document.createElement("span");
    score.className = "score";
    score.textContent = c.score.toFixed(4);
    const text = document.createElement("span");
    text.textContent = c.text;
    li.append(score, text);
    li.addEventListener("click", () => onSelect(i));
    list.appendChild(li);
  });
}

export function renderHistory(list: HTMLElement, state: ViewState,
                              onPick: (q: string) => void): void {
  list.innerHTML = "";
  for (const q of [...state.history].reverse()) {
    const li = document.createElement("li");
    li.textContent = q;
    li.addEventListener("click", () => onPick(q));
    list.appendChild(li);
  }
}

export function renderStatus(banner: HTMLElement, spinner: HTMLElement,
                             state: ViewState): void {
  banner.textContent = state.error ?? "";
  banner.style.display = state.error ? "block" : "none";
  spinner.style.display = state.loading ? "inline-block" : "none";
}
