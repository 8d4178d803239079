/** Box coordinate mapping. The server normalizes pixel boxes onto a 0..1000
 * grid with round-half-up; normToPx is the exact inverse of that mapping so
 * boxes we draw line up with the original page within one pixel. */

import type { Box, CandidatePayload } from "./types.js";

export const PAGE_UNITS = 1000;

function roundHalfUp(x: number): number {
  return Math.floor(x + 0.5);
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(Math.max(v, lo), hi);
}

/** Mirror of the ingestion normalization (pixel -> 0..1000, round half-up). */
export function pxToNorm(box: Box, pageW: number, pageH: number): Box {
  const sx = PAGE_UNITS / pageW;
  const sy = PAGE_UNITS / pageH;
  return [
    clamp(roundHalfUp(box[0] * sx), 0, PAGE_UNITS),
    clamp(roundHalfUp(box[1] * sy), 0, PAGE_UNITS),
    clamp(roundHalfUp(box[2] * sx), 0, PAGE_UNITS),
    clamp(roundHalfUp(box[3] * sy), 0, PAGE_UNITS),
  ];
}

/** Inverse mapping back to page pixels (matches the server's box_px). */
export function normToPx(box: Box, pageW: number, pageH: number): Box {
  const sx = pageW / PAGE_UNITS;
  const sy = pageH / PAGE_UNITS;
  return [
    roundHalfUp(box[0] * sx),
    roundHalfUp(box[1] * sy),
    roundHalfUp(box[2] * sx),
    roundHalfUp(box[3] * sy),
  ];
}

/** Uniform scale that fits a page inside maxW x maxH. */
export function fitScale(pageW: number, pageH: number, maxW: number, maxH: number): number {
  return Math.min(maxW / pageW, maxH / pageH);
}

export type OverlayStyle = "prediction" | "runner-up";

export interface Overlay {
  box: Box; // canvas pixels, clamped to the page bounds
  style: OverlayStyle;
  label: string;
  wordIds: number[];
}

/** Canvas-space box for a page-pixel box, clamped inside the page. */
export function toCanvas(boxPx: Box, pageW: number, pageH: number, scale: number): Box {
  const w = pageW * scale;
  const h = pageH * scale;
  return [
    clamp(boxPx[0] * scale, 0, w),
    clamp(boxPx[1] * scale, 0, h),
    clamp(boxPx[2] * scale, 0, w),
    clamp(boxPx[3] * scale, 0, h),
  ];
}

/** Overlays for the ranked candidate list; index `highlight` renders as the
 * prediction, everything else as a runner-up. Scores come from the server
 * verbatim and are only formatted for the label. */
export function buildOverlays(
  candidates: CandidatePayload[],
  highlight: number,
  pageW: number,
  pageH: number,
  scale: number,
): Overlay[] {
  return candidates.map((c, i) => ({
    box: toCanvas(c.box_px, pageW, pageH, scale),
    style: i === highlight ? "prediction" : ("runner-up" as OverlayStyle),
    label: c.score.toFixed(3),
    wordIds: [...c.word_ids],
  }));
}
