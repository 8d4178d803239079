import { describe, expect, it } from "vitest";

import {
  buildOverlays, fitScale, normToPx, pxToNorm, toCanvas,
} from "../src/geometry.js";
import type { Box, CandidatePayload } from "../src/types.js";

function randInt(lo: number, hi: number): number {
  return lo + Math.floor(Math.random() * (hi - lo));
}

describe("normToPx inverts normalization", () => {
  it("round-trips random pixel boxes within one pixel", () => {
    for (let trial = 0; trial < 500; trial++) {
      const pageW = randInt(600, 3000);
      const pageH = randInt(600, 3000);
      const x0 = randInt(0, pageW - 10);
      const y0 = randInt(0, pageH - 10);
      const box: Box = [x0, y0, randInt(x0, pageW), randInt(y0, pageH)];
      const back = normToPx(pxToNorm(box, pageW, pageH), pageW, pageH);
      for (let i = 0; i < 4; i++) {
        expect(Math.abs(back[i] - box[i])).toBeLessThanOrEqual(1);
      }
    }
  });

  it("matches the server's published mapping on a known case", () => {
    // page 612x792: [306,396,612,792] normalizes to [500,500,1000,1000]
    expect(pxToNorm([306, 396, 612, 792], 612, 792)).toEqual([500, 500, 1000, 1000]);
    expect(normToPx([500, 500, 1000, 1000], 612, 792)).toEqual([306, 396, 612, 792]);
  });
});

describe("canvas mapping", () => {
  it("fits the page inside the viewport", () => {
    const s = fitScale(850, 1100, 660, 860);
    expect(850 * s).toBeLessThanOrEqual(660);
    expect(1100 * s).toBeLessThanOrEqual(860);
  });

  it("clamps overlay boxes to the page bounds", () => {
    const s = 0.5;
    const clamped = toCanvas([-40, -10, 2000, 3000], 850, 1100, s);
    expect(clamped[0]).toBeGreaterThanOrEqual(0);
    expect(clamped[1]).toBeGreaterThanOrEqual(0);
    expect(clamped[2]).toBeLessThanOrEqual(850 * s);
    expect(clamped[3]).toBeLessThanOrEqual(1100 * s);
  });
});

describe("buildOverlays", () => {
  const cand = (ids: number[], score: number): CandidatePayload => ({
    text: "x", score, word_ids: ids,
    box_norm: [0, 0, 100, 20], box_px: [0, 0, 85, 22],
  });

  it("styles the highlighted candidate as the prediction", () => {
    const ovs = buildOverlays([cand([1], 0.9), cand([2], 0.4)], 0, 850, 1100, 0.5);
    expect(ovs[0].style).toBe("prediction");
    expect(ovs[1].style).toBe("runner-up");
    const switched = buildOverlays([cand([1], 0.9), cand([2], 0.4)], 1, 850, 1100, 0.5);
    expect(switched[0].style).toBe("runner-up");
    expect(switched[1].style).toBe("prediction");
  });

  it("labels overlays with the server score verbatim", () => {
    const ovs = buildOverlays([cand([3], 0.73125)], 0, 850, 1100, 1);
    expect(ovs[0].label).toBe("0.731");
    expect(ovs[0].wordIds).toEqual([3]);
  });
});
