import { describe, expect, it } from "vitest";

import * as st from "../src/state.js";
import type { DocumentPayload, RetrievePayload } from "../src/types.js";

const doc: DocumentPayload = {
  schema: "fqapi/1",
  doc_id: "d1",
  page_width: 850,
  page_height: 1100,
  has_image: false,
  words: [
    { id: 0, text: "Total:", box_norm: [71, 82, 130, 100], box_px: [60, 90, 110, 110] },
    { id: 1, text: "$5.00", box_norm: [176, 82, 229, 100], box_px: [150, 90, 195, 110] },
    { id: 2, text: "Date:", box_norm: [71, 140, 120, 158], box_px: [60, 154, 102, 174] },
  ],
};

const result: RetrievePayload = {
  schema: "fqapi/1",
  doc_id: "d1",
  query: "total amount",
  prediction: {
    text: "$5.00", score: 0.91, word_ids: [1],
    box_norm: [176, 82, 229, 100], box_px: [150, 90, 195, 110],
  },
  candidates: [
    { text: "$5.00", score: 0.91, word_ids: [1],
      box_norm: [176, 82, 229, 100], box_px: [150, 90, 195, 110] },
    { text: "Total: ", score: 0.22, word_ids: [0],
      box_norm: [71, 82, 130, 100], box_px: [60, 90, 110, 110] },
  ],
};

describe("query round trip", () => {
  it("highlights exactly the word ids the service returned", () => {
    let s = st.docOpened(st.initialState, doc);
    s = st.queryChanged(s, "total amount");
    s = st.submitStarted(s);
    expect(s.loading).toBe(true);
    s = st.resultReceived(s, result);
    expect(s.loading).toBe(false);
    expect(s.error).toBeNull();
    expect(st.highlightedWordIds(s)).toEqual(result.prediction!.word_ids);
    expect(s.history).toEqual(["total amount"]);
  });

  it("rejects candidates that reference unknown word ids", () => {
    let s = st.docOpened(st.initialState, doc);
    s = st.submitStarted(st.queryChanged(s, "total"));
    const bogus = {
      ...result,
      candidates: [{ ...result.candidates[0], word_ids: [99] }],
    };
    s = st.resultReceived(s, bogus);
    expect(s.error).toMatch(/unknown word ids/);
    expect(s.result).toBeNull();
  });

  it("ignores stale responses for a different document", () => {
    let s = st.docOpened(st.initialState, { ...doc, doc_id: "other" });
    s = st.submitStarted(st.queryChanged(s, "total"));
    s = st.resultReceived(s, result);
    expect(s.result).toBeNull();
  });
});

describe("validation and errors", () => {
  it("flags an empty query inline without loading", () => {
    let s = st.docOpened(st.initialState, doc);
    s = st.submitStarted(st.queryChanged(s, "   "));
    expect(s.loading).toBe(false);
    expect(s.error).toBe("enter a query");
  });

  it("requires an open document", () => {
    const s = st.submitStarted(st.queryChanged(st.initialState, "total"));
    expect(s.error).toBe("open a document first");
  });

  it("failed() raises the banner and stops loading", () => {
    const s = st.failed({ ...st.initialState, loading: true }, "service unreachable");
    expect(s.loading).toBe(false);
    expect(s.error).toBe("service unreachable");
  });
});

describe("candidate selection and history", () => {
  function withResult() {
    let s = st.docOpened(st.initialState, doc);
    s = st.submitStarted(st.queryChanged(s, "total amount"));
    return st.resultReceived(s, result);
  }

  it("clicking a runner-up highlights it instead", () => {
    let s = withResult();
    expect(st.highlightedWordIds(s)).toEqual([1]);
    s = st.candidateSelected(s, 1);
    expect(st.highlightedWordIds(s)).toEqual([0]);
    expect(s.result).toBe(withResult().result ? s.result : null); // result untouched
  });

  it("out-of-range selection is a no-op", () => {
    const s = withResult();
    expect(st.candidateSelected(s, 7)).toBe(s);
    expect(st.candidateSelected(s, -1)).toBe(s);
  });

  it("repeated queries appear once in history; new ones append", () => {
    let s = withResult();
    s = st.resultReceived(st.submitStarted(s), result);
    expect(s.history).toEqual(["total amount"]);
    s = st.resultReceived(st.submitStarted(st.queryChanged(s, "date")),
                          { ...result, query: "date" });
    expect(s.history).toEqual(["total amount", "date"]);
  });

  it("opening a document clears the previous prediction", () => {
    const s = st.docOpened(withResult(), { ...doc, doc_id: "d2" });
    expect(s.result).toBeNull();
    expect(st.highlightedWordIds(s)).toEqual([]);
  });
});
