import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError, getDocument, listDocuments, retrieve } from "../src/api.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("api client", () => {
  it("lists documents", async () => {
    const fetchMock = vi.fn(async () =>
      jsonResponse({ schema: "fqapi/1", documents: [{ doc_id: "a", page_width: 1,
        page_height: 1, word_count: 2 }] }));
    vi.stubGlobal("fetch", fetchMock);
    const docs = await listDocuments();
    expect(docs).toHaveLength(1);
    expect(fetchMock).toHaveBeenCalledWith("/api/documents", undefined);
  });

  it("posts retrieve requests with the query and signal", async () => {
    const fetchMock = vi.fn<(url: string, init?: RequestInit) => Promise<Response>>(
      async () => jsonResponse({
        schema: "fqapi/1", doc_id: "a", query: "total",
        prediction: null, candidates: [],
      }));
    vi.stubGlobal("fetch", fetchMock);
    const controller = new AbortController();
    await retrieve("a", "total", controller.signal, 3);
    const [url, init] = fetchMock.mock.calls[0];
    expect(url).toBe("/api/retrieve");
    expect(init?.signal).toBe(controller.signal);
    expect(JSON.parse(init?.body as string)).toEqual(
      { doc_id: "a", query: "total", top_k: 3 });
  });

  it("surfaces the service's error detail with the status", async () => {
    vi.stubGlobal("fetch", vi.fn(async () =>
      jsonResponse({ detail: "unknown document 'z'" }, 404)));
    const err = await getDocument("z").catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(404);
    expect(err.message).toBe("unknown document 'z'");
  });

  it("wraps network failures as ApiError", async () => {
    vi.stubGlobal("fetch", vi.fn(async () => {
      throw new TypeError("fetch failed");
    }));
    await expect(listDocuments()).rejects.toBeInstanceOf(ApiError);
  });

  it("lets AbortError escape untouched for the caller to swallow", async () => {
    vi.stubGlobal("fetch", vi.fn(async () => {
      throw new DOMException("aborted", "AbortError");
    }));
    const err = await retrieve("a", "q").catch((e) => e);
    expect(err).toBeInstanceOf(DOMException);
    expect(err.name).toBe("AbortError");
  });
});
