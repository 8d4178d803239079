/** Thin typed client for the inference service. */

import type { DocumentPayload, DocumentSummary, RetrievePayload } from "./types.js";

export class ApiError extends Error {
  constructor(message: string, readonly status?: number) {
    super(message);
    this.name = "ApiError";
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  let res: Response;
  try {
    res = await fetch(path, init);
  } catch (err) {
    if (err instanceof DOMException && err.name === "AbortError") throw err;
    throw new ApiError(`service unreachable: ${String(err)}`);
  }
  if (!res.ok) {
    let detail = `${res.status} ${res.statusText}`;
    try {
      const body = (await res.json()) as { detail?: string; error?: string };
      detail = body.detail ?? body.error ?? detail;
    } catch {
      // non-JSON error body; keep the status line
    }
    throw new ApiError(detail, res.status);
  }
  return (await res.json()) as T;
}

export async function listDocuments(base = ""): Promise<DocumentSummary[]> {
  const body = await request<{ documents: DocumentSummary[] }>(`${base}/api/documents`);
  return body.documents;
}

export function getDocument(docId: string, base = ""): Promise<DocumentPayload> {
  return request<DocumentPayload>(`${base}/api/documents/${encodeURIComponent(docId)}`);
}

export function imageUrl(docId: string, base = ""): string {
  return `${base}/api/documents/${encodeURIComponent(docId)}/image`;
}

export function retrieve(
  docId: string,
  query: string,
  signal?: AbortSignal,
  topK = 5,
  base = "",
): Promise<RetrievePayload> {
  return request<RetrievePayload>(`${base}/api/retrieve`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ doc_id: docId, query, top_k: topK }),
    signal,
  });
}
