/** fqapi/1 payload shapes returned by the inference service. */

export type Box = [number, number, number, number]; // x0, y0, x1, y1

export interface DocumentSummary {
  doc_id: string;
  page_width: number;
  page_height: number;
  word_count: number;
}

export interface WordPayload {
  id: number;
  text: string;
  box_norm: Box;
  box_px: Box;
}

export interface DocumentPayload {
  schema: string;
  doc_id: string;
  page_width: number;
  page_height: number;
  has_image: boolean;
  words: WordPayload[];
}

export interface CandidatePayload {
  text: string;
  score: number;
  word_ids: number[];
  box_norm: Box;
  box_px: Box;
}

export interface RetrievePayload {
  schema: string;
  doc_id: string;
  query: string;
  prediction: CandidatePayload | null;
  candidates: CandidatePayload[];
}
