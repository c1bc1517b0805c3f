// Payload shapes of the annotation service API. The server never sends
// model identities; candidates are only ever the anonymous A/B sides.

export type Mode = "generation-arena" | "preference-validation";

export interface GenerationPayload {
  question_ga: string;
  answer_ga: string;
}

export interface PreferencePayload {
  response_ga: string;
}

export type CandidatePayload = GenerationPayload | PreferencePayload;

export interface ComparisonView {
  done: false;
  key: string;
  mode: Mode;
  question: string;
  seed_text: string;
  a: CandidatePayload;
  b: CandidatePayload;
}

export interface DoneView {
  done: true;
  answered: number;
  skipped: number;
  total: number;
}

export type NextResponse = ComparisonView | DoneView;

export interface Progress {
  answered: number;
  skipped: number;
  total: number;
}

export type Choice = "A" | "B";
