export interface Artifact {
  kind: string;
  path: string;
  url: string;
  caption: string;
}

export type ResponseStatus = "answered" | "clarification_needed" | "failed";

export interface AgentResponse {
  text: string;
  status: ResponseStatus;
  artifacts: Artifact[];
  code_shown: string | null;
}

export interface Turn {
  user: string;
  response: AgentResponse;
}

export interface SessionHandle {
  id: string;
  created_at: string;
  snapshot_ref: string;
  status: string;
}

export interface TopicCandidate {
  normalized: string;
  display: string;
  origin: string;
  status: string;
  first_seen: string;
  count: number;
}

export type Decision = "accept" | "reject" | `rename:${string}`;

export interface ReviewResult {
  accepted: TopicCandidate[];
  refined: TopicCandidate[];
  renames: Record<string, string>;
}

export interface JobView {
  id: string;
  kind: string;
  status: "queued" | "running" | "done" | "failed" | "cancelled";
  progress: number;
  result: Record<string, unknown> | null;
  error: string | null;
}
