import type {
  AgentResponse,
  Decision,
  JobView,
  ReviewResult,
  SessionHandle,
  TopicCandidate,
  Turn,
} from "./types";

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(`${status}: ${detail}`);
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const response = await fetch(path, {
    headers: { "content-type": "application/json" },
    ...init,
  });
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-json error body: keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(private base: string = "") {}

  createSession(): Promise<SessionHandle> {
    return request(`${this.base}/sessions`, { method: "POST", body: "{}" });
  }

  ask(sessionId: string, question: string): Promise<AgentResponse> {
    return request(`${this.base}/sessions/${sessionId}/ask`, {
      method: "POST",
      body: JSON.stringify({ question }),
    });
  }

  history(sessionId: string): Promise<Turn[]> {
    return request(`${this.base}/sessions/${sessionId}/history`);
  }

  candidates(): Promise<{ candidates: TopicCandidate[] }> {
    return request(`${this.base}/topics/candidates`);
  }

  submitReview(
    decisions: Record<string, Decision>,
    recluster = true,
  ): Promise<ReviewResult> {
    return request(`${this.base}/topics/review`, {
      method: "POST",
      body: JSON.stringify({ decisions, recluster }),
    });
  }

  startRoundOne(): Promise<{ job_id: string }> {
    return request(`${this.base}/topics/round1`, { method: "POST", body: "{}" });
  }

  startRoundTwo(): Promise<{ job_id: string }> {
    return request(`${this.base}/topics/round2`, { method: "POST", body: "{}" });
  }

  job(jobId: string): Promise<JobView> {
    return request(`${this.base}/jobs/${jobId}`);
  }

  artifactUrl(url: string): string {
    return url.startsWith("http") ? url : `${this.base}${url}`;
  }
}
