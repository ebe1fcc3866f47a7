import type { ApiClient } from "./api";
import type { JobView } from "./types";

const TERMINAL = new Set(["done", "failed", "cancelled"]);

export async function pollJob(
  api: ApiClient,
  jobId: string,
  onProgress?: (job: JobView) => void,
  intervalMs = 500,
): Promise<JobView> {
  for (;;) {
    const job = await api.job(jobId);
    if (onProgress) onProgress(job);
    if (TERMINAL.has(job.status)) return job;
    await new Promise((resolve) => setTimeout(resolve, intervalMs));
  }
}
