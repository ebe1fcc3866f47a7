"""Background jobs with polling, cancellation, and monotonic progress.

Batch runs (classification, topic rounds, evaluations) must not block HTTP
workers, so they execute on a small thread pool and clients poll
GET /jobs/{id}. Progress only ever moves forward; a cancel request flips
an event the job function is expected to check between records.
"""

from __future__ import annotations

import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

from ..errors import UnknownId


@dataclass
class Job:
    id: str
    kind: str
    status: str = "queued"  # queued | running | done | failed | cancelled
    progress: float = 0.0
    result: dict | None = None
    error: str | None = None
    cancel_event: threading.Event = field(default_factory=threading.Event)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def report_progress(self, fraction: float) -> None:
        with self._lock:
            self.progress = max(self.progress, min(1.0, fraction))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "status": self.status,
            "progress": self.progress,
            "result": self.result,
            "error": self.error,
        }


JobFn = Callable[[Callable[[float], None], threading.Event], dict]


class JobManager:
    def __init__(self, workers: int = 2):
        self._pool = ThreadPoolExecutor(max_workers=workers)
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()

    def submit(self, kind: str, fn: JobFn) -> Job:
        job = Job(id=uuid.uuid4().hex[:12], kind=kind)
        with self._lock:
            self._jobs[job.id] = job

        def run() -> None:
            if job.cancel_event.is_set():
                job.status = "cancelled"
                return
            job.status = "running"
            try:
                result = fn(job.report_progress, job.cancel_event)
            except Exception as exc:  # noqa: BLE001 - surfaced to the client
                job.status = "failed"
                job.error = f"{type(exc).__name__}: {exc}"
                return
            if job.cancel_event.is_set():
                job.status = "cancelled"
                job.result = result
            else:
                job.report_progress(1.0)
                job.status = "done"
                job.result = result

        self._pool.submit(run)
        return job

    def get(self, job_id: str) -> Job:
        job = self._jobs.get(job_id)
        if job is None:
            raise UnknownId(f"no job {job_id!r}")
        return job

    def cancel(self, job_id: str) -> Job:
        job = self.get(job_id)
        job.cancel_event.set()
        if job.status == "queued":
            job.status = "cancelled"
        return job

    def shutdown(self) -> None:
        self._pool.shutdown(wait=False, cancel_futures=True)
