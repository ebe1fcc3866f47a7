"""Application state: store, gateway, pipelines, sessions, artifacts.

This is the internal API every HTTP endpoint and CLI command goes
through, so the two surfaces cannot drift apart.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import secrets
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .. import classify as classify_mod
from ..agent import KernelClient, Session, StubExecutor
from ..agent.plugins import PluginRegistry, builtin_registry
from ..config import EngineConfig
from ..errors import EmptyPool, FeedbackLensError, IncompleteReview, UnknownDimension, UnknownId
from ..gateway import Gateway, gateway_from_config
from ..store import RecordStore
from ..topics import (
    CosineQualityScorer,
    TopicConfig,
    TopicPhrase,
    apply_review,
    build_round_one_index,
    cluster_topics,
    coherence,
    others_rate,
    review_candidates,
    run_round_one,
    run_round_two,
    summarize_cluster,
)
from .jobs import JobManager

log = logging.getLogger(__name__)


class SessionBusy(FeedbackLensError):
    pass


class ReviewRequired(FeedbackLensError):
    pass


@dataclass
class SessionEntry:
    id: str
    session: Session
    created_at: str
    status: str = "active"
    snapshot_ref: str = ""
    tokens: list[str] = field(default_factory=list)

    def handle(self) -> dict:
        return {
            "id": self.id,
            "created_at": self.created_at,
            "snapshot_ref": self.snapshot_ref,
            "status": self.status,
        }


class EngineState:
    def __init__(self, config: EngineConfig, gateway: Gateway | None = None):
        self.config = config
        config.data_dir.mkdir(parents=True, exist_ok=True)
        self.store = RecordStore(config.resolved_store_path)
        self.gateway = gateway or gateway_from_config(config.gateway)
        self.jobs = JobManager(config.server.job_workers)
        self.registry: PluginRegistry = builtin_registry(config.kernel.executor)
        self.sessions: dict[str, SessionEntry] = {}
        self.artifacts: dict[str, Path] = {}
        self._lock = threading.Lock()
        self.dimensions: dict[str, classify_mod.Dimension] = {}
        for entry in config.dimensions:
            self.declare_dimension(
                entry["name"], entry["labels"], entry.get("instruction")
            )
        self._topic_state_path = config.data_dir / "topic_state.json"
        self.topic_state: dict = self._load_topic_state()

    def close(self) -> None:
        for entry in self.sessions.values():
            if entry.status == "active":
                entry.session.close()
        self.jobs.shutdown()
        self.store.close()

    # --- dimensions -----------------------------------------------------------

    def declare_dimension(
        self, name: str, labels: list[str], instruction: str | None = None
    ) -> None:
        kwargs = {"name": name, "labels": tuple(labels)}
        if instruction:
            kwargs["instruction"] = instruction
        self.dimensions[name] = classify_mod.Dimension(**kwargs)
        self.store.declare_dimension(name, labels)

    def _dimension(self, name: str) -> classify_mod.Dimension:
        if name not in self.dimensions:
            raise UnknownDimension(f"dimension {name!r} is not configured")
        return self.dimensions[name]

    # --- ingest ------------------------------------------------------------------

    def ingest(self, data: bytes, format: str):
        return self.store.ingest(data, format)

    # --- classification ---------------------------------------------------------

    def _labeled_examples(self, dimension: str) -> list[tuple[str, str, str]]:
        key = f"gt_{dimension}"
        return [
            (r.id, r.text, r.meta[key])
            for r in self.store.query(order="timestamp")
            if key in r.meta
        ]

    def classify_run_job(self, dimension_name: str, k: int):
        dimension = self._dimension(dimension_name)

        def run(progress, cancel):
            records = self.store.query(order="timestamp")
            pool = self._labeled_examples(dimension_name)
            if k > 0 and not pool:
                raise EmptyPool(
                    f"no records carry meta.gt_{dimension_name} to demonstrate from"
                )
            index = classify_mod.build_demo_index(self.gateway, pool) if k > 0 else None
            clf = classify_mod.IclClassifier(self.gateway, index)
            counts: dict[str, int] = {}
            for i, record in enumerate(records):
                if cancel.is_set():
                    break
                result = clf.classify(record.text, dimension, k)
                self.store.annotate(record.id, dimension_name, result.label)
                counts[result.label] = counts.get(result.label, 0) + 1
                progress((i + 1) / len(records))
            return {"dimension": dimension_name, "k": k, "label_counts": counts}

        return self.jobs.submit("classify", run)

    def eval_classify_job(
        self, dimension_name: str, k: int, seed: int, fold_top_n: int | None = None
    ):
        dimension = self._dimension(dimension_name)
        examples = self._labeled_examples(dimension_name)
        if not examples:
            raise EmptyPool(f"no records carry meta.gt_{dimension_name}")

        def run(progress, cancel):
            report = classify_mod.evaluate(
                examples,
                dimension_name,
                dimension.instruction,
                self.gateway,
                k=k,
                seed=seed,
                fold_top_n=fold_top_n,
                train_fraction=self.config.classify.train_fraction,
                on_progress=progress,
                cancel_event=cancel,
            )
            return report.to_dict()

        return self.jobs.submit("eval_classify", run)

    # --- topic pipeline ------------------------------------------------------------

    def _load_topic_state(self) -> dict:
        if self._topic_state_path.exists():
            return json.loads(self._topic_state_path.read_text())
        return {"candidates": [], "refined": [], "renames": {}, "topic_map": {}}

    def _save_topic_state(self) -> None:
        self._topic_state_path.write_text(
            json.dumps(self.topic_state, indent=2, sort_keys=True)
        )

    def _topic_config(self, predefined: list[TopicPhrase] | None = None) -> TopicConfig:
        doc = self.config.topic_task
        topics_cfg = self.config.topics
        if predefined is None:
            predefined = [
                TopicPhrase.make(p, origin="predefined")
                for p in doc.get("predefined_topics", [])
            ]
        fixed = [
            (d["text"], list(d["topics"])) for d in doc.get("fixed_demos", [])
        ]
        return TopicConfig(
            task_description=doc.get(
                "task_description", TopicConfig.task_description
            ),
            topic_requirement=doc.get(
                "topic_requirement", TopicConfig.topic_requirement
            ),
            predefined_topics=predefined,
            fixed_demos=fixed,
            max_topics_per_record=topics_cfg.max_topics_per_record,
            n_extra_demos=topics_cfg.n_extra_demos,
            quality_threshold=topics_cfg.quality_threshold,
            dedupe_threshold=topics_cfg.dedupe_threshold,
            max_phrase_words=topics_cfg.max_phrase_words,
        )

    @staticmethod
    def _phrase_dict(topic: TopicPhrase) -> dict:
        return {
            "normalized": topic.normalized,
            "display": topic.display,
            "origin": topic.origin,
            "status": topic.status,
            "first_seen": topic.first_seen,
            "count": topic.count,
        }

    def topics_round_one_job(self):
        def run(progress, cancel):
            records = [
                (r.id, r.text) for r in self.store.query(order="timestamp")
            ]
            config = self._topic_config()
            done = 0

            def traced(records_iter):
                nonlocal done
                for item in records_iter:
                    if cancel.is_set():
                        return
                    yield item
                    done += 1
                    progress(done / max(len(records), 1))

            result = run_round_one(traced(records), config, self.gateway)
            for record_id, phrases in result.assignments.items():
                self.store.set_topics(record_id, phrases, 1)
            self.topic_state["candidates"] = [
                self._phrase_dict(t) for t in result.topics
            ]
            self.topic_state["refined"] = []
            self.topic_state["topic_map"] = {}
            self._save_topic_state()
            return {
                "records": len(result.assignments),
                "topics": len(result.topics),
                "errors": len(result.errors),
            }

        return self.jobs.submit("topics_round1", run)

    def topic_candidates(self) -> list[dict]:
        return list(self.topic_state.get("candidates", []))

    def apply_topic_review(self, decisions: dict[str, str], recluster: bool = True) -> dict:
        candidates = [
            TopicPhrase(**d) for d in self.topic_state.get("candidates", [])
        ]
        if not candidates:
            raise ReviewRequired("no candidate topics; run round one first")
        for topic in candidates:
            topic.status = "candidate"
        session = review_candidates(candidates)
        accepted, renames = apply_review(session, decisions)
        for old, new in renames.items():
            self.store.rename_topic(old, new)

        topic_map: dict[str, str] = dict(renames)
        if recluster and accepted:
            embeddings = self.gateway.embed([t.normalized for t in accepted])
            clusters = cluster_topics(
                accepted,
                embeddings,
                distance_threshold=self.config.topics.cluster_distance_threshold,
            )
            config = self._topic_config()
            refined = []
            for cluster in clusters:
                summary = summarize_cluster(cluster, self.gateway, config)
                refined.append(summary)
                for member in cluster.members:
                    if member.normalized != summary.normalized:
                        topic_map[member.normalized] = summary.display
        else:
            refined = accepted

        self.topic_state["refined"] = [self._phrase_dict(t) for t in refined]
        self.topic_state["candidates"] = [
            dict(self._phrase_dict(t), status="candidate") for t in refined
        ]
        self.topic_state["renames"] = dict(
            self.topic_state.get("renames", {}), **renames
        )
        self.topic_state["topic_map"] = dict(
            self.topic_state.get("topic_map", {}), **topic_map
        )
        self._save_topic_state()
        return {
            "accepted": [self._phrase_dict(t) for t in accepted],
            "refined": [self._phrase_dict(t) for t in refined],
            "renames": renames,
        }

    def topics_round_two_job(self):
        refined_dicts = self.topic_state.get("refined", [])
        if not refined_dicts:
            raise ReviewRequired("round two needs a reviewed topic list")

        def run(progress, cancel):
            refined = [
                TopicPhrase(**dict(d, status="candidate")) for d in refined_dicts
            ]
            records = [(r.id, r.text) for r in self.store.query(order="timestamp")]
            corpus = {r.id: r.text for r in self.store.query(order="timestamp")}
            round1_assignments = {
                r.id: r.annotations.topics
                for r in self.store.query(order="timestamp")
                if r.annotations.topics and r.annotations.topic_round == 1
            }
            topic_map = self.topic_state.get("topic_map", {})
            mapped_assignments = {}
            for rid, phrases in round1_assignments.items():
                mapped = []
                for phrase in phrases:
                    key = phrase.strip().lower()
                    out = topic_map.get(key, phrase)
                    if out.lower() not in [m.lower() for m in mapped]:
                        mapped.append(out)
                if mapped:
                    mapped_assignments[rid] = mapped

            scorer = CosineQualityScorer(self.gateway)
            index = build_round_one_index(
                self.gateway, corpus, mapped_assignments, scorer
            )
            config = self._topic_config(predefined=refined)

            done = 0

            def traced(records_iter):
                nonlocal done
                for item in records_iter:
                    if cancel.is_set():
                        return
                    yield item
                    done += 1
                    progress(done / max(len(records), 1))

            result = run_round_two(
                traced(records), config, self.gateway, round_one_index=index
            )
            for record_id, phrases in result.assignments.items():
                self.store.set_topics(record_id, phrases, 2)
            return {
                "records": len(result.assignments),
                "topics": len(result.topics),
                "others_rate": others_rate(result.assignments),
            }

        return self.jobs.submit("topics_round2", run)

    def eval_topics_job(self, round: int | None = None):
        def run(progress, cancel):
            records = self.store.query(order="timestamp")
            rounds = {r.annotations.topic_round for r in records if r.annotations.topics}
            use_round = round if round is not None else (max(rounds) if rounds else 1)
            assignments = {
                r.id: r.annotations.topics
                for r in records
                if r.annotations.topics and r.annotations.topic_round == use_round
            }
            corpus = {r.id: r.text for r in records}
            progress(0.5)
            scores = coherence(assignments, corpus)
            rate = others_rate(assignments)
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(["topic", "support", "coherence"])
            support: dict[str, int] = {}
            for topics in assignments.values():
                for t in topics:
                    support[t] = support.get(t, 0) + 1
            for topic in sorted(scores):
                writer.writerow([topic, support.get(topic, 0), f"{scores[topic]:.6f}"])
            writer.writerow(["__others_rate__", "", f"{rate:.6f}"])
            return {
                "round": use_round,
                "others_rate": rate,
                "topics": len(scores),
                "csv": buf.getvalue(),
            }

        return self.jobs.submit("eval_topics", run)

    # --- sessions ---------------------------------------------------------------

    def _schema_summary(self, snapshot: Path) -> str:
        with open(snapshot, encoding="utf-8") as fh:
            header = fh.readline().strip()
        columns = header.split(",")
        topics = {
            t
            for r in self.store.query(order="timestamp", limit=200)
            for t in r.annotations.topics
        }
        sample = ", ".join(sorted(topics)[:12]) or "none yet"
        return (
            f"rows: {self.store.count()}\n"
            f"columns: {', '.join(columns)}\n"
            f"known topics include: {sample}"
        )

    def create_session(self) -> SessionEntry:
        session_id = uuid.uuid4().hex[:12]
        base = self.config.data_dir / "sessions" / session_id
        workspace = base / "workspace"
        workspace.mkdir(parents=True, exist_ok=True)
        snapshot = workspace / "snapshot.csv"
        self.store.export(snapshot, format="csv", include_annotations=True)

        if self.config.kernel.executor == "kernel":
            executor = KernelClient(
                self.config.kernel.command,
                session_id,
                workspace,
                cell_timeout_s=self.config.kernel.cell_timeout_s,
            )
        else:
            executor = StubExecutor(
                session_id,
                workspace,
                cell_timeout_s=self.config.kernel.cell_timeout_s,
                workspace_quota_mb=self.config.kernel.workspace_quota_mb,
            )
        session = Session(
            session_id,
            self.gateway,
            executor,
            workspace,
            schema_summary=self._schema_summary(snapshot),
            registry=self.registry,
            max_replans=self.config.agent.max_replans,
        )
        session.start(snapshot, self.registry.manifest())
        entry = SessionEntry(
            id=session_id,
            session=session,
            created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            snapshot_ref=str(snapshot),
        )
        with self._lock:
            self.sessions[session_id] = entry
        return entry

    def _session(self, session_id: str) -> SessionEntry:
        entry = self.sessions.get(session_id)
        if entry is None or entry.status != "active":
            raise UnknownId(f"no active session {session_id!r}")
        return entry

    def ask(self, session_id: str, question: str) -> dict:
        entry = self._session(session_id)
        if not entry.session.turn_lock.acquire(blocking=False):
            raise SessionBusy(f"session {session_id} already has a turn in flight")
        entry.session.turn_lock.release()
        response = entry.session.ask(question)
        payload = response.to_dict()
        for artifact in payload["artifacts"]:
            token = secrets.token_urlsafe(16)
            self.artifacts[token] = entry.session.workspace / artifact["path"]
            entry.tokens.append(token)
            artifact["url"] = f"/artifacts/{token}"
        return payload

    def history(self, session_id: str) -> list[dict]:
        entry = self.sessions.get(session_id)
        if entry is None:
            raise UnknownId(f"no session {session_id!r}")
        return [
            {"user": question, "response": response.to_dict()}
            for question, response in entry.session.state.history
        ]

    def close_session(self, session_id: str) -> SessionEntry:
        entry = self._session(session_id)
        entry.session.close()
        entry.status = "closed"
        return entry

    def artifact_path(self, token: str) -> Path:
        path = self.artifacts.get(token)
        if path is None or not path.exists():
            raise UnknownId("no such artifact")
        return path
