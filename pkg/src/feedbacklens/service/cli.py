"""Command-line client.

Every command speaks HTTP to the same API the browser uses: against a
remote server when --server is given, otherwise against an in-process
instance of the app (no socket, same routes, same semantics). Exit codes:
0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click

from ..config import load_config
from .app import create_app
from .state import EngineState


class Api:
    def __init__(self, server: str | None, config_path: str | None):
        self.state = None
        if server:
            import httpx

            self.client = httpx.Client(base_url=server, timeout=600.0)
        else:
            from starlette.testclient import TestClient

            config = load_config(config_path) if config_path else load_config()
            self.state = EngineState(config)
            self.client = TestClient(create_app(state=self.state))

    def close(self) -> None:
        self.client.close()
        if self.state is not None:
            self.state.close()

    def call(self, method: str, path: str, **kwargs) -> dict | list:
        response = self.client.request(method, path, **kwargs)
        if response.status_code >= 400:
            try:
                detail = response.json().get("detail", response.text)
            except Exception:
                detail = response.text
            raise click.ClickException(f"{response.status_code}: {detail}")
        if response.headers.get("content-type", "").startswith("application/json"):
            return response.json()
        return {"raw": response.content}

    def wait_for_job(self, job_id: str, poll_s: float = 0.2) -> dict:
        while True:
            job = self.call("GET", f"/jobs/{job_id}")
            if job["status"] in ("done", "failed", "cancelled"):
                return job
            time.sleep(poll_s)


pass_api = click.make_pass_decorator(Api)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="Engine TOML config file.")
@click.option("--server", default=None, help="Base URL of a running server; "
              "without it the engine runs in-process.")
@click.pass_context
def main(ctx, config_path, server):
    """Feedback analytics: ingest, classify, model topics, ask questions."""
    api = Api(server, config_path)
    ctx.obj = api
    ctx.call_on_close(api.close)


def _finish_job(api: Api, job_ref: dict, echo_result=True) -> dict:
    job = api.wait_for_job(job_ref["job_id"])
    if job["status"] != "done":
        raise click.ClickException(f"job {job['id']} {job['status']}: {job.get('error')}")
    if echo_result:
        click.echo(json.dumps(job["result"], indent=2, sort_keys=True))
    return job


@main.command()
@click.argument("path", type=click.Path(exists=True))
@click.option("--format", "fmt", type=click.Choice(["jsonl", "csv"]), default="jsonl")
@pass_api
def ingest(api, path, fmt):
    """Load feedback records from a JSONL or CSV file."""
    with open(path, "rb") as fh:
        report = api.call(
            "POST", "/ingest",
            files={"file": (Path(path).name, fh)},
            data={"format": fmt},
        )
    click.echo(json.dumps(report, indent=2, sort_keys=True))
    if report["rejected"]:
        click.echo(f"warning: {report['rejected']} rows rejected", err=True)


@main.group()
def classify():
    """Classification over a configured dimension."""


@classify.command("run")
@click.option("--dimension", required=True)
@click.option("-k", type=int, default=None, help="Demonstration count.")
@pass_api
def classify_run(api, dimension, k):
    ref = api.call("POST", "/classify/run", json={"dimension": dimension, "k": k})
    _finish_job(api, ref)


@main.group()
def topics():
    """Two-round abstractive topic modeling."""


@topics.command("round1")
@pass_api
def topics_round1(api):
    ref = api.call("POST", "/topics/round1", json={})
    _finish_job(api, ref)


@topics.command("review")
@click.argument("decisions_file", type=click.Path(exists=True))
@click.option("--no-recluster", is_flag=True, default=False,
              help="Apply decisions without the cluster-and-summarize pass.")
@pass_api
def topics_review(api, decisions_file, no_recluster):
    """Apply a decision document: {"topic": "accept|reject|rename:<new>"}."""
    decisions = json.loads(Path(decisions_file).read_text())
    result = api.call(
        "POST", "/topics/review",
        json={"decisions": decisions, "recluster": not no_recluster},
    )
    click.echo(json.dumps(result, indent=2, sort_keys=True))


@topics.command("round2")
@pass_api
def topics_round2(api):
    ref = api.call("POST", "/topics/round2", json={})
    _finish_job(api, ref)


@topics.command("candidates")
@pass_api
def topics_candidates(api):
    click.echo(json.dumps(api.call("GET", "/topics/candidates"), indent=2, sort_keys=True))


@main.group(name="eval")
def eval_group():
    """Evaluation protocols."""


@eval_group.command("classify")
@click.option("--dimension", required=True)
@click.option("-k", type=int, default=None)
@click.option("--seed", type=int, default=0)
@click.option("--fold-top-n", type=int, default=None,
              help="Fold long-tail labels into top-N plus 'others'.")
@pass_api
def eval_classify(api, dimension, k, seed, fold_top_n):
    ref = api.call("POST", "/eval/classify", json={
        "dimension": dimension, "k": k, "seed": seed, "fold_top_n": fold_top_n,
    })
    _finish_job(api, ref)


@eval_group.command("topics")
@click.option("--round", "round_", type=int, default=None)
@click.option("--csv-out", type=click.Path(), default=None,
              help="Also write the per-topic metric table to this file.")
@pass_api
def eval_topics(api, round_, csv_out):
    ref = api.call("POST", "/eval/topics", json={"round": round_})
    job = _finish_job(api, ref, echo_result=False)
    result = job["result"]
    if csv_out:
        Path(csv_out).write_text(result["csv"])
    click.echo(result["csv"], nl=False)
    click.echo(json.dumps({k: v for k, v in result.items() if k != "csv"},
                          indent=2, sort_keys=True))


@main.command()
@click.argument("question")
@click.option("--session", "session_id", default=None,
              help="Reuse an existing session instead of a one-shot.")
@click.option("--one-shot/--keep-session", default=True,
              help="Close the session after answering (default).")
@pass_api
def ask(api, question, session_id, one_shot):
    """Ask a natural-language question about the ingested feedback."""
    created = False
    if session_id is None:
        handle = api.call("POST", "/sessions", json={})
        session_id = handle["id"]
        created = True
    response = api.call("POST", f"/sessions/{session_id}/ask", json={"question": question})
    click.echo(response["text"])
    for artifact in response["artifacts"]:
        click.echo(f"[{artifact['kind']}] {artifact['path']} -> {artifact['url']}")
    if response["status"] == "failed":
        raise click.ClickException("the agent could not answer the question")
    if created and one_shot:
        api.call("DELETE", f"/sessions/{session_id}")
    elif created:
        click.echo(f"session: {session_id}", err=True)


@main.command()
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.pass_context
def serve(ctx, host, port):
    """Run the HTTP server."""
    api: Api = ctx.obj
    if api.state is None:
        raise click.ClickException("serve needs a local engine, not --server")
    import uvicorn

    config = api.state.config
    app = create_app(state=api.state, frontend_dir=config.server.frontend_dir or None)
    uvicorn.run(
        app,
        host=host or config.server.host,
        port=port or config.server.port,
        log_level="info",
    )


if __name__ == "__main__":
    main()
