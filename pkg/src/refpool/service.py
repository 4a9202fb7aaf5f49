"""HTTP job service wrapping the pipeline stages.

Each job owns one directory under the data dir.  A stage runs in a
scratch subdirectory that is renamed to `artifacts/` in one atomic step,
so a crash can interrupt a run but never publish half a result.  Jobs
are identified by a digest of their kind and parameters: resubmitting
the same work returns the existing job instead of running it again.

Jobs chain by copying the upstream job's artifacts into their own
directory first, which keeps every finished job self-contained.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import queue
import shutil
import threading
import time
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse
from pydantic import BaseModel

from . import pipeline as pl
from .corpus import AVAILABLE, JOURNAL
from .scorer import ScorerConfig

HOST_ENV = "REFPOOL_HOST"
PORT_ENV = "REFPOOL_PORT"
DATA_DIR_ENV = "REFPOOL_DATA_DIR"

KINDS = ("harvest", "score", "calibrate", "analyze")
_UPSTREAM_KEY = {"score": "harvest_job", "calibrate": "score_job", "analyze": "calibrate_job"}


class JobRequest(BaseModel):
    kind: str
    params: dict = {}


def job_digest(kind: str, params: dict) -> str:
    blob = json.dumps({"kind": kind, "params": params}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class JobStore:
    """File-backed job state with atomic writes."""

    def __init__(self, data_dir: Path):
        self.root = data_dir / "jobs"
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def job_dir(self, job_id: str) -> Path:
        return self.root / job_id

    def artifacts_dir(self, job_id: str) -> Path:
        return self.job_dir(job_id) / "artifacts"

    def load(self, job_id: str) -> dict | None:
        path = self.job_dir(job_id) / "state.json"
        if not path.exists():
            return None
        return json.loads(path.read_text())

    def save(self, state: dict) -> None:
        path = self.job_dir(state["job_id"]) / "state.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(state, indent=2, sort_keys=True))
        tmp.replace(path)

    def create(self, kind: str, params: dict, total: int) -> tuple[dict, bool]:
        """Persist a new queued job, or return the existing one."""
        job_id = job_digest(kind, params)
        with self._lock:
            existing = self.load(job_id)
            if existing is not None:
                return existing, False
            self.job_dir(job_id).mkdir(parents=True, exist_ok=True)
            state = {
                "job_id": job_id,
                "kind": kind,
                "params": params,
                "state": "queued",
                "progress": {"completed": 0, "total": total},
                "created_at": time.time(),
                "finished_at": None,
                "artifacts": [],
                "error": None,
            }
            self.save(state)
            return state, True

    def list_artifacts(self, job_id: str) -> list[str]:
        base = self.artifacts_dir(job_id)
        if not base.is_dir():
            return []
        names = []
        for path in base.rglob("*"):
            if path.is_file():
                rel = path.relative_to(base).as_posix()
                # The document store is working data carried between
                # stages, not a deliverable.
                if not rel.startswith("corpus/"):
                    names.append(rel)
        return sorted(names)

    def finished(self, kind: str) -> list[dict]:
        """Done jobs of one kind, most recently finished first."""
        states = []
        for path in self.root.iterdir():
            state = self.load(path.name)
            if state and state["kind"] == kind and state["state"] == "done":
                states.append(state)
        states.sort(key=lambda s: s["finished_at"] or 0.0, reverse=True)
        return states


def _run_job(store: JobStore, state: dict) -> None:
    job_id = state["job_id"]
    kind = state["kind"]
    params = state["params"]
    job_dir = store.job_dir(job_id)
    work = job_dir / f"work-{os.getpid()}"
    if work.exists():
        shutil.rmtree(work)
    work.mkdir()

    upstream_key = _UPSTREAM_KEY.get(kind)
    if upstream_key:
        upstream = store.artifacts_dir(params[upstream_key])
        shutil.copytree(upstream, work, dirs_exist_ok=True)

    if kind == "harvest":
        pl.run_harvest(
            params["sheet"],
            params["uoa"],
            work,
            drop_in=params.get("drop_in"),
        )
    elif kind == "score":
        config = ScorerConfig(
            temperature=params.get("temperature", 0.2),
            samples_per_paper=params.get("samples", 5),
            model_id=params.get("model_id", "mock-scorer"),
        )
        backend = pl.make_backend(
            params.get("backend", "mock"),
            seed=params.get("seed", 0),
            base_url=params.get("base_url", ""),
        )
        result = pl.run_score(
            work,
            config,
            backend,
            backend_kind=params.get("backend", "mock"),
            seed=params.get("seed", 0),
            anonymize_export=params.get("anonymize", True),
        )
        if result.partial:
            state["error"] = f"{len(result.failed)} paper(s) failed scoring"
    elif kind == "calibrate":
        pl.run_calibrate(work, min_availability=params.get("min_availability", 0.9))
    elif kind == "analyze":
        pl.run_analyze(work, epsilon=params.get("epsilon", 2.0))

    # Atomic publish: artifacts appear all at once, before state=done.
    artifacts = store.artifacts_dir(job_id)
    if artifacts.exists():
        shutil.rmtree(artifacts)
    work.rename(artifacts)


class Worker:
    """Single background thread; jobs run strictly one at a time."""

    def __init__(self, store: JobStore):
        self.store = store
        self.queue: queue.Queue[str | None] = queue.Queue()
        self.thread: threading.Thread | None = None

    def start(self) -> None:
        self.recover()
        self.thread = threading.Thread(target=self._loop, daemon=True)
        self.thread.start()

    def stop(self) -> None:
        if self.thread:
            self.queue.put(None)
            self.thread.join(timeout=30)

    def submit(self, job_id: str) -> None:
        self.queue.put(job_id)

    def recover(self) -> None:
        """Re-queue interrupted work found on disk at startup.

        A job stuck in `running` either published its artifacts (the
        rename happened, only the state write was lost) or it did not;
        the artifacts directory decides which.
        """
        for path in sorted(self.store.root.iterdir()):
            state = self.store.load(path.name)
            if state is None:
                continue
            if state["state"] == "running":
                if self.store.artifacts_dir(state["job_id"]).is_dir():
                    self._finish(state)
                else:
                    state["state"] = "queued"
                    self.store.save(state)
            if state["state"] == "queued":
                self.submit(state["job_id"])

    def _finish(self, state: dict) -> None:
        state["state"] = "done"
        state["finished_at"] = time.time()
        state["artifacts"] = self.store.list_artifacts(state["job_id"])
        state["progress"]["completed"] = state["progress"]["total"]
        self.store.save(state)

    def _loop(self) -> None:
        while True:
            job_id = self.queue.get()
            if job_id is None:
                return
            state = self.store.load(job_id)
            if state is None or state["state"] not in ("queued",):
                continue
            state["state"] = "running"
            self.store.save(state)
            try:
                _run_job(self.store, state)
            except Exception as exc:  # noqa: BLE001 - job must record any failure
                state["state"] = "failed"
                state["finished_at"] = time.time()
                state["error"] = f"{type(exc).__name__}: {exc}"
                self.store.save(state)
            else:
                self._finish(state)


def _validate(store: JobStore, kind: str, params: dict) -> int:
    """Check a submission and return its progress total in work units."""
    if kind not in KINDS:
        raise HTTPException(422, detail={"field": "kind", "error": f"unknown kind {kind!r}"})
    upstream_key = _UPSTREAM_KEY.get(kind)
    if kind == "harvest":
        sheet = params.get("sheet", "")
        if not sheet or not Path(sheet).is_file():
            raise HTTPException(
                422, detail={"field": "sheet", "error": f"results sheet not found: {sheet!r}"}
            )
        if not params.get("uoa"):
            raise HTTPException(422, detail={"field": "uoa", "error": "uoa is required"})
        return 1
    upstream_id = params.get(upstream_key, "")
    upstream = store.load(upstream_id) if upstream_id else None
    if upstream is None:
        raise HTTPException(
            422, detail={"field": upstream_key, "error": f"unknown job {upstream_id!r}"}
        )
    if upstream["state"] != "done":
        raise HTTPException(
            422,
            detail={
                "field": upstream_key,
                "error": f"job {upstream_id} is {upstream['state']}, not done",
            },
        )
    if kind == "score":
        manifest = store.artifacts_dir(upstream_id) / pl.MANIFEST
        available = 0
        with open(manifest, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                if row["availability"] == AVAILABLE and row["output_kind"] == JOURNAL:
                    available += 1
        if available == 0:
            raise HTTPException(
                422,
                detail={"field": upstream_key, "error": "no available documents to score"},
            )
        return available
    return 1


def _job_payload(state: dict) -> dict:
    return {
        "job_id": state["job_id"],
        "kind": state["kind"],
        "state": state["state"],
        "progress": state["progress"],
        "created_at": state["created_at"],
        "finished_at": state["finished_at"],
        "artifacts": state["artifacts"],
        "error": state["error"],
    }


def create_app(data_dir: str | Path | None = None) -> FastAPI:
    root = Path(data_dir or os.environ.get(DATA_DIR_ENV, "refpool-data"))
    store = JobStore(root)
    worker = Worker(store)

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        worker.start()
        yield
        worker.stop()

    app = FastAPI(title="refpool service", lifespan=lifespan)
    # The dashboard is served as static files from whatever port is handy,
    # so browser calls arrive cross-origin.  Everything here is local
    # analysis data; keep the policy open rather than pinning a port.
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.store = store
    app.state.worker = worker

    @app.post("/jobs", status_code=201)
    def submit_job(request: JobRequest):
        total = _validate(store, request.kind, request.params)
        state, created = store.create(request.kind, request.params, total)
        if created:
            worker.submit(state["job_id"])
        return {**_job_payload(state), "created": created}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        state = store.load(job_id)
        if state is None:
            raise HTTPException(404, detail=f"unknown job {job_id!r}")
        return _job_payload(state)

    @app.get("/jobs/{job_id}/artifacts/{name:path}")
    def fetch_artifact(job_id: str, name: str):
        state = store.load(job_id)
        if state is None:
            raise HTTPException(404, detail=f"unknown job {job_id!r}")
        if state["state"] in ("queued", "running"):
            raise HTTPException(409, detail=f"job {job_id} is {state['state']}")
        base = store.artifacts_dir(job_id).resolve()
        target = (base / name).resolve()
        if not target.is_relative_to(base) or name not in state["artifacts"]:
            raise HTTPException(404, detail=f"no artifact {name!r} in job {job_id}")
        return FileResponse(target)

    def _pick_job(kind: str, job_id: str | None) -> dict:
        if job_id:
            state = store.load(job_id)
            if state is None or state["kind"] != kind:
                raise HTTPException(404, detail=f"unknown {kind} job {job_id!r}")
            if state["state"] != "done":
                raise HTTPException(409, detail=f"job {job_id} is {state['state']}")
            return state
        finished = store.finished(kind)
        if not finished:
            raise HTTPException(404, detail=f"no finished {kind} job")
        return finished[0]

    @app.get("/boundaries/overall")
    def overall_boundaries(job: str | None = None):
        state = _pick_job("calibrate", job)
        path = store.artifacts_dir(state["job_id"]) / pl.OVERALL_BOUNDARIES
        rows = list(csv.DictReader(open(path, newline="", encoding="utf-8")))
        if not rows:
            raise HTTPException(404, detail="calibration produced no eligible boundaries")
        return {
            "job_id": state["job_id"],
            "boundaries": {
                r["boundary"]: {
                    "point": float(r["mean_point"]),
                    "min": float(r["min_point"]),
                    "max": float(r["max_point"]),
                    "stddev": float(r["stddev"]),
                }
                for r in rows
            },
        }

    @app.get("/institutions/{label}/scores")
    def institution_scores(label: str, job: str | None = None):
        state = _pick_job("score", job)
        path = store.artifacts_dir(state["job_id"]) / pl.RESULTS
        papers = []
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                if row["institution_id"] != label:
                    continue
                papers.append(
                    {
                        "label": row["paper_id"],
                        "mean": float(row["mean_score"]),
                        "min": float(row["min_score"]),
                        "max": float(row["max_score"]),
                        "rigour": float(row["rigour_mean"]),
                        "originality": float(row["originality_mean"]),
                        "significance": float(row["significance_mean"]),
                        "comments": {
                            "rigour": row["rigour_comment"],
                            "originality": row["originality_comment"],
                            "significance": row["significance_comment"],
                        },
                        "star": row["star_4pt"],
                    }
                )
        if not papers:
            raise HTTPException(404, detail=f"no scored papers for {label!r}")
        return {"job_id": state["job_id"], "institution": label, "papers": papers}

    return app


def main() -> None:  # pragma: no cover - thin uvicorn wrapper
    import uvicorn

    uvicorn.run(
        create_app(),
        host=os.environ.get(HOST_ENV, "127.0.0.1"),
        port=int(os.environ.get(PORT_ENV, "8077")),
    )


if __name__ == "__main__":  # pragma: no cover
    main()
