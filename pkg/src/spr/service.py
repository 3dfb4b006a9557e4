"""HTTP front end: search, health, stats, and run-file evaluation.

All routes live under ``/api/v1``. The engine loads in the background
on startup; until it is ready every data route answers 503 with a
loading status. Search requests run under a configurable deadline and
never mutate engine state, so concurrent searches are safe.
"""

from __future__ import annotations

import concurrent.futures
import contextlib
import os
import threading
from pathlib import Path
from typing import Any

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from spr.engine import ENV_CONFIG_VAR, Engine, EngineConfig, load_config
from spr.errors import SPRError
from spr.evaluation import evaluate_run
from spr.pipeline import STAGES


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


class ServiceState:
    def __init__(self) -> None:
        self.engine: Engine | None = None
        self.load_error: str | None = None
        self.eval_lock = threading.Lock()
        self.executor = concurrent.futures.ThreadPoolExecutor(max_workers=4)


def _search_payload_errors(payload: Any) -> str | None:
    if not isinstance(payload, dict):
        return "request body must be a JSON object"
    has_query = isinstance(payload.get("query"), str) and payload.get("query", "").strip() != ""
    has_embedding = payload.get("embedding") is not None
    if ("query" in payload and not isinstance(payload["query"], str)) or (
        "query" in payload and payload["query"].strip() == ""
    ):
        return "query must be a non-empty string"
    if not has_query and not has_embedding:
        return "provide exactly one of query or embedding"
    if has_query and has_embedding:
        return "provide exactly one of query or embedding"
    if has_embedding:
        emb = payload["embedding"]
        if not isinstance(emb, list) or not emb or not all(isinstance(x, (int, float)) for x in emb):
            return "embedding must be a non-empty list of numbers"
    stage = payload.get("stage", "fine")
    if stage not in STAGES:
        return f"stage must be one of {list(STAGES)}"
    top_k = payload.get("top_k_segments")
    if top_k is not None and (not isinstance(top_k, int) or isinstance(top_k, bool) or top_k <= 0):
        return "top_k_segments must be a positive integer"
    return None


def create_app(
    config: EngineConfig | None = None,
    config_path: str | Path | None = None,
    engine: Engine | None = None,
) -> FastAPI:
    """Build the app; the engine comes prebuilt, from a config object,
    from a config path, or from the path in the environment variable."""
    state = ServiceState()

    def _load_engine() -> None:
        try:
            if engine is not None:
                state.engine = engine
                return
            cfg = config
            if cfg is None:
                path = config_path or os.environ.get(ENV_CONFIG_VAR, "")
                if not path:
                    raise SPRError(
                        f"no engine config: pass one or set {ENV_CONFIG_VAR}"
                    )
                cfg = load_config(path)
            state.engine = Engine.from_config(cfg)
        except Exception as exc:  # surfaced via /health and data routes
            state.load_error = str(exc)

    @contextlib.asynccontextmanager
    async def _lifespan(_: FastAPI):
        _load_engine()
        yield
        state.executor.shutdown(wait=False, cancel_futures=True)

    app = FastAPI(title="spr", docs_url=None, redoc_url=None, lifespan=_lifespan)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.spr = state

    def _engine_or_response() -> tuple[Engine | None, JSONResponse | None]:
        if state.engine is not None:
            return state.engine, None
        if state.load_error is not None:
            return None, _error(503, f"engine failed to load: {state.load_error}")
        return None, _error(503, "loading")

    @app.get("/api/v1/health")
    def health() -> JSONResponse:
        if state.engine is not None:
            return JSONResponse({"status": "ok", "engine_version": state.engine.version})
        if state.load_error is not None:
            return JSONResponse(status_code=503, content={"status": "error", "error": state.load_error})
        return JSONResponse(status_code=503, content={"status": "loading"})

    @app.get("/api/v1/stats")
    def stats() -> JSONResponse:
        eng, failure = _engine_or_response()
        if failure is not None:
            return failure
        assert eng is not None
        return JSONResponse(eng.stats())

    @app.post("/api/v1/search")
    async def search(request: Request) -> JSONResponse:
        eng, failure = _engine_or_response()
        if failure is not None:
            return failure
        assert eng is not None
        try:
            payload = await request.json()
        except Exception:
            return _error(400, "request body must be valid JSON")
        problem = _search_payload_errors(payload)
        if problem is not None:
            return _error(400, problem)
        stage = payload.get("stage", "fine")
        top_k = payload.get("top_k_segments")

        def _run():
            if payload.get("embedding") is not None:
                emb = np.asarray(payload["embedding"], dtype=np.float32)
                if emb.shape[0] != eng.index.dim:
                    raise ValueError(
                        f"embedding has dimension {emb.shape[0]}, index expects {eng.index.dim}"
                    )
                norm = float(np.linalg.norm(emb.astype(np.float64)))
                if norm == 0.0 or not np.isfinite(norm):
                    raise ValueError("embedding must be finite and non-zero")
                emb = (emb.astype(np.float64) / norm).astype(np.float32)
                return eng.run(query_emb=emb, top_k_segments=top_k)
            return eng.run(query_text=payload["query"], top_k_segments=top_k)

        future = state.executor.submit(_run)
        try:
            result = future.result(timeout=eng.cfg.service.deadline_s)
        except concurrent.futures.TimeoutError:
            future.cancel()
            return _error(503, f"search exceeded the {eng.cfg.service.deadline_s}s deadline")
        except (ValueError, KeyError) as exc:
            return _error(400, str(exc))
        except SPRError as exc:
            return _error(500, str(exc))
        moments = result.coarse if stage == "coarse" else result.fine
        durations = {v.video_id: v.duration_s for v in eng.corpus}
        return JSONResponse(
            {
                "results": [
                    {
                        "video_id": rm.moment.video_id,
                        "start_s": rm.moment.start_s,
                        "end_s": rm.moment.end_s,
                        "score": rm.score,
                        "rank": rm.rank,
                        "stage": rm.stage,
                        "video_duration_s": durations[rm.moment.video_id],
                    }
                    for rm in moments
                ],
                "timings_ms": {
                    key.removesuffix("_s") + "_ms": value * 1000.0
                    for key, value in result.timings_s.items()
                },
                "engine_version": eng.version,
                "index_kind": eng.index.kind,
            }
        )

    @app.post("/api/v1/evaluate")
    async def evaluate(request: Request) -> JSONResponse:
        eng, failure = _engine_or_response()
        if failure is not None:
            return failure
        assert eng is not None
        try:
            payload = await request.json()
        except Exception:
            return _error(400, "request body must be valid JSON")
        if not isinstance(payload, dict) or not isinstance(payload.get("run_path"), str):
            return _error(400, "request must carry a run_path string")
        stage = payload.get("stage")
        if stage is not None and stage not in STAGES:
            return _error(400, f"stage must be one of {list(STAGES)}")
        if not state.eval_lock.acquire(blocking=False):
            return _error(409, "another evaluation is already running")
        try:
            run_path = Path(payload["run_path"])
            if not run_path.is_file():
                return _error(404, f"run file not found: {run_path}")
            try:
                annotations = eng.require_annotations()
                report = evaluate_run(run_path, annotations, eng.cfg.eval, stage)
            except SPRError as exc:
                return _error(400, str(exc))
            return JSONResponse(
                {
                    "num_queries": report.num_queries,
                    "cells": report.cells,
                    "per_query": report.per_query,
                }
            )
        finally:
            state.eval_lock.release()

    static_dir = ""
    if engine is not None:
        static_dir = engine.cfg.service.static_dir
    elif config is not None:
        static_dir = config.service.static_dir
    else:
        path = config_path or os.environ.get(ENV_CONFIG_VAR, "")
        if path:
            try:
                static_dir = load_config(path).service.static_dir
            except Exception:
                static_dir = ""
    if static_dir and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="console")

    return app
