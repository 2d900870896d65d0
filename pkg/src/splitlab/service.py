"""HTTP surface: the only externally reachable face of the platform.

Envelopes mirror the domain types; handlers add no semantics of their
own. Two deliberate narrowings:

- POST /track answers with exactly {variant_index, recruited, reason}
  for exactly one experiment. The response never enumerates other
  experiments or a visitor's memberships; integration stays loosely
  coupled because there is nothing else to couple to.
- Stop requires an authenticated actor but no special role. Anyone who
  can see harm can stop it; the audit records who did.

Authentication is a single shared bearer token (empty token disables
it); the acting person is named per request via the X-Actor header.
Errors use {code, message} with conventional status classes: 404 for
missing keys, 409 for conflicts and illegal transitions, 422 for
malformed input, 401 for a bad token.
"""

from __future__ import annotations

import asyncio
import contextlib
import logging

from fastapi import Body, FastAPI, Query, Request
from fastapi.responses import JSONResponse

from .config import PlatformConfig
from .errors import (
    ConflictError,
    FrozenError,
    NotFoundError,
    StateError,
    ValidationFailure,
)
from .metrics import MetricDefinition
from .registry import PreRegistration
from .runtime import Platform

log = logging.getLogger("splitlab.service")


class AuthError(Exception):
    pass


def _actor(request: Request) -> str:
    actor = request.headers.get("x-actor", "").strip()
    if not actor:
        raise ValidationFailure("the X-Actor header names who acts; it is required")
    return actor


def _record_document(record) -> dict:
    return record.to_dict()


def create_app(platform: Platform, *, run_timers: bool = True) -> FastAPI:
    """Build the HTTP app over an assembled platform.

    ``run_timers`` starts the tick and batch loops on startup; tests
    drive the platform by hand and pass False.
    """

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        tasks = []
        if run_timers:
            tasks.append(asyncio.create_task(_tick_loop()))
            tasks.append(asyncio.create_task(_batch_loop()))
            log.info("timers started: tick %dms, batch %dms",
                     platform.config.rt_tick_ms,
                     platform.config.batch_interval_ms)
        yield
        for task in tasks:
            task.cancel()
        for task in tasks:
            with contextlib.suppress(asyncio.CancelledError):
                await task

    async def _tick_loop():
        while True:
            await asyncio.sleep(platform.config.rt_tick_ms / 1000)
            platform.tick()

    async def _batch_loop():
        while True:
            await asyncio.sleep(platform.config.batch_interval_ms / 1000)
            platform.run_batch()

    app = FastAPI(title="splitlab", lifespan=lifespan)

    # -- errors -> {code, message} --------------------------------------

    def _handler(code: str, status: int):
        def handle(request: Request, exc: Exception) -> JSONResponse:
            body = {"code": code, "message": str(exc)}
            current = getattr(exc, "current_status", None)
            if current is not None:
                body["current_status"] = current
            return JSONResponse(body, status_code=status)
        return handle

    app.add_exception_handler(NotFoundError, _handler("not_found", 404))
    app.add_exception_handler(ConflictError, _handler("conflict", 409))
    app.add_exception_handler(FrozenError, _handler("frozen", 409))
    app.add_exception_handler(StateError, _handler("illegal_state", 409))
    app.add_exception_handler(ValidationFailure, _handler("validation", 422))
    app.add_exception_handler(AuthError, _handler("unauthorized", 401))

    # -- auth ------------------------------------------------------------

    @app.middleware("http")
    async def check_token(request: Request, call_next):
        token = platform.config.api_token
        if token and request.url.path != "/health":
            supplied = request.headers.get("authorization", "")
            if supplied != f"Bearer {token}":
                return JSONResponse(
                    {"code": "unauthorized", "message": "bad or missing token"},
                    status_code=401)
        return await call_next(request)

    # -- assignment and ingestion ----------------------------------------

    @app.post("/track")
    async def track(payload: dict = Body(...)) -> dict:
        for field in ("experiment_key", "method", "raw_id"):
            if field not in payload:
                raise ValidationFailure(f"track request needs {field!r}")
        outcome = platform.track(
            payload["experiment_key"], payload["method"], payload["raw_id"],
            at=payload.get("timestamp_ms"))
        return {
            "variant_index": outcome.variant_index,
            "recruited": outcome.recruited,
            "reason": outcome.reason,
        }

    @app.post("/events")
    async def events(payload: dict = Body(...)) -> dict:
        records = payload.get("events")
        if not isinstance(records, list) or not records:
            raise ValidationFailure("body must carry a non-empty 'events' list")
        first = platform.record_goal_records(records)
        return {"accepted": len(records), "first_offset": first}

    # -- experiments -------------------------------------------------------

    @app.post("/experiments", status_code=201)
    async def create_experiment(request: Request,
                                payload: dict = Body(...)) -> dict:
        for field in ("experiment_key", "tracking_method", "variant_weights",
                      "exposure_buckets"):
            if field not in payload:
                raise ValidationFailure(f"experiment needs {field!r}")
        prereg = None
        if payload.get("preregistration"):
            prereg = PreRegistration.from_dict(payload["preregistration"])
        record = platform.create_experiment(
            payload["experiment_key"], payload["tracking_method"],
            tuple(payload["variant_weights"]), payload["exposure_buckets"],
            preregistration=prereg,
            description=payload.get("description", ""),
            team=payload.get("team", ""),
            product_area=payload.get("product_area", ""),
            salt=payload.get("salt", ""),
            actor=_actor(request))
        return _record_document(record)

    @app.get("/experiments")
    async def list_experiments(
            status: str | None = Query(default=None),
            team: str | None = Query(default=None),
            product_area: str | None = Query(default=None),
            tracking_method: str | None = Query(default=None),
            metric: str | None = Query(default=None),
            free_text: str | None = Query(default=None)) -> dict:
        records = platform.registry.search(
            status=status, team=team, product_area=product_area,
            tracking_method=tracking_method, metric=metric,
            free_text=free_text)
        return {"experiments": [_record_document(r) for r in records]}

    @app.get("/experiments/{key}")
    async def get_experiment(key: str) -> dict:
        return _record_document(platform.registry.get(key))

    @app.post("/experiments/{key}/start")
    async def start_experiment(key: str, request: Request) -> dict:
        return _record_document(
            platform.start_experiment(key, actor=_actor(request)))

    @app.post("/experiments/{key}/stop")
    async def stop_experiment(key: str, request: Request,
                              payload: dict = Body(default={})) -> dict:
        return _record_document(platform.stop_experiment(
            key, actor=_actor(request), reason=payload.get("reason", "")))

    @app.post("/experiments/{key}/decision")
    async def record_decision(key: str, request: Request,
                              payload: dict = Body(...)) -> dict:
        for field in ("outcome", "rationale"):
            if field not in payload:
                raise ValidationFailure(f"decision needs {field!r}")
        return _record_document(platform.record_decision(
            key, payload["outcome"], payload["rationale"],
            actor=_actor(request),
            decided_by=payload.get("decided_by", "")))

    @app.post("/experiments/{key}/exposure")
    async def set_exposure(key: str, request: Request,
                           payload: dict = Body(...)) -> dict:
        if "exposure_buckets" not in payload:
            raise ValidationFailure("body needs 'exposure_buckets'")
        return _record_document(platform.registry.set_exposure(
            key, payload["exposure_buckets"], actor=_actor(request),
            at=platform.now_ms()))

    @app.post("/experiments/{key}/preregistration")
    async def amend_preregistration(key: str, request: Request,
                                    payload: dict = Body(...)) -> dict:
        return _record_document(platform.registry.amend_preregistration(
            key, PreRegistration.from_dict(payload), actor=_actor(request),
            at=platform.now_ms()))

    @app.get("/experiments/{key}/report")
    async def report(key: str) -> dict:
        return platform.compose_report(key).to_dict()

    @app.get("/experiments/{key}/guardrails")
    async def guardrails(key: str) -> dict:
        return platform.guardrail_status(key).to_dict()

    @app.get("/experiments/{key}/audit")
    async def audit(key: str) -> dict:
        platform.registry.get(key)
        entries = [e for e in platform.registry.audit_entries()
                   if e["key"] == key]
        return {"entries": entries}

    # -- metrics catalog --------------------------------------------------

    @app.get("/metrics")
    async def list_metrics() -> dict:
        return {"metrics": [m.to_dict() for m in platform.catalog.all()]}

    @app.post("/metrics", status_code=201)
    async def register_metric(request: Request,
                              payload: dict = Body(...)) -> dict:
        _actor(request)
        definition = MetricDefinition.from_dict(payload)
        platform.catalog.register(definition)
        return definition.to_dict()

    # -- quality -----------------------------------------------------------

    @app.get("/quality/pipelines")
    async def quality_pipelines() -> dict:
        divergence = platform.last_divergence
        if divergence is None and platform.rt.watermark > 0:
            divergence = platform.run_batch()
        return {
            "divergence": divergence.to_dict() if divergence else None,
            "rt_watermark": platform.rt.watermark,
            "head": platform.log.head,
            "tick": platform.tick_index,
        }

    @app.get("/quality/aa-pool")
    async def quality_aa_pool(
            n: int = Query(default=100, ge=1, le=10_000),
            seed: int = Query(default=0),
            per_experiment_n: int = Query(default=10_000, ge=100)) -> dict:
        result = platform.aa_pool(n, per_experiment_n=per_experiment_n,
                                  seed=seed)
        return result.to_dict()

    @app.get("/health")
    async def health() -> dict:
        return platform.health()

    return app


def serve(config: PlatformConfig) -> None:
    """Assemble a platform and serve it; blocks until shutdown."""
    import uvicorn

    with Platform(config) as platform:
        app = create_app(platform)
        uvicorn.run(app, host=config.host, port=config.port, log_level="info")
