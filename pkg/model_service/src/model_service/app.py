"""HTTP classification service speaking the black-box adapter wire
protocol.

POST /classify takes {"items": [{"id", "code", "language"}, ...]} and
answers {"items": [{"id", "label"}, ...]} with ids echoed in request
order. GET /health answers {"status": "ok", "labels": [...]} once the
model is ready. Until then both endpoints answer 503; a payload that is
not JSON answers 400; missing or ill-typed fields answer 422. Request
handling may be concurrent, but model invocation is serialized and
internally chunked to the configured batch size.
"""

from __future__ import annotations

import threading
from typing import Literal, Optional, Sequence

from fastapi import FastAPI, HTTPException
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .config import ServiceConfig, load_config
from .models import Item, Model, build_model


class ItemIn(BaseModel):
    id: str
    code: str
    language: Literal["c", "java", "generic"]


class ClassifyRequest(BaseModel):
    items: list[ItemIn] = Field(min_length=1)


class ItemOut(BaseModel):
    id: str
    label: int


class ClassifyResponse(BaseModel):
    items: list[ItemOut]


class HealthResponse(BaseModel):
    status: str
    labels: list[int]


class ModelHolder:
    """Owns the backend and its lifecycle: loading -> ready | failed.

    predict() is serialized under a lock and splits work into max_batch
    chunks, so one model invocation never sees an oversized batch no
    matter how large the request was.
    """

    def __init__(self, model: Model, max_batch: int):
        self.model = model
        self.max_batch = max_batch
        self.status = "loading"
        self.error: Optional[str] = None
        self._lock = threading.Lock()

    def load(self) -> None:
        try:
            self.model.load()
        except Exception as exc:
            self.error = str(exc)
            self.status = "failed"
            return
        self.status = "ready"

    def predict(self, items: Sequence[Item]) -> list[int]:
        with self._lock:
            out: list[int] = []
            for i in range(0, len(items), self.max_batch):
                out.extend(self.model.predict(items[i : i + self.max_batch]))
            return out


def create_app(config: Optional[ServiceConfig] = None, start_loader: bool = True) -> FastAPI:
    """Build the service app; the model loads in a background thread.

    start_loader=False leaves the holder in the loading state so tests
    can drive the lifecycle by hand via app.state.holder.load().
    """
    config = load_config() if config is None else config
    holder = ModelHolder(build_model(config), config.max_batch)
    app = FastAPI(title="model-service", version="0.1.0")
    app.state.config = config
    app.state.holder = holder
    if start_loader:
        threading.Thread(target=holder.load, daemon=True).start()

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(request, exc: RequestValidationError):
        errors = [
            {"type": e.get("type"), "loc": e.get("loc"), "msg": e.get("msg")}
            for e in exc.errors()
        ]
        if any(e["type"] == "json_invalid" for e in errors):
            return JSONResponse(status_code=400, content={"detail": "malformed JSON payload"})
        return JSONResponse(status_code=422, content={"detail": errors})

    def _require_ready() -> None:
        if holder.status == "loading":
            raise HTTPException(status_code=503, detail="model is loading")
        if holder.status == "failed":
            raise HTTPException(status_code=503, detail=f"model failed to load: {holder.error}")

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        _require_ready()
        return HealthResponse(status="ok", labels=holder.model.labels())

    @app.post("/classify", response_model=ClassifyResponse)
    def classify(request: ClassifyRequest) -> ClassifyResponse:
        _require_ready()
        items = [Item(row.id, row.code, row.language) for row in request.items]
        try:
            labels = holder.predict(items)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        rows = [ItemOut(id=item.id, label=label) for item, label in zip(items, labels)]
        return ClassifyResponse(items=rows)

    return app
