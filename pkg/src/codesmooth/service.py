"""HTTP service wrapping the smoothing core.

Endpoints: POST /tokenize, /perturb, /predict, /certify and GET /health.
Requests may name a model spec; subprocess specs are refused because a
network peer must not launch processes on the host. Data and lexing
problems map to 400, adapter transport problems to 502, numerics
failures to 500.
"""

from __future__ import annotations

import os
from typing import Literal, Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .adapters import ClassifierAdapter, make_adapter
from .certification import certificate_row, certify, smoothed_predict
from .code_model import snippet_from_source
from .errors import AdapterError, CodesmoothError, NumericsError
from .perturbation import ALL_OPS, EditOp, SmoothingConfig, generate_batch

_OP_NAMES = {op.value: op for op in EditOp}


class SmoothingParams(BaseModel):
    n: int = 100
    eta: float = 0.6
    perturb_fraction: float = 0.9
    mode: Literal["mask", "edit"] = "mask"
    ops: list[Literal["insert", "replace", "delete"]] = Field(
        default_factory=lambda: sorted(op.value for op in ALL_OPS)
    )
    alpha: float = 0.001
    seed: int = 0

    def to_config(self, two_batch: bool = False) -> SmoothingConfig:
        return SmoothingConfig(
            n_samples=self.n,
            perturb_fraction=self.perturb_fraction,
            eta=self.eta,
            mode=self.mode,
            op_set=frozenset(_OP_NAMES[name] for name in self.ops),
            alpha=self.alpha,
            seed=self.seed,
            two_batch=two_batch,
        )


class TokenizeIn(BaseModel):
    code: str
    language: Literal["c", "java", "generic"]


class TokenOut(BaseModel):
    text: str
    kind: str
    start: int
    end: int


class TableEntryOut(BaseModel):
    name: str
    occurrences: list[int]


class TokenizeOut(BaseModel):
    tokens: list[TokenOut]
    h: int
    identifiers: list[TableEntryOut]


class PerturbIn(BaseModel):
    code: str
    language: Literal["c", "java", "generic"]
    params: SmoothingParams = Field(default_factory=SmoothingParams)


class SampleOut(BaseModel):
    index: int
    code: str
    perturbed: list[int]


class PerturbOut(BaseModel):
    samples: list[SampleOut]


class ItemIn(BaseModel):
    id: str
    code: str
    language: Literal["c", "java", "generic"]


class PredictIn(BaseModel):
    items: list[ItemIn]
    model: Optional[str] = None
    params: SmoothingParams = Field(default_factory=SmoothingParams)


class PredictionOut(BaseModel):
    id: str
    predicted: int
    votes: dict[str, int]


class PredictOut(BaseModel):
    results: list[PredictionOut]


class RecordIn(BaseModel):
    id: str
    code: str
    language: Literal["c", "java", "generic"]
    label: int


class CertifyIn(BaseModel):
    records: list[RecordIn]
    model: Optional[str] = None
    params: SmoothingParams = Field(default_factory=SmoothingParams)
    two_batch: bool = False
    unsound_edit_certificates: bool = False


class CertifyOut(BaseModel):
    certificates: list[dict]


def _resolve_adapter(spec: Optional[str], default: Optional[str]) -> ClassifierAdapter:
    chosen = spec or default
    if not chosen:
        raise CodesmoothError("no model specified and the service has no default")
    if chosen.startswith("subprocess:"):
        raise CodesmoothError("subprocess models are not allowed over HTTP")
    return make_adapter(chosen)


def create_app(default_model: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="codesmooth", version=__version__)
    app.state.default_model = default_model

    @app.exception_handler(CodesmoothError)
    async def _error_handler(request: Request, exc: CodesmoothError) -> JSONResponse:
        status = 400
        if isinstance(exc, AdapterError):
            status = 502
        if isinstance(exc, NumericsError):
            status = 500
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    @app.exception_handler(ValueError)
    async def _value_error_handler(request: Request, exc: ValueError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health")
    def health() -> dict:
        labels: list[int] = []
        spec = app.state.default_model
        if spec and not spec.startswith(("http:", "https:", "subprocess:")):
            try:
                with make_adapter(spec) as adapter:
                    labels = list(adapter.label_space or [])
            except CodesmoothError:
                labels = []
        return {"status": "ok", "labels": labels}

    @app.post("/tokenize", response_model=TokenizeOut)
    def tokenize(body: TokenizeIn) -> TokenizeOut:
        snippet = snippet_from_source(body.code, body.language)
        return TokenizeOut(
            tokens=[
                TokenOut(text=t.text, kind=t.kind, start=t.start, end=t.end)
                for t in snippet.tokens
            ],
            h=snippet.identifier_count,
            identifiers=[
                TableEntryOut(name=e.name, occurrences=list(e.occurrences))
                for e in snippet.identifiers.entries
            ],
        )

    @app.post("/perturb", response_model=PerturbOut)
    def perturb(body: PerturbIn) -> PerturbOut:
        snippet = snippet_from_source(body.code, body.language)
        samples = generate_batch(snippet, body.params.to_config())
        return PerturbOut(
            samples=[
                SampleOut(
                    index=s.sample_index,
                    code=s.snippet.source,
                    perturbed=sorted(s.perturbed_indices),
                )
                for s in samples
            ]
        )

    @app.post("/predict", response_model=PredictOut)
    def predict(body: PredictIn) -> PredictOut:
        config = body.params.to_config()
        results = []
        with _resolve_adapter(body.model, app.state.default_model) as adapter:
            for item in body.items:
                snippet = snippet_from_source(item.code, item.language)
                label, tally = smoothed_predict(snippet, config, adapter)
                votes = {str(lbl): count for lbl, count in sorted(tally.counts.items())}
                results.append(PredictionOut(id=item.id, predicted=label, votes=votes))
        return PredictOut(results=results)

    @app.post("/certify", response_model=CertifyOut)
    def certify_endpoint(body: CertifyIn) -> CertifyOut:
        config = body.params.to_config(two_batch=body.two_batch)
        rows = []
        with _resolve_adapter(body.model, app.state.default_model) as adapter:
            for record in sorted(body.records, key=lambda r: r.id):
                snippet = snippet_from_source(record.code, record.language)
                cert = certify(
                    snippet, record.label, config, adapter,
                    allow_unsound_edit_certificates=body.unsound_edit_certificates,
                )
                rows.append(certificate_row(record.id, cert))
        return CertifyOut(certificates=rows)

    return app


app = create_app(os.environ.get("CODESMOOTH_MODEL"))
