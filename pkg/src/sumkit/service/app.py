"""FastAPI application exposing the summarization pipeline over HTTP."""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..errors import ConfigError, SumkitError, UsageError
from . import handlers, schemas


def create_app() -> FastAPI:
    app = FastAPI(
        title="sumkit",
        description="Language-guided video summarization service: synthetic data, "
                    "training, frame scoring, keyshot summaries and evaluation.",
    )

    @app.exception_handler(SumkitError)
    async def sumkit_error_handler(request: Request, exc: SumkitError):
        status = 400 if isinstance(exc, (ConfigError, UsageError)) else 422
        return JSONResponse(status_code=status,
                            content={"error": type(exc).__name__, "detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return handlers.handle_health()

    @app.get("/config", response_model=schemas.ConfigResponse)
    def config_defaults():
        return handlers.handle_config()

    @app.post("/gen-synthetic", response_model=schemas.GenSyntheticResponse)
    def gen_synthetic(req: schemas.GenSyntheticRequest):
        return handlers.handle_gen_synthetic(req)

    @app.post("/train", response_model=schemas.TrainResponse)
    def train(req: schemas.TrainRequest):
        return handlers.handle_train(req)

    @app.post("/score", response_model=schemas.ScoreResponse)
    def score(req: schemas.ScoreRequest):
        return handlers.handle_score(req)

    @app.post("/summarize", response_model=schemas.SummarizeResponse)
    def summarize(req: schemas.SummarizeRequest):
        return handlers.handle_summarize(req)

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate(req: schemas.EvaluateRequest):
        return handlers.handle_evaluate(req)

    @app.post("/inspect-features", response_model=schemas.InspectResponse)
    def inspect(req: schemas.InspectRequest):
        return handlers.handle_inspect(req)

    return app


app = create_app()
