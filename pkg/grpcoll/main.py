"""Ops API for a running coordinator: health, readiness, status, classification and report."""

from typing import Optional

from fastapi import FastAPI, HTTPException

from grpcoll.api.v1.api import api_router
from grpcoll.core.config import settings
from grpcoll.core.logging import get_logger
from grpcoll.middleware.logging import RequestLoggingMiddleware
from grpcoll.protocol.coordinator import Coordinator

logger = get_logger(__name__)


def create_app(coordinator: Optional[Coordinator] = None) -> FastAPI:
    app = FastAPI(
        title=settings.PROJECT_NAME,
        openapi_url=f"{settings.API_V1_STR}/openapi.json",
        docs_url="/docs",
        redoc_url="/redoc",
    )
    app.state.coordinator = coordinator
    app.add_middleware(RequestLoggingMiddleware)
    app.include_router(api_router, prefix=settings.API_V1_STR)

    @app.get("/health")
    async def health_check():
        """Returns 200 while the process is up."""
        return {"status": "healthy"}

    @app.get("/ready")
    async def readiness_check():
        """Returns 200 once the coordinator has a trained model, 503 before."""
        current = app.state.coordinator
        if current is None or not current.ready:
            raise HTTPException(status_code=503, detail="Coordinator has not finished training")
        return {"status": "ready", "trained_samples": current.trained_samples}

    return app
