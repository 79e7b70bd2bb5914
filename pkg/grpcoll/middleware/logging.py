import time
import uuid

from fastapi import Request
from starlette.middleware.base import BaseHTTPMiddleware

from grpcoll.core.logging import get_logger, log_error, log_request

logger = get_logger(__name__)


class RequestLoggingMiddleware(BaseHTTPMiddleware):
    async def dispatch(self, request: Request, call_next):
        request_id = str(uuid.uuid4())
        started = time.perf_counter()

        try:
            response = await call_next(request)
        except Exception as e:
            log_error(
                logger,
                e,
                request_id=request_id,
                method=request.method,
                path=request.url.path,
                duration_ms=(time.perf_counter() - started) * 1000,
            )
            raise

        log_request(
            logger,
            request_id=request_id,
            method=request.method,
            path=request.url.path,
            status_code=response.status_code,
            duration_ms=(time.perf_counter() - started) * 1000,
            client_host=request.client.host if request.client else None,
        )
        response.headers["X-Request-ID"] = request_id
        return response
