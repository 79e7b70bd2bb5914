from fastapi import HTTPException, Request, status

from grpcoll.core.errors import DimensionMismatchError, GrpCollError, InvalidDimensionError, NotReadyError, ShapeError
from grpcoll.protocol.coordinator import Coordinator


def get_coordinator(request: Request) -> Coordinator:
    coordinator = getattr(request.app.state, "coordinator", None)
    if coordinator is None:
        raise HTTPException(
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
            detail="No coordinator attached",
        )
    return coordinator


def as_http_error(exc: GrpCollError) -> HTTPException:
    """NotReady -> 503, shape and dimension errors -> 422, anything else -> 400."""
    if isinstance(exc, NotReadyError):
        code = status.HTTP_503_SERVICE_UNAVAILABLE
    elif isinstance(exc, (DimensionMismatchError, InvalidDimensionError, ShapeError)):
        code = status.HTTP_422_UNPROCESSABLE_ENTITY
    else:
        code = status.HTTP_400_BAD_REQUEST
    return HTTPException(status_code=code, detail={"code": exc.code, "message": str(exc)})
