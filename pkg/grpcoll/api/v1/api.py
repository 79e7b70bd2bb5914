from fastapi import APIRouter

from grpcoll.api.v1.endpoints import coordinator

api_router = APIRouter()
api_router.include_router(coordinator.router, prefix="/coordinator", tags=["coordinator"])
