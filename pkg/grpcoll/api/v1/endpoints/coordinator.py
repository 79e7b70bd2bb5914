from io import StringIO

import numpy as np
from fastapi import APIRouter, Depends, Query
from fastapi.responses import StreamingResponse

from grpcoll.api import deps
from grpcoll.core.errors import GrpCollError
from grpcoll.protocol.coordinator import Coordinator
from grpcoll.schemas.protocol import ClassifyRequest, ClassifyResponse, CoordinatorStatus
from grpcoll.schemas.report import ExperimentReport, ExportFormat
from grpcoll.services import report as report_service

router = APIRouter()


@router.get("/status", response_model=CoordinatorStatus)
def get_status(coordinator: Coordinator = Depends(deps.get_coordinator)):
    """
    Session summaries, received sample count and training state.
    """
    return coordinator.status()


@router.post("/classify", response_model=ClassifyResponse)
def classify(body: ClassifyRequest, coordinator: Coordinator = Depends(deps.get_coordinator)):
    """
    Classify one already-obfuscated vector with the trained model.
    """
    try:
        label, probabilities = coordinator.classify(np.asarray(body.vector, dtype=np.float64))
    except GrpCollError as exc:
        raise deps.as_http_error(exc) from exc
    return ClassifyResponse(label=label, probabilities=probabilities.tolist())


@router.get("/report", response_model=ExperimentReport)
def get_report(
    format: ExportFormat = Query(ExportFormat.JSON, description="Export format (json/csv)"),
    coordinator: Coordinator = Depends(deps.get_coordinator),
):
    """
    The coordinator's own report: train time, classification time, bytes received.
    """
    report = coordinator.report()
    if format == ExportFormat.CSV:
        output = StringIO(report_service.to_csv(report))
        return StreamingResponse(
            iter([output.getvalue()]),
            media_type="text/csv",
            headers={"Content-Disposition": f"attachment; filename={report.experiment_id}_report.csv"},
        )
    return report
