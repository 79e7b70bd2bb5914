import json
import os
import subprocess
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import pandas as pd

from grpcoll.core.logging import get_logger
from grpcoll.schemas.report import ExperimentReport, ExportFormat, RunMetrics

logger = get_logger(__name__)

ACCURACY_DECIMALS = 4


def build_id() -> str:
    """``git describe`` of the working tree, or GRPCOLL_BUILD_ID, or 'unknown'."""
    override = os.environ.get("GRPCOLL_BUILD_ID")
    if override:
        return override
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
            check=True,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def new_report(
    experiment_id: str,
    config: Optional[Dict[str, Any]] = None,
    seeds: Optional[Dict[str, int]] = None,
) -> ExperimentReport:
    return ExperimentReport(
        experiment_id=experiment_id,
        build_id=build_id(),
        config=config or {},
        seeds=seeds or {},
    )


def round_accuracy(value: Optional[float]) -> Optional[float]:
    return None if value is None else round(float(value), ACCURACY_DECIMALS)


def run_rows(report: ExperimentReport) -> List[Dict[str, Any]]:
    """One flat dict per run; per-participant rows go to their own table."""
    rows = []
    for run in report.runs:
        row = run.model_dump(mode="json", exclude={"per_participant"})
        row["experiment_id"] = report.experiment_id
        rows.append(row)
    return rows


def participant_rows(report: ExperimentReport) -> List[Dict[str, Any]]:
    return [
        {"experiment_id": report.experiment_id, "label": run.label, **p.model_dump(mode="json")}
        for run in report.runs
        for p in run.per_participant
    ]


def runs_frame(report: ExperimentReport) -> pd.DataFrame:
    return pd.json_normalize(run_rows(report))


def to_csv(report: ExperimentReport) -> str:
    return runs_frame(report).to_csv(index=False)


def write_report(
    report: ExperimentReport,
    out_dir: Union[str, Path],
    formats: Sequence[ExportFormat] = (ExportFormat.JSON, ExportFormat.CSV),
) -> List[Path]:
    """Write ``<experiment_id>.json`` and/or ``.csv`` (plus ``_participants.csv``) under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    stem = report.experiment_id
    if ExportFormat.JSON in formats:
        path = out_dir / f"{stem}.json"
        path.write_text(report.model_dump_json(indent=2))
        written.append(path)
    if ExportFormat.CSV in formats:
        path = out_dir / f"{stem}.csv"
        runs_frame(report).to_csv(path, index=False)
        written.append(path)
        participants = participant_rows(report)
        if participants:
            path = out_dir / f"{stem}_participants.csv"
            pd.json_normalize(participants).to_csv(path, index=False)
            written.append(path)
    logger.info("report_written", experiment_id=stem, files=[str(p) for p in written])
    return written


def load_report(path: Union[str, Path]) -> ExperimentReport:
    return ExperimentReport.model_validate(json.loads(Path(path).read_text()))


def aggregate(runs: Sequence[RunMetrics]) -> Dict[str, Optional[float]]:
    """Mean/min/max accuracy across repeated runs of one cell."""
    values = [r.accuracy for r in runs if r.accuracy is not None]
    if not values:
        return {"mean": None, "min": None, "max": None}
    return {
        "mean": round_accuracy(sum(values) / len(values)),
        "min": round_accuracy(min(values)),
        "max": round_accuracy(max(values)),
    }
