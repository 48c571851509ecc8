import json
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Type, TypeVar, Union

import pandas as pd
from pydantic import BaseModel, ValidationError

from .errors import InvalidInputError
from .schemas import (
    CSV_COLUMNS,
    TIMELINE_COLUMNS,
    GraphDumpRecord,
    MetricsRow,
    MissionReport,
    PlanInstanceRecord,
    ScenarioRecord,
    TimelinePoint,
)
from .utils.logger import get_logger

logger = get_logger(__name__)

RecordT = TypeVar("RecordT", bound=BaseModel)

# Wall-clock fields left out of report JSON unless timings are requested
TIMING_EXCLUDE = {
    "segments": {"__all__": {"planning_s": True, "mapping_s": True,
                             "metrics": {"planning_s", "map_exec_s"}}},
    "metrics": {"planning_s", "map_exec_s"},
}


class StorageManager:
    def __init__(self, base_dir: str):
        self.base_dir = Path(base_dir)
        self.reports_dir = self.base_dir / "reports"
        self.maps_dir = self.base_dir / "maps"
        self.graphs_dir = self.base_dir / "graphs"
        self.solutions_dir = self.base_dir / "solutions"
        self.ablations_dir = self.base_dir / "ablations"

    def ensure_dirs(self):
        """Create the output tree"""
        for directory in (self.reports_dir, self.maps_dir, self.graphs_dir,
                          self.solutions_dir, self.ablations_dir):
            directory.mkdir(parents=True, exist_ok=True)

    def get_report_path(self, scenario: str, planner: str, seed: int) -> Path:
        """Get default report path for a mission run"""
        return self.reports_dir / f"{scenario}_{planner}_s{seed}.json"

    def get_metrics_path(self, scenario: str, planner: str, seed: int) -> Path:
        return self.reports_dir / f"{scenario}_{planner}_s{seed}.csv"

    def get_map_path(self, scenario: str, planner: str, seed: int) -> Path:
        return self.maps_dir / f"{scenario}_{planner}_s{seed}.txt"

    def get_snapshot_dir(self, scenario: str, planner: str, seed: int) -> Path:
        """Per-segment map snapshots of one mission run"""
        return self.maps_dir / f"{scenario}_{planner}_s{seed}"

    def get_timeline_path(self, scenario: str, planner: str, seed: int) -> Path:
        return self.reports_dir / f"{scenario}_{planner}_s{seed}_timeline.csv"

    def get_solution_path(self, instance_path: Union[str, Path]) -> Path:
        return self.solutions_dir / f"{Path(instance_path).stem}_solution.json"

    def get_ablation_path(self, name: str = "ablation") -> Path:
        return self.ablations_dir / f"{name}.csv"

    # -- reading -----------------------------------------------------------

    def load_record(self, path: Union[str, Path], record_type: Type[RecordT]) -> RecordT:
        """Read a JSON file into a validated record; any failure becomes InvalidInputError."""
        path = Path(path)
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except FileNotFoundError as e:
            raise InvalidInputError(f"{path}: file not found") from e
        except json.JSONDecodeError as e:
            raise InvalidInputError(f"{path}: not valid JSON ({e})") from e
        try:
            return record_type.model_validate(data)
        except ValidationError as e:
            raise InvalidInputError(f"{path}: {e}") from e

    def load_instance(self, path: Union[str, Path]) -> PlanInstanceRecord:
        return self.load_record(path, PlanInstanceRecord)

    def load_scenario(self, path: Union[str, Path]) -> ScenarioRecord:
        return self.load_record(path, ScenarioRecord)

    def load_graph(self, path: Union[str, Path]) -> GraphDumpRecord:
        return self.load_record(path, GraphDumpRecord)

    # -- writing -----------------------------------------------------------

    def save_json(self, path: Union[str, Path], data: Dict[str, Any]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=2, ensure_ascii=False)
            f.write("\n")
        return path

    def save_record(self, path: Union[str, Path], record: BaseModel) -> Path:
        return self.save_json(path, record.model_dump(mode="json"))

    def save_report(self, path: Union[str, Path], report: MissionReport, include_timing: bool = False) -> Path:
        """Write a mission report; wall-clock fields only with ``include_timing``."""
        exclude = None if include_timing else TIMING_EXCLUDE
        path = self.save_json(path, report.model_dump(mode="json", exclude=exclude))
        logger.info(f"Report written to {path}")
        return path

    def save_metrics_csv(self, path: Union[str, Path], rows: Iterable[MetricsRow]) -> Path:
        """Metrics rows in the fixed column order."""
        frame = pd.DataFrame([row.to_csv_dict() for row in rows], columns=CSV_COLUMNS)
        return self.save_csv(path, frame)

    def save_timeline_csv(self, path: Union[str, Path], points: Iterable[TimelinePoint]) -> Path:
        frame = pd.DataFrame([point.to_csv_dict() for point in points], columns=TIMELINE_COLUMNS)
        return self.save_csv(path, frame)

    def save_csv(self, path: Union[str, Path], frame: pd.DataFrame) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False)
        return path

    def save_map(self, path: Union[str, Path], text: str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding='utf-8')
        return path

    def load_metrics_csv(self, path: Union[str, Path]) -> Optional[pd.DataFrame]:
        path = Path(path)
        if not path.exists():
            return None
        return pd.read_csv(path)
