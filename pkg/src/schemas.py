"""
Pydantic schemas for the view motion planner.

This module defines validated models for:
- Configuration sections loaded from config.yaml
- Plan instance / solution files used by the ``solve`` command
- Graph dumps, scenario files and mission reports
- The fixed-column metrics CSV rows

All models include type hints, validation, and JSON schema generation.
"""

from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

TargetId = Union[int, str]

CSV_COLUMNS = [
    "scenario",
    "segment",
    "planner",
    "seed",
    "detected_fruits",
    "surface_coverage_pct",
    "volume_accuracy_pct",
    "motion_cost",
    "planning_s",
    "map_exec_s",
    "views_executed",
]

TIMELINE_COLUMNS = [
    "segment",
    "cycle",
    "time",
    "detected_fruits",
    "surface_coverage_pct",
    "volume_accuracy_pct",
    "motion_cost",
    "views_executed",
]


class EdgePolicy(str, Enum):
    STRICT_EDGES = "strict_edges"
    METRIC_CLOSURE = "metric_closure"


class Sparsity(str, Enum):
    """Graph sparsity levels: complete, dense (k=10) and sparse (k=5)."""

    COM = "com"
    DEN = "den"
    SPA = "spa"

    @property
    def k(self) -> Optional[int]:
        return {"com": None, "den": 10, "spa": 5}[self.value]


class PlannerKind(str, Enum):
    GO_VMP = "go_vmp"
    GREEDY_BESTFIRST = "greedy_bestfirst"
    COVERAGE_GREEDY = "coverage_greedy"


class TargetTypes(str, Enum):
    """Which look-at kinds become coverage targets."""

    ROI_UNK = "roi_unk"
    PRIOR_INFL = "prior_infl"
    INFL_ROI_UNK = "infl+roi_unk"


# ---------------------------------------------------------------------------
# Configuration sections
# ---------------------------------------------------------------------------


class WorldSettings(BaseModel):
    model_config = ConfigDict(validate_assignment=True)

    resolution: float = Field(0.01, gt=0, description="Voxel edge length in meters")
    unknown_blocks: bool = Field(False, description="Treat Unknown voxels as visibility obstacles")
    prior_radius: float = Field(0.10, gt=0, description="ROI inflation radius in meters")


class SensorConfig(BaseModel):
    """Depth camera model shared by view sampling, coverage and rendering."""

    model_config = ConfigDict(validate_assignment=True)

    min_range: float = Field(0.15, ge=0, description="Closest useful range in meters")
    max_range: float = Field(0.60, gt=0, description="Farthest useful range in meters")
    fov_deg: float = Field(60.0, gt=0, lt=180, description="Full horizontal field of view in degrees")
    width: int = Field(64, gt=0, description="Ray bundle width")
    height: int = Field(48, gt=0, description="Ray bundle height")
    noise_sigma: float = Field(0.003, ge=0, description="Gaussian range noise std in meters")

    @model_validator(mode='after')
    def validate_ranges(self):
        if self.min_range >= self.max_range:
            raise ValueError(f"min_range {self.min_range} must be below max_range {self.max_range}")
        return self


class SamplingSettings(BaseModel):
    lookat_budget: int = Field(60, gt=0)
    views_per_cycle: int = Field(30, gt=0)
    attempts_per_view: int = Field(50, gt=0)
    angle_thresh_deg: float = Field(15.0, ge=0)
    joint_thresh: float = Field(0.2, ge=0)
    workers: int = Field(4, ge=1)


class GraphSettings(BaseModel):
    sparsity: Sparsity = Sparsity.SPA


class OptimizerSettings(BaseModel):
    time_limit: float = Field(20.0, gt=0, description="Wall-clock solver limit in seconds")
    node_limit: Optional[int] = Field(50_000, gt=0, description="Deterministic search-node budget")
    edge_policy: EdgePolicy = EdgePolicy.METRIC_CLOSURE


class MissionConfig(BaseModel):
    """Closed-loop budgets; all times except the solver limit are simulated seconds."""

    segment_budget: float = Field(60.0, ge=0)
    replan_interval: float = Field(12.0, gt=0)
    arm_speed: float = Field(0.25, gt=0, description="Joint-cost units per simulated second")
    sensing_time: float = Field(0.5, ge=0)
    inter_segment_time: float = Field(5.0, ge=0)
    planner: PlannerKind = PlannerKind.GO_VMP
    target_types: TargetTypes = TargetTypes.INFL_ROI_UNK
    parallel_mapping: bool = False
    max_chain: int = Field(8, gt=0, description="Longest greedy best-first chain per cycle")
    record_timeline: bool = Field(False, description="Evaluate the map after every planning cycle")


class ScenarioSpec(BaseModel):
    segments: int = Field(16, gt=0)
    fruits_per_segment: int = Field(4, gt=0)
    occlusion_density: float = Field(0.5, ge=0)
    seed: int = 0
    segment_length: float = Field(0.4, gt=0)


class OutputSettings(BaseModel):
    base_dir: str = "data"


class LoggingSettings(BaseModel):
    level: str = "INFO"
    console: bool = True
    file: bool = True

    @field_validator('level')
    @classmethod
    def validate_level(cls, v):
        level = str(v).strip().upper()
        if level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"unknown logging level {v!r}")
        return level


class PlannerSettings(BaseModel):
    """Complete configuration tree; every section has defaults."""

    world: WorldSettings = Field(default_factory=WorldSettings)
    sensor: SensorConfig = Field(default_factory=SensorConfig)
    sampling: SamplingSettings = Field(default_factory=SamplingSettings)
    graph: GraphSettings = Field(default_factory=GraphSettings)
    optimizer: OptimizerSettings = Field(default_factory=OptimizerSettings)
    mission: MissionConfig = Field(default_factory=MissionConfig)
    scenario: ScenarioSpec = Field(default_factory=ScenarioSpec)
    output: OutputSettings = Field(default_factory=OutputSettings)
    logging: LoggingSettings = Field(default_factory=LoggingSettings)


# ---------------------------------------------------------------------------
# solve: instance and solution files
# ---------------------------------------------------------------------------


class PlanInstanceRecord(BaseModel):
    """Instance file read by ``solve``."""

    model_config = ConfigDict(json_schema_extra={"description": "ILP instance: graph, targets, coverage"})

    n: int = Field(..., ge=1, description="Real view count; vertex 0 is the current pose")
    edges: List[Tuple[int, int, float]] = Field(default_factory=list, description="Undirected [i, j, m_ij]")
    targets: List[TargetId] = Field(default_factory=list)
    coverage: List[Tuple[int, TargetId]] = Field(default_factory=list, description="[view, target] pairs with r=1")
    start: int = 0
    edge_policy: EdgePolicy = EdgePolicy.METRIC_CLOSURE
    time_limit: float = Field(20.0, gt=0)

    @field_validator('start')
    @classmethod
    def validate_start(cls, v):
        if v != 0:
            raise ValueError("start must be vertex 0")
        return v

    @model_validator(mode='after')
    def validate_references(self):
        for i, j, weight in self.edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) references a vertex outside 0..{self.n - 1}")
            if i == j:
                raise ValueError(f"self loop on vertex {i}")
            if weight <= 0:
                raise ValueError(f"edge ({i}, {j}) has non-positive cost {weight}")
        known = set(self.targets)
        if len(known) != len(self.targets):
            raise ValueError("duplicate target identifiers")
        for view, target in self.coverage:
            if not 0 <= view < self.n:
                raise ValueError(f"coverage entry references view {view} outside 0..{self.n - 1}")
            if target not in known:
                raise ValueError(f"coverage entry references unknown target {target!r}")
        return self


class SolutionRecord(BaseModel):
    status: str
    objective: Optional[float] = None
    ordered_path: List[int] = Field(default_factory=list)
    selected_views: List[int] = Field(default_factory=list)
    new_views: List[int] = Field(default_factory=list, description="Selected views other than the start vertex")
    executed_path: List[int] = Field(default_factory=list, description="Path expanded through the sparse graph")
    dropped_targets: List[TargetId] = Field(default_factory=list)
    nodes: int = 0


# ---------------------------------------------------------------------------
# Graph dumps and scenario files
# ---------------------------------------------------------------------------


class VertexRecord(BaseModel):
    position: Tuple[float, float, float]
    direction: Tuple[float, float, float]
    q: List[float]
    target_key: Optional[Tuple[int, int, int]] = None
    kind: Optional[str] = None


class GraphDumpRecord(BaseModel):
    vertices: List[VertexRecord]
    edges: List[Tuple[int, int, float]] = Field(default_factory=list)
    sparsity_k: Optional[int] = None
    targets: List[Tuple[int, int, int]] = Field(default_factory=list, description="Target voxel keys")
    coverage: List[Tuple[int, int]] = Field(default_factory=list, description="[vertex, target index] pairs")

    @model_validator(mode='after')
    def validate_references(self):
        n = len(self.vertices)
        if n == 0:
            raise ValueError("graph dump has no vertices")
        for i, j, weight in self.edges:
            if not (0 <= i < n and 0 <= j < n) or i == j or weight <= 0:
                raise ValueError(f"invalid edge ({i}, {j}, {weight})")
        for view, target in self.coverage:
            if not (0 <= view < n and 0 <= target < len(self.targets)):
                raise ValueError(f"invalid coverage entry ({view}, {target})")
        return self


class FruitRecord(BaseModel):
    center: Tuple[float, float, float]
    radii: Tuple[float, float, float]

    @field_validator('radii')
    @classmethod
    def validate_radii(cls, v):
        if min(v) <= 0:
            raise ValueError("fruit radii must be positive")
        return v


class BoxRecord(BaseModel):
    min: Tuple[float, float, float]
    max: Tuple[float, float, float]

    @model_validator(mode='after')
    def validate_extent(self):
        if any(lo >= hi for lo, hi in zip(self.min, self.max)):
            raise ValueError(f"degenerate box {self.min} .. {self.max}")
        return self


class ScenarioRecord(BaseModel):
    """Scenario file used by ``simulate --scenario``."""

    name: str = "scenario"
    seed: int = 0
    segments: int = Field(1, gt=0)
    segment_length: float = Field(0.4, gt=0)
    bounds: BoxRecord
    fruits: List[FruitRecord] = Field(default_factory=list)
    occluders: List[BoxRecord] = Field(default_factory=list)
    placement_failures: int = 0


# ---------------------------------------------------------------------------
# Mission reports
# ---------------------------------------------------------------------------


class MetricsRow(BaseModel):
    """One CSV row; segment is an index or ``"all"`` for the aggregate."""

    scenario: str
    segment: Union[int, str]
    planner: str
    seed: int
    detected_fruits: int = Field(..., ge=0)
    surface_coverage_pct: float = Field(..., ge=0, le=100)
    volume_accuracy_pct: float = Field(..., ge=0, le=100)
    motion_cost: float = Field(..., ge=0)
    planning_s: float = Field(0.0, ge=0)
    map_exec_s: float = Field(0.0, ge=0)
    views_executed: int = Field(..., ge=0)

    def to_csv_dict(self) -> Dict[str, Any]:
        data = self.model_dump()
        return {column: data[column] for column in CSV_COLUMNS}


class TimelinePoint(BaseModel):
    """Map quality of one segment at the end of a planning cycle."""

    segment: int
    cycle: int = Field(..., ge=0)
    time: float = Field(..., ge=0, description="Simulated seconds since the segment started")
    detected_fruits: int = Field(..., ge=0)
    surface_coverage_pct: float = Field(..., ge=0, le=100)
    volume_accuracy_pct: float = Field(..., ge=0, le=100)
    motion_cost: float = Field(..., ge=0)
    views_executed: int = Field(..., ge=0)

    def to_csv_dict(self) -> Dict[str, Any]:
        data = self.model_dump()
        return {column: data[column] for column in TIMELINE_COLUMNS}


class ExecutedView(BaseModel):
    vertex_id: int
    time: float = Field(..., ge=0, description="Simulated arrival time")
    position: Tuple[float, float, float]
    q: List[float]
    hop_cost: float = Field(..., ge=0)
    observed: bool = True


class SegmentReport(BaseModel):
    """Outcome of one segment; timestamps are simulated seconds."""

    segment: int
    planner: str
    executed: List[ExecutedView] = Field(default_factory=list)
    motion_cost: float = 0.0
    view_count: int = 0
    plans_issued: int = 0
    optimization_times: List[float] = Field(default_factory=list)
    solver_statuses: List[str] = Field(default_factory=list)
    dropped_targets: int = 0
    aborted_hops: int = 0
    execution_s: float = 0.0
    end_clock: float = 0.0
    roi_voxels: int = 0
    grid_snapshot: Optional[str] = None
    planning_s: Optional[float] = None
    mapping_s: Optional[float] = None
    metrics: Optional[MetricsRow] = None
    timeline: List[TimelinePoint] = Field(default_factory=list)

    @model_validator(mode='after')
    def validate_consistency(self):
        times = [view.time for view in self.executed]
        if any(later < earlier for earlier, later in zip(times, times[1:])):
            raise ValueError("executed view timestamps must be nondecreasing")
        samples = [point.time for point in self.timeline]
        if any(later < earlier for earlier, later in zip(samples, samples[1:])):
            raise ValueError("timeline samples must be in time order")
        self.view_count = sum(1 for view in self.executed if view.observed)
        return self


class MissionReport(BaseModel):
    scenario: str
    planner: str
    seed: int
    segments: List[SegmentReport] = Field(default_factory=list)
    motion_cost: float = 0.0
    total_sim_time: float = 0.0
    metrics: Optional[MetricsRow] = None
    config: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode='after')
    def validate_totals(self):
        self.motion_cost = sum(segment.motion_cost for segment in self.segments)
        return self

    @property
    def view_count(self) -> int:
        return sum(segment.view_count for segment in self.segments)

    def get_statistics(self) -> Dict[str, Any]:
        """Summary statistics across segments."""
        if not self.segments:
            return {"segments": 0, "motion_cost": 0.0, "views": 0}
        statuses: Dict[str, int] = {}
        for segment in self.segments:
            for status in segment.solver_statuses:
                statuses[status] = statuses.get(status, 0) + 1
        return {
            "segments": len(self.segments),
            "motion_cost": round(self.motion_cost, 6),
            "views": self.view_count,
            "plans_issued": sum(segment.plans_issued for segment in self.segments),
            "aborted_hops": sum(segment.aborted_hops for segment in self.segments),
            "solver_status_breakdown": statuses,
            "total_sim_time": round(self.total_sim_time, 6),
        }


def create_instance_from_dict(data: Dict[str, Any]) -> PlanInstanceRecord:
    """Create a validated PlanInstanceRecord from a dictionary."""
    return PlanInstanceRecord.model_validate(data)


def create_settings_from_dict(data: Optional[Dict[str, Any]]) -> PlannerSettings:
    """Create validated PlannerSettings; ``None`` yields all defaults."""
    return PlannerSettings.model_validate(data or {})
