"""
View-motion graph: sampled views as vertices, collision-free joint-space
motions as weighted undirected edges, plus the view-to-target coverage matrix.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np

from .frontier_extraction import LookAtKind
from .schemas import GraphDumpRecord, SensorConfig, VertexRecord
from .utils.logger import get_logger
from .view_sampling import JointConfig, MotionModel, View, ViewPose, is_similar
from .world_model import VoxelGrid, raycast

logger = get_logger(__name__)


@dataclass
class CoverageMatrix:
    """Boolean visibility table: rows are views, columns are targets."""

    targets: List
    visible: np.ndarray
    view_ids: Optional[List[int]] = None

    def __post_init__(self):
        self.visible = np.asarray(self.visible, dtype=bool)
        if self.visible.ndim != 2 or self.visible.shape[1] != len(self.targets):
            raise ValueError(f"coverage shape {self.visible.shape} does not match {len(self.targets)} targets")
        if self.view_ids is not None and len(self.view_ids) != self.visible.shape[0]:
            raise ValueError("view_ids must match the number of coverage rows")

    @property
    def n_views(self) -> int:
        return self.visible.shape[0]

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    def covering_views(self, target_index: int) -> List[int]:
        return [int(i) for i in np.flatnonzero(self.visible[:, target_index])]

    def targets_of(self, row: int) -> List[int]:
        return [int(c) for c in np.flatnonzero(self.visible[row])]

    def restrict(self, target_indices: Sequence[int]) -> "CoverageMatrix":
        keep = list(target_indices)
        return CoverageMatrix([self.targets[c] for c in keep], self.visible[:, keep], self.view_ids)

    def select_rows(self, rows: Sequence[int]) -> "CoverageMatrix":
        rows = list(rows)
        ids = [self.view_ids[r] for r in rows] if self.view_ids is not None else rows
        return CoverageMatrix(list(self.targets), self.visible[rows, :], ids)

    def pairs(self) -> List[Tuple[int, int]]:
        return [(int(i), int(c)) for i, c in zip(*np.nonzero(self.visible))]


class ViewMotionGraph:
    """Vertices are views; vertex 0 is the start configuration.

    Edges persist across planning cycles; trajectory validity is cached per
    vertex pair and rechecked against the live map only at execution time.
    """

    def __init__(self, start: View, model: MotionModel, sparsity_k: Optional[int] = 5,
                 angle_thresh_deg: float = 15.0, joint_thresh: float = 0.2):
        self.model = model
        self.sparsity_k = sparsity_k
        self.angle_thresh_deg = angle_thresh_deg
        self.joint_thresh = joint_thresh
        self.vertices: List[View] = [start]
        self.graph = nx.Graph()
        self.graph.add_node(0)
        self._validity: Dict[Tuple[int, int], bool] = {}

    @property
    def n(self) -> int:
        return len(self.vertices)

    def pose(self, vertex: int) -> ViewPose:
        return self.vertices[vertex][0]

    def config(self, vertex: int) -> JointConfig:
        return self.vertices[vertex][1]

    def edges(self) -> List[Tuple[int, int, float]]:
        return sorted((min(i, j), max(i, j), float(w)) for i, j, w in self.graph.edges(data="weight"))

    def weight(self, i: int, j: int) -> float:
        return float(self.graph[i][j]["weight"])

    def has_edge(self, i: int, j: int) -> bool:
        return self.graph.has_edge(i, j)

    def neighbors(self, vertex: int) -> List[int]:
        return sorted(self.graph.neighbors(vertex))

    def degree(self, vertex: int) -> int:
        return self.graph.degree(vertex)

    def isolated(self) -> List[int]:
        return sorted(v for v in self.graph.nodes if self.graph.degree(v) == 0)

    def reachable_from(self, vertex: int) -> Set[int]:
        return set(nx.node_connected_component(self.graph, vertex))

    def add_edge(self, i: int, j: int, weight: float):
        self.graph.add_edge(i, j, weight=float(weight))

    def remove_edge(self, i: int, j: int):
        """Drop an edge found blocked at execution; the pair is never reconnected."""
        if self.graph.has_edge(i, j):
            self.graph.remove_edge(i, j)
        self._validity[(min(i, j), max(i, j))] = False

    def trajectory_ok(self, i: int, j: int, grid: VoxelGrid) -> bool:
        pair = (min(i, j), max(i, j))
        cached = self._validity.get(pair)
        if cached is None:
            cached = self.model.trajectory_valid(self.config(i), self.config(j), grid)
            self._validity[pair] = cached
        return cached


def add_vertex(graph: ViewMotionGraph, view: View) -> Optional[int]:
    """Append ``view`` unless it is similar to an existing vertex; returns its id or None."""
    for existing in graph.vertices:
        if is_similar(existing, view, graph.angle_thresh_deg, graph.joint_thresh, graph.model):
            return None
    graph.vertices.append(view)
    vertex = len(graph.vertices) - 1
    graph.graph.add_node(vertex)
    return vertex


def distance_matrix(graph: ViewMotionGraph, model: Optional[MotionModel] = None) -> np.ndarray:
    model = model or graph.model
    n = graph.n
    distances = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            distances[i, j] = distances[j, i] = model.joint_distance(graph.config(i), graph.config(j))
    return distances


def connect_knn(graph: ViewMotionGraph, grid: VoxelGrid, model: Optional[MotionModel] = None,
                k: Optional[int] = 5) -> ViewMotionGraph:
    """Connect every vertex to its k nearest collision-free neighbors in joint space.

    Candidates are ordered by (distance, vertex id); ``k=None`` connects all
    valid pairs. Existing edges are kept, so repeated calls only add edges.
    """
    if model is not None:
        graph.model = model
    n = graph.n
    if n < 2:
        return graph
    distances = distance_matrix(graph)
    before = graph.graph.number_of_edges()

    for i in range(n):
        order = sorted((j for j in range(n) if j != i), key=lambda j: (distances[i, j], j))
        taken = 0
        for j in order:
            if k is not None and taken >= k:
                break
            if distances[i, j] <= 0.0:
                continue
            if graph.trajectory_ok(i, j, grid):
                graph.add_edge(i, j, distances[i, j])
                taken += 1

    isolated = graph.isolated()
    logger.debug(
        f"k-NN (k={k}): {n} vertices, {graph.graph.number_of_edges() - before} new edges, "
        f"{len(isolated)} isolated"
    )
    return graph


def build_coverage(graph: ViewMotionGraph, grid: VoxelGrid, targets: Sequence, sensor: SensorConfig,
                   vertex_ids: Optional[Sequence[int]] = None, unknown_blocks: bool = False) -> CoverageMatrix:
    """r[i, c] = 1 iff target voxel c is within range and the fov cone of view i and the ray is clear.

    ``targets`` are voxel keys; rows follow ``vertex_ids`` (all vertices by default).
    """
    ids = list(range(graph.n)) if vertex_ids is None else list(vertex_ids)
    targets = [tuple(t) for t in targets]
    centers = [grid.center_of(t) for t in targets]
    cos_half_fov = math.cos(math.radians(sensor.fov_deg) / 2.0)

    visible = np.zeros((len(ids), len(targets)), dtype=bool)
    for row, vertex in enumerate(ids):
        pose = graph.pose(vertex)
        for col, center in enumerate(centers):
            offset = center - pose.position
            distance = float(np.linalg.norm(offset))
            if distance < sensor.min_range or distance > sensor.max_range:
                continue
            if float(np.dot(offset / distance, pose.direction)) < cos_half_fov - 1e-12:
                continue
            if raycast(grid, pose.position, center, None, unknown_blocks).visible:
                visible[row, col] = True
    return CoverageMatrix(targets, visible, ids)


def graph_to_record(graph: ViewMotionGraph, coverage: Optional[CoverageMatrix] = None) -> GraphDumpRecord:
    vertices = [
        VertexRecord(
            position=tuple(float(v) for v in pose.position),
            direction=tuple(float(v) for v in pose.direction),
            q=[float(v) for v in config.q],
            target_key=pose.target_key,
            kind=pose.kind.value if pose.kind else None,
        )
        for pose, config in graph.vertices
    ]
    targets, pairs = [], []
    if coverage is not None:
        targets = [tuple(t) for t in coverage.targets]
        ids = coverage.view_ids or list(range(coverage.n_views))
        pairs = [(ids[row], col) for row, col in coverage.pairs()]
    return GraphDumpRecord(vertices=vertices, edges=graph.edges(), sparsity_k=graph.sparsity_k,
                           targets=targets, coverage=pairs)


def graph_from_record(record: GraphDumpRecord, model: MotionModel) -> Tuple[ViewMotionGraph, CoverageMatrix]:
    """Rebuild a graph and its coverage matrix from a dump; coverage rows are all vertices."""
    views = [
        (
            ViewPose(np.asarray(v.position), np.asarray(v.direction), v.target_key,
                     LookAtKind(v.kind) if v.kind else None),
            JointConfig.of(v.q),
        )
        for v in record.vertices
    ]
    graph = ViewMotionGraph(views[0], model, record.sparsity_k)
    for view in views[1:]:
        graph.vertices.append(view)
        graph.graph.add_node(len(graph.vertices) - 1)
    for i, j, weight in record.edges:
        graph.add_edge(i, j, weight)
    visible = np.zeros((graph.n, len(record.targets)), dtype=bool)
    for vertex, target in record.coverage:
        visible[vertex, target] = True
    return graph, CoverageMatrix([tuple(t) for t in record.targets], visible, list(range(graph.n)))
