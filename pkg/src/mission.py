"""
Closed-loop mapping missions on a simulated clock.

Each segment repeats: extract look-ats, sample views into the persistent
graph, connect k-NN, choose coverage targets, plan, then execute hop by hop
with an observation at every planned view. Plans are issued at most every
``replan_interval`` simulated seconds and never after ``segment_budget``;
the path in flight when the budget runs out is completed.
With ``mission.record_timeline`` the map is scored against ground truth
after every planning cycle.
"""

import time
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Collection, List, Optional, Sequence, Set

import numpy as np
from tqdm import tqdm

from .errors import InvalidInputError
from .evaluation import evaluate
from .frontier_extraction import LookAtKind, LookAtVoxel, extract_lookats, select_targets
from .graph import CoverageMatrix, ViewMotionGraph, add_vertex, build_coverage, connect_knn
from .optimizer import (
    PlanProblem,
    SolveStatus,
    build_model,
    coverage_greedy_plan,
    extract_path,
    greedy_warm_start,
    solve_exact,
)
from .schemas import (
    ExecutedView,
    MetricsRow,
    MissionConfig,
    MissionReport,
    PlannerKind,
    PlannerSettings,
    SegmentReport,
    TargetTypes,
    TimelinePoint,
)
from .sim_world import GroundTruth, Scenario, compute_ground_truth, render_depth
from .utils.logger import (
    get_logger,
    log_segment_complete,
    log_segment_progress,
    log_segment_start,
)
from .view_sampling import GantryWristModel, JointConfig, ViewPose, sample_views
from .world_model import VoxelGrid, VoxelState, integrate_observation

logger = get_logger(__name__)

TARGET_KINDS = {
    TargetTypes.ROI_UNK: (LookAtKind.ROI_UNK,),
    TargetTypes.PRIOR_INFL: (LookAtKind.PRIOR,),
    TargetTypes.INFL_ROI_UNK: (LookAtKind.ROI_UNK, LookAtKind.PRIOR),
}


def cycle_seed(seed: int, segment: int, cycle: int) -> int:
    return int(np.random.SeedSequence([seed, segment, cycle]).generate_state(1)[0])


@dataclass
class CyclePlan:
    hops: List[int]
    views: Set[int]
    status: str
    dropped: int = 0


def _new_targets(coverage: CoverageMatrix, row: Optional[int], covered: Collection[int]) -> List[int]:
    if row is None:
        return []
    return [c for c in coverage.targets_of(row) if c not in covered]


def greedy_bestfirst_step(grid: Optional[VoxelGrid], graph: ViewMotionGraph, current: int,
                          coverage: CoverageMatrix, covered: Collection[int] = (),
                          exclude: Collection[int] = ()) -> Optional[int]:
    """Neighbor of ``current`` maximizing new targets / (1 + motion cost); None means stay.

    Ties go to the lower vertex id. Neighbors whose motion is blocked in
    ``grid`` are skipped.
    """
    row_of = {vertex: row for row, vertex in enumerate(coverage.view_ids or range(coverage.n_views))}
    best_key, best = None, None
    for j in graph.neighbors(current):
        if j in exclude:
            continue
        if grid is not None and not graph.model.trajectory_valid(graph.config(current), graph.config(j), grid):
            continue
        gain = len(_new_targets(coverage, row_of.get(j), covered))
        key = (-gain / (1.0 + graph.weight(current, j)), j)
        if best_key is None or key < best_key:
            best_key, best = key, j
    return best


class Mapper:
    """Renders and fuses observations, inline or on one background worker.

    Callers must ``wait()`` before reading the grid; both modes then see the
    same map.
    """

    def __init__(self, scenario: Scenario, grid: VoxelGrid, settings: PlannerSettings,
                 seed: int, segment: int, parallel: bool = False):
        self.scenario = scenario
        self.grid = grid
        self.sensor = settings.sensor
        self.seed = seed
        self.segment = segment
        self.mapping_s = 0.0
        self._executor = ThreadPoolExecutor(max_workers=1) if parallel else None
        self._pending: List[Future] = []

    def _integrate(self, pose: ViewPose, index: int):
        start = time.perf_counter()
        rng = np.random.default_rng([self.seed, self.segment, index])
        hits = render_depth(self.scenario, pose, self.sensor, rng=rng)
        integrate_observation(self.grid, pose.position, hits)
        self.mapping_s += time.perf_counter() - start

    def observe(self, pose: ViewPose, index: int):
        if self._executor is None:
            self._integrate(pose, index)
        else:
            self._pending.append(self._executor.submit(self._integrate, pose, index))

    def wait(self):
        for future in self._pending:
            future.result()
        self._pending.clear()

    def close(self):
        self.wait()
        if self._executor is not None:
            self._executor.shutdown()


class MissionRunner:
    def __init__(self, settings: Optional[PlannerSettings] = None, snapshot_dir: Optional[Path] = None):
        self.settings = settings or PlannerSettings()
        self.snapshot_dir = Path(snapshot_dir) if snapshot_dir else None
        self.kinds = TARGET_KINDS[self.settings.mission.target_types]

    # -- planning ----------------------------------------------------------

    def _coverage_plan(self, grid: VoxelGrid, graph: ViewMotionGraph, current: int,
                       targets: Sequence[LookAtVoxel], lookats: Sequence[LookAtVoxel], seed: int) -> CyclePlan:
        settings = self.settings
        ids = sorted(graph.reachable_from(current))
        coverage = build_coverage(graph, grid, [t.key for t in targets], settings.sensor, ids,
                                  settings.world.unknown_blocks)
        problem = PlanProblem.from_graph(graph, coverage, current, settings.optimizer.edge_policy,
                                         settings.optimizer.time_limit)
        dropped = len(problem.dropped_targets)

        if settings.mission.planner == PlannerKind.GO_VMP:
            solution = solve_exact(build_model(problem), rng_seed=seed, node_limit=settings.optimizer.node_limit)
            if not solution.status.has_path:
                logger.warning(f"Solver returned {solution.status.value}; using the greedy plan")
                solution = greedy_warm_start(problem)
        else:
            solution = coverage_greedy_plan(problem)
        status = solution.status.value
        logger.debug(f"Plan over {problem.n} views / {problem.coverage.n_targets} targets: "
                     f"{status}, objective {solution.objective}, {solution.nodes} nodes")

        if solution.status == SolveStatus.TRIVIAL_STAY:
            step = self._exploration_hop(grid, graph, current, lookats)
            hops = [step] if step is not None else []
            return CyclePlan(hops, set(hops), status, dropped)
        if not solution.status.has_path:
            return CyclePlan([], set(), status, dropped)

        path = extract_path(solution, problem)
        ids = problem.vertex_ids
        return CyclePlan([ids[k] for k in path[1:]], {ids[k] for k in solution.ordered_path[1:]}, status, dropped)

    def _exploration_hop(self, grid: VoxelGrid, graph: ViewMotionGraph, current: int,
                         lookats: Sequence[LookAtVoxel]) -> Optional[int]:
        if not lookats:
            return None
        coverage = build_coverage(graph, grid, [l.key for l in lookats], self.settings.sensor,
                                  graph.neighbors(current), self.settings.world.unknown_blocks)
        return greedy_bestfirst_step(grid, graph, current, coverage)

    def _bestfirst_plan(self, grid: VoxelGrid, graph: ViewMotionGraph, current: int,
                        targets: Sequence[LookAtVoxel]) -> CyclePlan:
        ids = sorted(graph.reachable_from(current))
        coverage = build_coverage(graph, grid, [t.key for t in targets], self.settings.sensor, ids,
                                  self.settings.world.unknown_blocks)
        row_of = {vertex: row for row, vertex in enumerate(ids)}
        covered: Set[int] = set()
        hops: List[int] = []
        head = current
        for _ in range(self.settings.mission.max_chain):
            step = greedy_bestfirst_step(grid, graph, head, coverage, covered, exclude={current, *hops})
            if step is None:
                break
            gain = _new_targets(coverage, row_of.get(step), covered)
            if not gain and hops:
                break
            hops.append(step)
            covered.update(gain)
            head = step
            if not gain:
                break
        return CyclePlan(hops, set(hops), SolveStatus.HEURISTIC.value)

    def plan_cycle(self, grid: VoxelGrid, graph: ViewMotionGraph, workspace, current: int,
                   seed: int) -> Optional[CyclePlan]:
        """One planning cycle; None when there is nothing left to explore or no motion available."""
        settings = self.settings
        sampling = settings.sampling
        lookats = extract_lookats(grid, sampling.lookat_budget, seed, settings.world.prior_radius,
                                  workers=sampling.workers)
        if not lookats:
            return None
        views = sample_views(grid, lookats, workspace, settings.sensor, graph.model, sampling.views_per_cycle,
                             seed, sampling.attempts_per_view, settings.world.unknown_blocks, sampling.workers)
        added = sum(1 for view in views if add_vertex(graph, view) is not None)
        connect_knn(graph, grid, graph.model, settings.graph.sparsity.k)
        targets = select_targets(lookats, self.kinds)
        logger.debug(f"Cycle: {len(lookats)} look-ats, {len(views)} views sampled, {added} added, "
                     f"{graph.n} vertices, {len(targets)} targets")
        if graph.degree(current) == 0:
            return None

        if settings.mission.planner == PlannerKind.GREEDY_BESTFIRST:
            return self._bestfirst_plan(grid, graph, current, targets or lookats)
        return self._coverage_plan(grid, graph, current, targets, lookats, seed)

    # -- execution ---------------------------------------------------------

    def run_segment(self, scenario: Scenario, grid: VoxelGrid, segment: int, seed: int,
                    start_config: Optional[JointConfig] = None,
                    ground_truth: Optional[GroundTruth] = None) -> SegmentReport:
        settings = self.settings
        mission = settings.mission
        workspace = scenario.segment_workspace(segment)
        model = GantryWristModel(workspace)
        if start_config is None:
            start_config = scenario.start_config(segment, model)
        if start_config is None or not model.config_valid(start_config, grid):
            raise InvalidInputError(f"segment {segment}: start configuration is outside the workspace or blocked")

        graph = ViewMotionGraph((model.forward(start_config), start_config), model,
                                settings.graph.sparsity.k, settings.sampling.angle_thresh_deg,
                                settings.sampling.joint_thresh)
        mapper = Mapper(scenario, grid, settings, seed, segment, mission.parallel_mapping)
        log_segment_start(segment, mission.planner.value, len(scenario.fruits_in_segment(segment)))

        executed: List[ExecutedView] = []
        statuses: List[str] = []
        optimization_times: List[float] = []
        timeline: List[TimelinePoint] = []
        fruits = ground_truth.in_segment(segment) if ground_truth is not None else None
        clock = execution_s = planning_s = motion = 0.0
        dropped = aborted = 0
        current, observations, cycle = 0, 0, 0

        def record(vertex: int, hop_cost: float, observed: bool):
            pose, config = graph.vertices[vertex]
            executed.append(ExecutedView(vertex_id=vertex, time=clock, position=tuple(float(v) for v in pose.position),
                                         q=[float(v) for v in config.q], hop_cost=hop_cost, observed=observed))

        try:
            mapper.observe(graph.pose(0), observations)
            observations += 1
            clock += mission.sensing_time
            execution_s += mission.sensing_time
            record(0, 0.0, True)

            while clock < mission.segment_budget:
                mapper.wait()
                started = time.perf_counter()
                plan = self.plan_cycle(grid, graph, workspace, current, cycle_seed(seed, segment, cycle))
                planning_s += time.perf_counter() - started
                cycle += 1
                if plan is None:
                    logger.info(f"Segment {segment}: exploration finished at t={clock:.2f}s")
                    break
                last_optimization = clock
                optimization_times.append(clock)
                statuses.append(plan.status)
                dropped += plan.dropped
                if not plan.hops:
                    logger.info(f"Segment {segment}: no executable plan ({plan.status}) at t={clock:.2f}s")
                    break

                for target in plan.hops:
                    mapper.wait()
                    if not model.trajectory_valid(graph.config(current), graph.config(target), grid):
                        graph.remove_edge(current, target)
                        aborted += 1
                        logger.warning(f"Segment {segment}: hop {current}->{target} blocked, replanning")
                        break
                    cost = model.joint_distance(graph.config(current), graph.config(target))
                    travel = cost / mission.arm_speed
                    clock += travel
                    execution_s += travel
                    motion += cost
                    observed = target in plan.views
                    if observed:
                        mapper.observe(graph.pose(target), observations)
                        observations += 1
                        clock += mission.sensing_time
                        execution_s += mission.sensing_time
                    current = target
                    record(target, cost, observed)
                    if clock < mission.segment_budget and clock - last_optimization >= mission.replan_interval:
                        break

                if fruits is not None and mission.record_timeline:
                    mapper.wait()
                    detected, coverage_pct, volume_pct = evaluate(grid, fruits)
                    timeline.append(TimelinePoint(
                        segment=segment, cycle=cycle - 1, time=clock, detected_fruits=detected,
                        surface_coverage_pct=coverage_pct, volume_accuracy_pct=volume_pct,
                        motion_cost=motion, views_executed=observations,
                    ))

                next_optimization = last_optimization + mission.replan_interval
                if clock < next_optimization:
                    clock = next_optimization if next_optimization < mission.segment_budget \
                        else max(clock, mission.segment_budget)
                log_segment_progress(segment, clock, mission.segment_budget, observations)
        finally:
            mapper.close()

        metrics = None
        if fruits is not None:
            detected, coverage_pct, volume_pct = evaluate(grid, fruits)
            metrics = MetricsRow(
                scenario=scenario.name, segment=segment, planner=mission.planner.value, seed=seed,
                detected_fruits=detected, surface_coverage_pct=coverage_pct, volume_accuracy_pct=volume_pct,
                motion_cost=motion, planning_s=planning_s, map_exec_s=mapper.mapping_s + execution_s,
                views_executed=observations,
            )

        snapshot = None
        if self.snapshot_dir is not None:
            self.snapshot_dir.mkdir(parents=True, exist_ok=True)
            snapshot = f"{scenario.name}_seg{segment:02d}.txt"
            (self.snapshot_dir / snapshot).write_text(grid.dump_text(), encoding="utf-8")

        log_segment_complete(segment, observations, motion, clock)
        return SegmentReport(
            segment=segment,
            planner=mission.planner.value,
            executed=executed,
            motion_cost=motion,
            plans_issued=len(optimization_times),
            optimization_times=optimization_times,
            solver_statuses=statuses,
            dropped_targets=dropped,
            aborted_hops=aborted,
            execution_s=execution_s,
            end_clock=clock,
            roi_voxels=grid.count_state(VoxelState.ROI),
            grid_snapshot=snapshot,
            planning_s=planning_s,
            mapping_s=mapper.mapping_s,
            metrics=metrics,
            timeline=timeline,
        )

    def run_mission(self, scenario: Scenario, seed: int, ground_truth: Optional[GroundTruth] = None,
                    progress: bool = False, grid: Optional[VoxelGrid] = None) -> MissionReport:
        """Run every segment in order on one shared grid; inter-segment moves cost time, not motion.

        Pass ``grid`` to keep the final map; it should start empty.
        """
        settings = self.settings
        if grid is None:
            grid = VoxelGrid(scenario.bounds, settings.world.resolution)
        truth = ground_truth or compute_ground_truth(scenario, settings.world.resolution)

        segments: List[SegmentReport] = []
        total = 0.0
        for segment in tqdm(range(scenario.segments), desc="segments", disable=not progress):
            report = self.run_segment(scenario, grid, segment, seed, ground_truth=truth)
            segments.append(report)
            total += report.end_clock
            if segment < scenario.segments - 1:
                total += settings.mission.inter_segment_time

        detected, coverage_pct, volume_pct = evaluate(grid, truth.fruits)
        metrics = MetricsRow(
            scenario=scenario.name, segment="all", planner=settings.mission.planner.value, seed=seed,
            detected_fruits=detected, surface_coverage_pct=coverage_pct, volume_accuracy_pct=volume_pct,
            motion_cost=sum(s.motion_cost for s in segments),
            planning_s=sum(s.planning_s or 0.0 for s in segments),
            map_exec_s=sum((s.mapping_s or 0.0) + s.execution_s for s in segments),
            views_executed=sum(s.view_count for s in segments),
        )
        return MissionReport(
            scenario=scenario.name, planner=settings.mission.planner.value, seed=seed,
            segments=segments, total_sim_time=total, metrics=metrics,
            config=settings.model_dump(mode="json"),
        )


def run_segment(scenario: Scenario, grid: VoxelGrid, start_config: Optional[JointConfig], config: MissionConfig,
                rng_seed: int, settings: Optional[PlannerSettings] = None, segment: int = 0,
                ground_truth: Optional[GroundTruth] = None) -> SegmentReport:
    settings = (settings or PlannerSettings()).model_copy(update={"mission": config})
    return MissionRunner(settings).run_segment(scenario, grid, segment, rng_seed, start_config, ground_truth)


def run_mission(scenario: Scenario, config: Optional[PlannerSettings], seed: int,
                ground_truth: Optional[GroundTruth] = None, progress: bool = False) -> MissionReport:
    return MissionRunner(config).run_mission(scenario, seed, ground_truth, progress)
