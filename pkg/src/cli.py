"""
Command line entry point.

    solve         instance JSON (or a graph dump) -> solution JSON
    simulate      scenario -> mission report JSON + metrics CSV
    ablate        target-type x sparsity sweep, one CSV row per cell
    oracle-check  exact solver vs brute force on random instances

Exit codes: 0 success, 1 invalid input or infeasible problem, 2 internal
consistency error.
"""

import argparse
import sys
import time
from dataclasses import replace
from itertools import product
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError
from tqdm import tqdm

from .config import load_config
from .errors import InfeasibleProblemError, InternalConsistencyError, InvalidInputError
from .graph import graph_from_record
from .mission import MissionRunner
from .optimizer import PlanProblem, brute_force_oracle, extract_path, solve
from .optimizer.instances import random_batch
from .optimizer.oracle import MAX_ORACLE_VIEWS
from .schemas import CSV_COLUMNS, EdgePolicy, PlannerKind, PlannerSettings, Sparsity, TargetTypes
from .sim_world import GroundTruth, Scenario, compute_ground_truth, generate_scenario
from .storage_manager import StorageManager
from .utils.logger import get_logger, log_error_with_context, log_performance, setup_logging
from .view_sampling import GantryWristModel
from .world_model import Box, VoxelGrid

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_INTERNAL = 2

OBJECTIVE_TOLERANCE = 1e-9
METRIC_COLUMNS = ["detected_fruits", "surface_coverage_pct", "volume_accuracy_pct", "motion_cost",
                  "planning_s", "map_exec_s", "views_executed"]


class PlannerArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _non_negative_int(value: str) -> int:
    number = int(value)
    if number < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {value}")
    return number


def build_parser() -> argparse.ArgumentParser:
    parser = PlannerArgumentParser(prog="view-motion-planner",
                                   description="Coverage-constrained view motion planning")
    parser.add_argument('--config', help='Path to config.yaml (default: GOVMP_CONFIG or the repo config)')
    parser.add_argument('--quiet', action='store_true', help='Disable progress bars and console INFO logs')
    sub = parser.add_subparsers(dest='command', metavar='command', parser_class=PlannerArgumentParser)
    sub.required = True

    p = sub.add_parser('solve', help='Solve one instance file or graph dump')
    p.add_argument('instance', nargs='?', help='Instance JSON (n, edges, targets, coverage, ...)')
    p.add_argument('--graph', help='Graph dump JSON with coverage instead of an instance file')
    p.add_argument('--current', type=_non_negative_int, default=0, help='Current vertex in the graph dump')
    p.add_argument('--out', help='Solution JSON path (default: <output>/solutions/<name>_solution.json)')
    p.add_argument('--time-limit', type=float, help='Wall-clock solver limit in seconds')
    p.add_argument('--edge-policy', choices=[e.value for e in EdgePolicy], help='metric_closure or strict_edges')
    p.add_argument('--seed', type=_non_negative_int, default=0, help='Branching tie-break seed')

    p = sub.add_parser('simulate', help='Run a closed-loop mission in the synthetic world')
    p.add_argument('--scenario', help='Scenario JSON; generated from the config when omitted')
    p.add_argument('--planner', choices=[k.value for k in PlannerKind], help='Planner to run')
    p.add_argument('--seed', type=_non_negative_int, default=0, help='Mission seed')
    p.add_argument('--out', help='Report JSON path')
    p.add_argument('--csv', help='Metrics CSV path (one row per segment plus the aggregate)')
    p.add_argument('--dump-map', nargs='?', const='', metavar='PATH',
                   help='Write the final voxel map (default: <output>/maps/<scenario>_<planner>_s<seed>.txt)')
    p.add_argument('--snapshots', action='store_true', help='Write the map after every segment under <output>/maps')
    p.add_argument('--timeline', action='store_true',
                   help='Score the map after every planning cycle into a timeline CSV')
    p.add_argument('--include-timing', action='store_true', help='Keep wall-clock timings in the report JSON')
    p.add_argument('--segments', type=int, help='Override scenario.segments for generated scenarios')
    p.add_argument('--fruits-per-segment', type=int, help='Override scenario.fruits_per_segment')
    p.add_argument('--occlusion-density', type=float, help='Override scenario.occlusion_density')
    p.add_argument('--scenario-seed', type=_non_negative_int, help='Override scenario.seed')
    p.add_argument('--time-limit', type=float, help='Wall-clock solver limit in seconds')
    p.add_argument('--edge-policy', choices=[e.value for e in EdgePolicy])

    p = sub.add_parser('ablate', help='Sweep target types and graph sparsity')
    p.add_argument('--scenario', help='Scenario JSON; generated from the config when omitted')
    p.add_argument('--seeds', type=_non_negative_int, nargs='+', default=[0], help='Mission seeds per cell')
    p.add_argument('--target-types', nargs='+', choices=[t.value for t in TargetTypes],
                   default=[t.value for t in TargetTypes])
    p.add_argument('--sparsity', nargs='+', choices=[s.value for s in Sparsity],
                   default=[s.value for s in Sparsity])
    p.add_argument('--out', help='Ablation CSV path (default: <output>/ablations/ablation.csv)')

    p = sub.add_parser('oracle-check', help='Compare the exact solver against brute force')
    p.add_argument('--n', type=int, help=f'Fixed view count (3..{MAX_ORACLE_VIEWS}); random in 3..8 when omitted')
    p.add_argument('--count', type=int, default=50, help='Number of random instances')
    p.add_argument('--seed', type=_non_negative_int, default=0, help='Instance generator seed')
    p.add_argument('--edge-policy', choices=[e.value for e in EdgePolicy], default=EdgePolicy.METRIC_CLOSURE.value)
    return parser


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _apply_overrides(settings: PlannerSettings, args: argparse.Namespace) -> PlannerSettings:
    optimizer, mission, scenario = settings.optimizer, settings.mission, settings.scenario
    if getattr(args, 'time_limit', None) is not None:
        optimizer = optimizer.model_copy(update={'time_limit': args.time_limit})
    if getattr(args, 'edge_policy', None):
        optimizer = optimizer.model_copy(update={'edge_policy': EdgePolicy(args.edge_policy)})
    if getattr(args, 'planner', None):
        mission = mission.model_copy(update={'planner': PlannerKind(args.planner)})
    if getattr(args, 'timeline', False):
        mission = mission.model_copy(update={'record_timeline': True})
    scenario_updates = {
        key: getattr(args, key)
        for key in ('segments', 'fruits_per_segment', 'occlusion_density')
        if getattr(args, key, None) is not None
    }
    if getattr(args, 'scenario_seed', None) is not None:
        scenario_updates['seed'] = args.scenario_seed
    if scenario_updates:
        scenario = scenario.model_validate({**scenario.model_dump(), **scenario_updates})
    return settings.model_copy(update={'optimizer': optimizer, 'mission': mission, 'scenario': scenario})


def _load_scenario(storage: StorageManager, path: Optional[str],
                   settings: PlannerSettings) -> Tuple[Scenario, GroundTruth]:
    if path:
        scenario = Scenario.from_record(storage.load_scenario(path))
        return scenario, compute_ground_truth(scenario, settings.world.resolution)
    return generate_scenario(settings.scenario, settings.world.resolution)


def _problem_from_graph(storage: StorageManager, path: str, current: int) -> PlanProblem:
    record = storage.load_graph(path)
    positions = np.asarray([v.position for v in record.vertices], dtype=float)
    workspace = Box.from_arrays(positions.min(axis=0) - 1.0, positions.max(axis=0) + 1.0)
    graph, coverage = graph_from_record(record, GantryWristModel(workspace))
    if current >= graph.n:
        raise InvalidInputError(f"{path}: current vertex {current} outside 0..{graph.n - 1}")
    return PlanProblem.from_graph(graph, coverage, current)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_solve(args: argparse.Namespace, settings: PlannerSettings, storage: StorageManager) -> int:
    if bool(args.instance) == bool(args.graph):
        raise InvalidInputError("solve needs exactly one of an instance file or --graph")

    source = args.instance or args.graph
    if args.instance:
        problem = PlanProblem.from_record(storage.load_instance(args.instance))
    else:
        problem = _problem_from_graph(storage, args.graph, args.current)
    overrides = {}
    if args.time_limit is not None:
        overrides["time_limit"] = args.time_limit
    if args.edge_policy:
        overrides["edge_policy"] = EdgePolicy(args.edge_policy)
    if overrides:
        problem = replace(problem, **overrides)

    start = time.perf_counter()
    problem, solution = solve(problem, rng_seed=args.seed, node_limit=settings.optimizer.node_limit)
    log_performance("solve", time.perf_counter() - start,
                    {"status": solution.status.value, "objective": solution.objective, "nodes": solution.nodes})

    executed = None
    if solution.status.has_path:
        executed = extract_path(solution, problem)
        if problem.vertex_ids:
            executed = [problem.vertex_ids[k] for k in executed]
    out = Path(args.out) if args.out else storage.get_solution_path(source)
    storage.save_record(out, solution.to_record(executed))
    print(f"{solution.status.value}: objective={solution.objective} path={solution.ordered_path} -> {out}")

    if not solution.status.has_path:
        raise InfeasibleProblemError(f"{source}: {solution.status.value}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace, settings: PlannerSettings, storage: StorageManager) -> int:
    scenario, truth = _load_scenario(storage, args.scenario, settings)
    planner = settings.mission.planner.value
    logger.info(f"Simulating {scenario.name}: {scenario.segments} segments, {len(scenario.fruits)} fruits, "
                f"planner {planner}, seed {args.seed}")

    grid = VoxelGrid(scenario.bounds, settings.world.resolution)
    snapshot_dir = storage.get_snapshot_dir(scenario.name, planner, args.seed) if args.snapshots else None
    runner = MissionRunner(settings, snapshot_dir=snapshot_dir)
    report = runner.run_mission(scenario, args.seed, truth, progress=not args.quiet, grid=grid)

    out = Path(args.out) if args.out else storage.get_report_path(scenario.name, planner, args.seed)
    storage.save_report(out, report, include_timing=args.include_timing)
    rows = [s.metrics for s in report.segments if s.metrics is not None] + [report.metrics]
    csv_path = Path(args.csv) if args.csv else storage.get_metrics_path(scenario.name, planner, args.seed)
    storage.save_metrics_csv(csv_path, rows)
    if settings.mission.record_timeline:
        points = [point for s in report.segments for point in s.timeline]
        timeline_path = storage.save_timeline_csv(storage.get_timeline_path(scenario.name, planner, args.seed),
                                                  points)
        logger.info(f"Timeline with {len(points)} samples written to {timeline_path}")
    if snapshot_dir is not None:
        logger.info(f"Segment snapshots written to {snapshot_dir}")
    if args.dump_map is not None:
        map_path = storage.save_map(args.dump_map or storage.get_map_path(scenario.name, planner, args.seed),
                                    grid.dump_text())
        logger.info(f"Map written to {map_path}")
    stats = report.get_statistics()
    m = report.metrics
    print(f"{scenario.name} [{planner}] seed={args.seed}: detected={m.detected_fruits} "
          f"coverage={m.surface_coverage_pct:.1f}% volume={m.volume_accuracy_pct:.1f}% "
          f"motion={m.motion_cost:.3f} views={stats['views']}")
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace, settings: PlannerSettings, storage: StorageManager) -> int:
    scenario, truth = _load_scenario(storage, args.scenario, settings)
    cells = list(product(args.target_types, args.sparsity))

    rows = []
    for target_types, sparsity in tqdm(cells, desc="ablation cells", disable=args.quiet):
        cell = settings.model_copy(update={
            'mission': settings.mission.model_copy(update={'target_types': TargetTypes(target_types)}),
            'graph': settings.graph.model_copy(update={'sparsity': Sparsity(sparsity)}),
        })
        metrics = [MissionRunner(cell).run_mission(scenario, seed, truth).metrics.to_csv_dict()
                   for seed in args.seeds]
        frame = pd.DataFrame(metrics, columns=CSV_COLUMNS)
        row = {"scenario": scenario.name, "planner": cell.mission.planner.value,
               "target_types": target_types, "sparsity": sparsity, "seeds": len(args.seeds)}
        row.update({column: float(frame[column].mean()) for column in METRIC_COLUMNS})
        rows.append(row)
        logger.info(f"Cell {target_types}/{sparsity}: coverage {row['surface_coverage_pct']:.1f}%, "
                    f"motion {row['motion_cost']:.3f}")

    out = Path(args.out) if args.out else storage.get_ablation_path(f"{scenario.name}_ablation")
    storage.save_csv(out, pd.DataFrame(rows))
    print(f"{len(rows)} cells -> {out}")
    return EXIT_OK


def cmd_oracle_check(args: argparse.Namespace, settings: PlannerSettings, storage: StorageManager) -> int:
    if args.n is not None and not 3 <= args.n <= MAX_ORACLE_VIEWS:
        raise InvalidInputError(f"--n must be in 3..{MAX_ORACLE_VIEWS}")
    if args.count <= 0:
        raise InvalidInputError("--count must be positive")

    matches = 0
    instances = random_batch(args.seed, args.count, n=args.n, edge_policy=EdgePolicy(args.edge_policy))
    for k, problem in enumerate(tqdm(instances, total=args.count, desc="oracle-check", disable=args.quiet)):
        reference = brute_force_oracle(problem)
        problem, solution = solve(problem, rng_seed=args.seed, node_limit=None)
        if solution.status.has_path:
            extract_path(solution, problem)
        same_status = reference.status.has_path == solution.status.has_path
        same_cost = (reference.objective is None and solution.objective is None) or (
            reference.objective is not None and solution.objective is not None
            and abs(reference.objective - solution.objective) <= OBJECTIVE_TOLERANCE)
        if same_status and same_cost:
            matches += 1
        else:
            logger.warning(f"Instance {k}: solver {solution.status.value}/{solution.objective} "
                           f"vs oracle {reference.status.value}/{reference.objective}")
    print(f"{matches}/{args.count} match")
    return EXIT_OK if matches == args.count else EXIT_INTERNAL


COMMANDS = {
    'solve': cmd_solve,
    'simulate': cmd_simulate,
    'ablate': cmd_ablate,
    'oracle-check': cmd_oracle_check,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        settings = load_config(args.config)
        settings = _apply_overrides(settings, args)
        setup_logging(settings.logging.level, settings.logging.file,
                      settings.logging.console and not args.quiet)
        storage = StorageManager(settings.output.base_dir)
        return COMMANDS[args.command](args, settings, storage)
    except ValidationError as e:
        print(f"error: invalid option value: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (InvalidInputError, InfeasibleProblemError) as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except InternalConsistencyError as e:
        log_error_with_context(e, f"command {args.command}")
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
