import pytest
from pydantic import ValidationError

from src.schemas import (
    CSV_COLUMNS,
    BoxRecord,
    ExecutedView,
    FruitRecord,
    MetricsRow,
    MissionReport,
    SegmentReport,
    Sparsity,
    TimelinePoint,
    create_instance_from_dict,
)


def executed(time, observed=True, cost=0.0):
    return ExecutedView(vertex_id=0, time=time, position=(0.0, 0.0, 0.0), q=[0.0] * 5,
                        hop_cost=cost, observed=observed)


class TestInstanceRecord:
    def test_valid_instance(self):
        record = create_instance_from_dict({"n": 2, "edges": [[0, 1, 1.0]], "targets": ["a"],
                                            "coverage": [[1, "a"]]})
        assert record.start == 0 and record.time_limit == 20.0

    @pytest.mark.parametrize("data", [
        {"n": 2, "edges": [[0, 2, 1.0]]},
        {"n": 2, "edges": [[1, 1, 1.0]]},
        {"n": 2, "edges": [[0, 1, 0.0]]},
        {"n": 2, "targets": [1, 1]},
        {"n": 2, "targets": [1], "coverage": [[2, 1]]},
        {"n": 2, "targets": [1], "coverage": [[1, 9]]},
        {"n": 2, "start": 1},
        {"n": 0},
    ])
    def test_invalid_instances(self, data):
        with pytest.raises(ValidationError):
            create_instance_from_dict(data)


def test_sparsity_neighbor_counts():
    assert [s.k for s in Sparsity] == [None, 10, 5]


def test_geometry_records_reject_degenerate_shapes():
    with pytest.raises(ValidationError):
        FruitRecord(center=(0, 0, 0), radii=(0.04, 0.0, 0.05))
    with pytest.raises(ValidationError):
        BoxRecord(min=(0, 0, 0), max=(1, 0, 1))


class TestReports:
    def test_view_count_counts_observations(self):
        report = SegmentReport(segment=0, planner="go_vmp",
                               executed=[executed(0.5), executed(2.0, observed=False, cost=0.3), executed(3.0)])
        assert report.view_count == 2

    def test_timestamps_must_not_decrease(self):
        with pytest.raises(ValidationError):
            SegmentReport(segment=0, planner="go_vmp", executed=[executed(2.0), executed(1.0)])

    def test_mission_totals_and_statistics(self):
        segments = [
            SegmentReport(segment=0, planner="go_vmp", executed=[executed(0.5)], motion_cost=1.5,
                          plans_issued=2, solver_statuses=["Optimal", "FeasibleTimeout"]),
            SegmentReport(segment=1, planner="go_vmp", executed=[executed(0.5)], motion_cost=0.5,
                          plans_issued=1, solver_statuses=["Optimal"]),
        ]
        report = MissionReport(scenario="s", planner="go_vmp", seed=0, segments=segments)
        stats = report.get_statistics()
        assert report.motion_cost == pytest.approx(2.0)
        assert stats["views"] == 2
        assert stats["plans_issued"] == 3
        assert stats["solver_status_breakdown"] == {"Optimal": 2, "FeasibleTimeout": 1}

    def test_empty_mission_statistics(self):
        assert MissionReport(scenario="s", planner="go_vmp", seed=0).get_statistics()["segments"] == 0


def test_metrics_row_csv_order():
    row = MetricsRow(scenario="s", segment="all", planner="go_vmp", seed=1, detected_fruits=2,
                     surface_coverage_pct=50.0, volume_accuracy_pct=80.0, motion_cost=1.0, views_executed=4)
    assert list(row.to_csv_dict()) == CSV_COLUMNS
    with pytest.raises(ValidationError):
        row.model_validate({**row.model_dump(), "surface_coverage_pct": 120.0})


def test_timeline_must_be_in_time_order():
    point = dict(segment=0, detected_fruits=0, surface_coverage_pct=0.0, volume_accuracy_pct=0.0,
                 motion_cost=0.0, views_executed=1)
    with pytest.raises(ValidationError):
        SegmentReport(segment=0, planner="go_vmp", timeline=[TimelinePoint(cycle=0, time=9.0, **point),
                                                             TimelinePoint(cycle=1, time=4.0, **point)])
