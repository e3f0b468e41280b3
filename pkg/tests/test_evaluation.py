import math

import numpy as np
import pytest

from marknav.evaluation import (
    CellStats,
    NoScenarios,
    UnknownVariant,
    emit_report,
    episode_seed,
    format_report_csv,
    format_report_table,
    frechet_to_reference,
    make_convoi_generator,
    pivot_controls,
    run_benchmark,
    score_episode_frames,
    score_frame,
    variant_components,
)
from marknav.geometry import CameraModel, Pose2D, Trajectory, rotation2d
from marknav.pipeline import EpisodeConfig, run_episode
from marknav.trajgen import GeneratorConfig
from marknav.world import (
    Label,
    RobotState,
    ScenarioSpec,
    SemanticGrid,
    TraversabilityView,
    simulate_lidar,
)


def make_scenario(size=20.0, res=0.1, base=Label.SIDEWALK):
    n = int(size / res)
    cells = np.full((n, n), int(base), dtype=np.uint8)
    grid = SemanticGrid(cells=cells, resolution=res, origin=np.zeros(2))
    cam = CameraModel.from_mount(120.0, 120.0, 80.0, 60.0, 160, 120,
                                 mount_xyz=(0.2, 0.0, 0.8), pitch=0.25)
    return ScenarioSpec(
        name="flat", grid=grid, start=Pose2D(2.0, 10.0, 0.0),
        goal=np.array([17.0, 10.0]),
        reference_path=np.array([[2.0, 10.0], [9.0, 10.0], [17.0, 10.0]]),
        camera=cam, camera_mount=(0.2, 0.0, 0.8, 0.25),
    )


# ---------------------------------------------------------------------------
# per-frame scoring

def test_score_all_on_sidewalk():
    sc = make_scenario()
    traj = Trajectory(np.column_stack([np.linspace(0.5, 8.0, 16), np.zeros(16)]))
    score = score_frame(traj, sc.start, sc)
    assert score.traversability_fraction == 1.0
    assert score.traversability_strict == 1


def test_score_partial_traversability_matches_count_oracle():
    sc = make_scenario()
    sc.grid.cells[:, 82:] = int(Label.FLOWERBED)  # bed from x = 8.2 on
    xs = np.linspace(0.5, 8.0, 16)
    traj = Trajectory(np.column_stack([xs, np.zeros(16)]))
    pose = sc.start  # at (2, 10) heading 0 -> world x = 2 + x_local
    expected = sum(1 for x in xs if 2.0 + x < 8.2) / 16.0
    score = score_frame(traj, pose, sc)
    assert score.traversability_fraction == pytest.approx(expected)
    assert expected == 0.75  # 12 of 16 waypoints
    assert score.traversability_strict == 0


def test_score_strict_implies_full_fraction():
    sc = make_scenario()
    rng = np.random.default_rng(2)
    sc.grid.cells[rng.random(sc.grid.cells.shape) < 0.3] = int(Label.GRASS)
    for _ in range(50):
        traj = Trajectory(np.cumsum(rng.uniform(-0.8, 1.2, (10, 2)), axis=0) + [0.5, 0.0])
        score = score_frame(traj, sc.start, sc)
        assert score.traversability_strict <= score.traversability_fraction
        if score.traversability_strict == 1:
            assert score.traversability_fraction == 1.0


def test_frechet_zero_for_exact_reference_window():
    sc = make_scenario()
    # trajectory = first 6 m of the reference, in the robot frame at the start
    world = np.column_stack([np.linspace(2.0, 8.0, 16), np.full(16, 10.0)])
    traj = Trajectory(world - [2.0, 10.0])
    score = score_frame(traj, Pose2D(2.0, 10.0, 0.0), sc)
    assert score.frechet_to_reference < 1e-9


def test_frechet_to_reference_invariant_under_rigid_motion():
    rng = np.random.default_rng(9)
    ref = np.cumsum(rng.uniform(-1, 1.5, (12, 2)), axis=0)
    traj = np.cumsum(rng.uniform(-1, 1.2, (9, 2)), axis=0) + [0.3, 0.8]
    base = frechet_to_reference(traj, ref)
    for _ in range(20):
        theta = rng.uniform(-math.pi, math.pi)
        shift = rng.uniform(-30, 30, 2)
        R = rotation2d(theta)
        moved = frechet_to_reference(traj @ R.T + shift, ref @ R.T + shift)
        assert moved == pytest.approx(base, abs=1e-9)


def test_frechet_window_clamps_at_reference_end():
    ref = np.array([[0.0, 0.0], [5.0, 0.0]])
    traj = np.column_stack([np.linspace(4.0, 12.0, 8), np.zeros(8)])
    d = frechet_to_reference(traj, ref)
    assert d == pytest.approx(7.0)  # endpoint (12,0) vs clamped window end (5,0)


# ---------------------------------------------------------------------------
# variants

def test_variant_components_table():
    assert variant_components("mtg-heuristic") == \
        variant_components("mtg-heuristic")
    comp = variant_components("mtg-heuristic")
    assert comp.generator == "geometric-sampler"
    assert comp.selection == "argmin-goal-distance"
    assert comp.marking == "lines"
    assert variant_components("pivot-random").generator == "random-lines"
    assert variant_components("tgs-oracle").selection == "oracle"
    assert variant_components("convoi-waypoints").marking == "numbers"
    with pytest.raises(UnknownVariant):
        variant_components("unknown-x")


def test_pivot_controls_two_points_in_band():
    rng = np.random.default_rng(4)
    controls = pivot_controls(rng)
    assert len(controls) == 10
    for c in controls:
        assert c.shape == (2, 2)
        np.testing.assert_array_equal(c[0], [0.0, 0.0])
        r = np.linalg.norm(c[1])
        assert 5.0 <= r <= 15.0
        assert c[1][0] >= 0.0  # ahead of the robot


def test_pivot_controls_deterministic_per_seed():
    a = pivot_controls(np.random.default_rng(11))
    b = pivot_controls(np.random.default_rng(11))
    for ca, cb in zip(a, b):
        np.testing.assert_array_equal(ca, cb)


def test_convoi_generator_chains_toward_goal():
    sc = make_scenario()
    gen = make_convoi_generator(sc.goal, K=6, M=16)
    view = TraversabilityView.from_grid(sc.grid)
    state = RobotState(pose=sc.start)
    scan = simulate_lidar(sc.grid, sc.start, beams=90)
    trajs = gen(scan, state, view, 0)
    assert 1 <= len(trajs) <= 6
    for t in trajs:
        assert len(t) == 16
    # at least one chain makes clear progress toward the goal
    from marknav.geometry import distance_to_goal, world_to_robot
    goal_r = world_to_robot(sc.goal, sc.start)[0]
    best = min(distance_to_goal(t.waypoints, goal_r) for t in trajs)
    assert best < np.linalg.norm(sc.goal - [sc.start.x, sc.start.y]) - 2.0


# ---------------------------------------------------------------------------
# benchmark harness

def small_base_cfg():
    return EpisodeConfig(max_steps=150, generator=GeneratorConfig(seed=0))


def test_benchmark_requires_scenarios():
    with pytest.raises(NoScenarios):
        run_benchmark([], ["tgs-oracle"], episodes_per_cell=1, seed=0)


def test_benchmark_deterministic_and_skips_remote(tmp_path):
    sc = make_scenario()
    variants = ["tgs-oracle", "mtg-heuristic", "tgs-remote"]
    r1 = run_benchmark([sc], variants, episodes_per_cell=1, seed=5,
                       base_config=small_base_cfg())
    r2 = run_benchmark([sc], variants, episodes_per_cell=1, seed=5,
                       base_config=small_base_cfg())
    assert format_report_csv(r1) == format_report_csv(r2)
    assert format_report_table(r1) == format_report_table(r2)
    assert r1.cells[("flat", "tgs-remote")].skipped is not None
    assert r1.cells[("flat", "tgs-oracle")].frames > 0


def test_benchmark_shared_seed_pairs_variants():
    # first-frame candidate sets must be identical across variants with the
    # same generator (forced by the shared per-episode seed)
    sc = make_scenario()
    logs = {}
    from marknav.evaluation import build_variant_config
    from marknav.pipeline import make_backend, run_episode as run_ep
    for vid in ("tgs-oracle", "mtg-heuristic"):
        es = episode_seed(3, sc.name, 0)
        cfg, gen_fn = build_variant_config(vid, es, sc, small_base_cfg())
        logs[vid] = run_ep(sc, cfg, backend=make_backend(cfg.backend), generator_fn=gen_fn)
    a = logs["tgs-oracle"].frames[0].candidates
    b = logs["mtg-heuristic"].frames[0].candidates
    assert a == b


def test_matched_first_frame_oracle_dominates_heuristic(scenarios):
    # shared episode seeds give both variants identical first-frame candidate
    # sets; the oracle's pick must have at least the heuristic's fraction
    from marknav.evaluation import build_variant_config
    from marknav.pipeline import make_backend
    for name, sc in scenarios.items():
        view = TraversabilityView.from_grid(sc.grid)
        frames = {}
        for vid in ("tgs-oracle", "mtg-heuristic"):
            es = episode_seed(7, sc.name, 0)
            cfg, gen_fn = build_variant_config(vid, es, sc, small_base_cfg())
            log = run_episode(sc, cfg, backend=make_backend(cfg.backend),
                              generator_fn=gen_fn)
            frames[vid] = log.frames[0]
        fa, fb = frames["tgs-oracle"], frames["mtg-heuristic"]
        assert fa.candidates == fb.candidates
        scores = {}
        for vid, fr in frames.items():
            chosen = dict((n, w) for n, w in fr.candidates)[fr.chosen]
            scores[vid] = score_frame(np.array(chosen), Pose2D(*fr.pose), sc, view).traversability_fraction
        assert scores["tgs-oracle"] >= scores["mtg-heuristic"], name


def test_emit_report_formats(tmp_path):
    cells = {}
    scenarios = ["s1", "s2"]
    variants = ["tgs-oracle", "mtg-heuristic"]
    for s in scenarios:
        for v in variants:
            cells[(s, v)] = CellStats(mean_fraction=0.9, mean_strict=0.5,
                                      mean_frechet=2.5, frames=10, episodes=2,
                                      outcomes={"reached": 2})
    from marknav.evaluation import BenchmarkReport
    report = BenchmarkReport(scenario_names=scenarios, variant_ids=variants,
                             episodes_per_cell=2, seed=1, cells=cells)
    table_path = tmp_path / "report.txt"
    csv_path = tmp_path / "report.csv"
    emit_report(report, table_path, "table")
    emit_report(report, csv_path, "delimited")
    table = table_path.read_text()
    assert "Traversability" in table and "Frechet" in table
    csv = csv_path.read_text()
    lines = csv.strip().splitlines()
    assert lines[0] == "metric,method,scenario,value,frames"
    for metric in ("Traversability_(%)", "Frechet_distance_(m)"):
        rows = [l for l in lines[1:] if l.startswith(metric + ",")]
        assert len(rows) == 4  # 2 methods x 2 scenarios
    emit_report(report, tmp_path / "again.csv", "delimited")
    assert (tmp_path / "again.csv").read_bytes() == csv_path.read_bytes()
    with pytest.raises(ValueError):
        emit_report(report, tmp_path / "x", "xml")


def test_score_episode_frames_round_trip(tmp_path):
    sc = make_scenario()
    log = run_episode(sc, EpisodeConfig(max_steps=200, generator=GeneratorConfig(seed=1)))
    scores = score_episode_frames(log, sc)
    assert len(scores) == len(log.frames)
    for s in scores:
        assert 0.0 <= s.traversability_fraction <= 1.0
        assert s.traversability_strict <= s.traversability_fraction
        assert s.frechet_to_reference >= 0.0
