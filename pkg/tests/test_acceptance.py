"""Acceptance suite: one test per exit criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v`` (add ``-s`` to see the lines).
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from marknav.evaluation import (
    NON_REMOTE_VARIANTS,
    run_benchmark,
)
from marknav.geometry import (
    CameraModel,
    Pose2D,
    Trajectory,
    frechet_distance,
    hausdorff_distance,
    project_to_image,
    world_to_robot,
)
from marknav.pipeline import EpisodeConfig, run_episode
from marknav.selection import (
    CandidatePool,
    DISC_COLOR,
    GLYPH_COLOR,
    InvalidChoice,
    ReplayBackend,
    SelectionContext,
    Unparseable,
    annotate_image,
    build_marker_set,
    build_prompt,
    dedup_representatives,
    parse_response,
    select,
    sort_and_number,
    update_pool,
)
from marknav.trajgen import (
    AffineMap,
    CONDITION_DIM,
    GeneratorConfig,
    GeneratorWeights,
    ProjectionHead,
    decode_trajectory,
    generate_candidates,
    project_latent,
)
from marknav.world import (
    BUNDLED_SCENARIOS,
    Label,
    RobotState,
    SemanticGrid,
    TraversabilityView,
    render_camera_image,
    simulate_lidar,
    trace_traversable,
)

FIXTURES = Path(__file__).parent / "fixtures"


def _announce(criterion, detail=""):
    print(f"ACCEPTANCE PASS: {criterion}" + (f" ({detail})" if detail else ""))


# ---------------------------------------------------------------------------
# criterion 1: metric oracle equivalence

def _frechet_oracle(a, b):
    n, m = len(a), len(b)
    best = [math.inf]

    def walk(i, j, running):
        running = max(running, float(np.linalg.norm(a[i] - b[j])))
        if running >= best[0]:
            return
        if i == n - 1 and j == m - 1:
            best[0] = running
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            if i + di < n and j + dj < m:
                walk(i + di, j + dj, running)

    walk(0, 0, 0.0)
    return best[0]


def test_c1_metric_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    for _ in range(200):
        a = rng.uniform(-10, 10, (int(rng.integers(1, 7)), 2))
        b = rng.uniform(-10, 10, (int(rng.integers(1, 7)), 2))
        assert abs(frechet_distance(a, b) - _frechet_oracle(a, b)) <= 1e-9
    for _ in range(500):
        a = rng.uniform(-10, 10, (int(rng.integers(1, 9)), 2))
        b = rng.uniform(-10, 10, (int(rng.integers(1, 9)), 2))
        brute = max(
            max(min(math.dist(p, q) for q in b) for p in a),
            max(min(math.dist(p, q) for p in a) for q in b),
        )
        assert abs(hausdorff_distance(a, b) - brute) <= 1e-9
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    _announce("criterion 1 metric oracle equivalence", f"{elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 2: dedup invariant and pool capacity

def test_c2_dedup_invariant_and_pool_capacity():
    rng = np.random.default_rng(202)
    for _ in range(1000):
        n_traj = int(rng.integers(2, 7))
        batch = [
            Trajectory(np.cumsum(rng.uniform(-1, 1.5, (8, 2)), axis=0))
            for _ in range(n_traj)
        ]
        pool = update_pool(CandidatePool(), batch, Pose2D(0, 0, 0))
        d_t = float(rng.uniform(0.3, 3.0))
        kept = dedup_representatives(pool, d_t)
        assert kept
        for i in range(len(kept)):
            for j in range(i + 1, len(kept)):
                assert hausdorff_distance(kept[i].waypoints, kept[j].waypoints) > d_t

    rng = np.random.default_rng(203)
    for trial in range(20):
        pool = CandidatePool(capacity=2)
        pose = Pose2D(0, 0, 0)
        length = int(rng.integers(1, 21))
        for _ in range(length):
            pose = Pose2D(pose.x + rng.uniform(0, 1), pose.y + rng.uniform(-0.5, 0.5),
                          rng.uniform(-3, 3))
            batch = [Trajectory(np.cumsum(rng.uniform(-1, 1.5, (6, 2)), axis=0))
                     for _ in range(3)]
            pool = update_pool(pool, batch, pose)
            assert len(pool) <= 2
    _announce("criterion 2 dedup invariant and pool capacity")


# ---------------------------------------------------------------------------
# criterion 3: latent projection and decoder mechanics

def test_c3_latent_projection_and_decoder():
    rng = np.random.default_rng(303)
    for _ in range(100):
        L = int(rng.integers(2, 9))
        A = rng.normal(size=(L, L))
        b = rng.normal(size=L)
        z = rng.normal(size=L)
        naive = [sum(A[i][j] * z[j] for j in range(L)) + b[i] for i in range(L)]
        got = project_latent(z, ProjectionHead(A, b))
        assert np.max(np.abs(got - np.array(naive))) <= 1e-12

    head = ProjectionHead(rng.normal(size=(6, 6)), rng.normal(size=6))
    for _ in range(100):
        z1, z2 = rng.normal(size=6), rng.normal(size=6)
        alpha, beta = rng.normal(), rng.normal()
        lhs = project_latent(alpha * z1 + beta * z2, head)
        rhs = (alpha * project_latent(z1, head) + beta * project_latent(z2, head)
               - (alpha + beta - 1) * head.b)
        assert np.max(np.abs(lhs - rhs)) <= 1e-9

    # hand-built decoder: zero layer1, layer2 bias = one forward step per row
    L, D, M, hidden = 16, CONDITION_DIM, 16, 8
    bias = np.zeros(2 * M)
    bias[0::2] = 15.0 / M
    weights = GeneratorWeights(
        encoder=AffineMap(np.eye(D), np.zeros(D)),
        latent=AffineMap(np.zeros((L, D)), np.zeros(L)),
        heads=[ProjectionHead(np.zeros((L, L)), np.full(L, float(k)), head_index=k + 1)
               for k in range(8)],
        decoder_layer1=AffineMap(np.zeros((hidden, L + D)), np.zeros(hidden)),
        decoder_layer2=AffineMap(np.zeros((2 * M, hidden)), bias),
        D=D, L=L, K=8, M=M,
    )
    traj = decode_trajectory(np.zeros(L), np.zeros(D), weights, max_length=15.0)
    expected = np.column_stack([np.arange(1, M + 1) * (15.0 / M), np.zeros(M)])
    assert np.max(np.abs(traj.waypoints - expected)) <= 1e-6
    _announce("criterion 3 latent projection and decoder mechanics")


# ---------------------------------------------------------------------------
# criterion 4: geometric-sampler contract

def test_c4_sampler_contract(scenarios):
    rng = np.random.default_rng(404)
    cfg = GeneratorConfig(K=8, M=16, max_length=15.0)
    for name, spec in scenarios.items():
        view = TraversabilityView.from_grid(spec.grid)
        rows, cols = np.nonzero(view.semantic)
        order = rng.permutation(len(rows))
        checked = 0
        for idx in order:
            if checked >= 20:
                break
            center = spec.grid.cell_center(rows[idx], cols[idx])
            pose = Pose2D(center[0], center[1], float(rng.uniform(-math.pi, math.pi)))
            scan = simulate_lidar(spec.grid, pose, beams=90)
            try:
                cands = generate_candidates(scan, RobotState(pose=pose), view, cfg)
            except Exception:
                continue
            checked += 1
            assert len(cands) == 8
            for traj in cands:
                flags = trace_traversable(view, "geometric", traj, pose)
                assert flags.all(), f"{name}: non-traversable waypoint at {pose}"
        assert checked == 20, f"only {checked} valid poses found in {name}"

    # diversity in open space
    n = 300
    grid = SemanticGrid(cells=np.full((n, n), int(Label.PAVEMENT), dtype=np.uint8),
                        resolution=0.1, origin=np.zeros(2))
    view = TraversabilityView.from_grid(grid)
    pose = Pose2D(15.0, 15.0, 0.0)
    scan = simulate_lidar(grid, pose, beams=90)
    cands = generate_candidates(scan, RobotState(pose=pose), view, cfg)
    min_h = min(
        hausdorff_distance(cands[i].waypoints, cands[j].waypoints)
        for i in range(len(cands)) for j in range(i + 1, len(cands))
    )
    assert min_h > grid.resolution
    _announce("criterion 4 sampler contract", f"open-space min pairwise hausdorff {min_h:.2f} m")


# ---------------------------------------------------------------------------
# criterion 5: projection and annotation

def test_c5_projection_and_annotation(scenarios):
    cam = CameraModel(100.0, 100.0, 64.0, 64.0, 128, 128)
    center = project_to_image(np.array([[0.0, 0.0, 2.0]]), cam).points[0]
    assert np.max(np.abs(center - [64.0, 64.0])) <= 0.5
    off = project_to_image(np.array([[1.0, 0.0, 2.0]]), cam).points[0]
    assert np.max(np.abs(off - [114.0, 64.0])) <= 0.5

    spec = scenarios["crosswalk"]
    view = TraversabilityView.from_grid(spec.grid)
    state = RobotState(pose=spec.start)
    scan = simulate_lidar(spec.grid, spec.start)
    batch = generate_candidates(scan, state, view, GeneratorConfig(seed=0, K=6))
    pool = update_pool(CandidatePool(), batch, spec.start)
    cands = dedup_representatives(pool, 1.0)
    goal_r = world_to_robot(spec.goal, spec.start)[0]
    markers = build_marker_set(sort_and_number(cands, goal_r), spec.camera)
    n_markers = len(markers.items)
    assert n_markers >= 3

    image = render_camera_image(spec.grid, spec.start, spec.camera)
    annotated = annotate_image(image, markers, spec.camera)
    again = annotate_image(image, markers, spec.camera)
    assert np.array_equal(annotated, again)  # bit-identical rerender

    mask = (np.all(annotated == DISC_COLOR, axis=-1)
            | np.all(annotated == GLYPH_COLOR, axis=-1))
    seen = np.zeros_like(mask)
    blobs = []
    h, w = mask.shape
    for v0 in range(h):
        for u0 in range(w):
            if mask[v0, u0] and not seen[v0, u0]:
                stack = [(v0, u0)]
                seen[v0, u0] = True
                count = 0
                while stack:
                    y, x = stack.pop()
                    count += 1
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            ny, nx = y + dy, x + dx
                            if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                                seen[ny, nx] = True
                                stack.append((ny, nx))
                if count > 30:
                    blobs.append(count)
    assert len(blobs) == n_markers

    # each disc is centered on its polyline's final retained pixel (+- 1 px)
    for item in markers.items:
        cu = int(round(item.polyline.points[-1][0]))
        cv = int(round(item.polyline.points[-1][1]))
        for dv in range(-1, 2):
            for du in range(-1, 2):
                v, u = cv + dv, cu + du
                if 0 <= v < h and 0 <= u < w:
                    assert mask[v, u], f"marker {item.number} center not disc-colored"
    _announce("criterion 5 projection and annotation", f"{n_markers} circles counted")


# ---------------------------------------------------------------------------
# criterion 6: trend reproduction

def test_c6_trend_reproduction(scenarios):
    t0 = time.perf_counter()
    ordered = [scenarios[name] for name in BUNDLED_SCENARIOS]
    report = run_benchmark(ordered, list(NON_REMOTE_VARIANTS), episodes_per_cell=5, seed=7)
    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0, f"bench took {elapsed:.0f}s"

    pivot_wins = 0
    for name in BUNDLED_SCENARIOS:
        tgs = report.cells[(name, "tgs-oracle")]
        mtg = report.cells[(name, "mtg-heuristic")]
        piv = report.cells[(name, "pivot-random")]
        gap = (tgs.mean_fraction - mtg.mean_fraction) * 100.0
        assert gap >= 10.0, f"{name}: traversability gap only {gap:.1f} pp"
        assert tgs.mean_frechet < mtg.mean_frechet, f"{name}: frechet not lower than mtg"
        pivot_wins += tgs.mean_frechet < piv.mean_frechet
    assert pivot_wins >= 3
    _announce("criterion 6 trend reproduction",
              f"bench {elapsed:.0f}s, beats pivot in {pivot_wins}/4")


# ---------------------------------------------------------------------------
# criterion 7: closed-loop soundness

def test_c7_closed_loop_soundness(scenarios):
    for name in BUNDLED_SCENARIOS:
        spec = scenarios[name]
        view = TraversabilityView.from_grid(spec.grid)
        cfg = EpisodeConfig(max_steps=600, generator=GeneratorConfig(seed=7))
        log = run_episode(spec, cfg)
        assert log.outcome == "reached", f"{name}: {log.outcome}"
        semantic = 0
        for x, y, _ in log.executed_path:
            idx = spec.grid.cell_index(x, y)
            assert idx is not None and view.geometric[idx], f"{name}: geometric collision"
            semantic += bool(view.semantic[idx])
        occupancy = semantic / len(log.executed_path)
        assert occupancy >= 0.95, f"{name}: semantic occupancy {occupancy:.2%}"
        again = run_episode(spec, cfg)
        assert (log.to_jsonl(include_wall_time=False)
                == again.to_jsonl(include_wall_time=False)), f"{name}: nondeterministic"
    _announce("criterion 7 closed-loop soundness")


# ---------------------------------------------------------------------------
# criterion 8: parser robustness and fallback

def test_c8_parser_robustness(scenarios):
    valid = set(range(1, 9))
    good = (FIXTURES / "parser_good.txt").read_text().splitlines()
    assert len(good) == 20
    for line in good:
        expected, response = line.split("\t", 1)
        assert parse_response(response, valid) == int(expected)

    adversarial = (FIXTURES / "parser_adversarial.txt").read_text().splitlines()
    assert len(adversarial) == 5
    for response in adversarial:
        with pytest.raises((Unparseable, InvalidChoice)):
            parse_response(response, valid)

    # the fallback must still produce a valid number for every adversarial reply
    spec = scenarios["flowerbed"]
    view = TraversabilityView.from_grid(spec.grid)
    state = RobotState(pose=spec.start)
    scan = simulate_lidar(spec.grid, spec.start)
    batch = generate_candidates(scan, state, view, GeneratorConfig(seed=1, K=6))
    pool = update_pool(CandidatePool(), batch, spec.start)
    goal_r = world_to_robot(spec.goal, spec.start)[0]
    markers = build_marker_set(sort_and_number(dedup_representatives(pool, 1.0), goal_r),
                               spec.camera)
    bundle = build_prompt(markers)
    context = SelectionContext(view=view, pose=spec.start)
    for response in adversarial:
        result = select(ReplayBackend(responses=[response]), bundle, markers, context)
        assert result.chosen in bundle.valid_numbers
        assert result.backend == "fallback"
    _announce("criterion 8 parser robustness and fallback")
