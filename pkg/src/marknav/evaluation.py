"""Scoring and the benchmark/ablation harness.

Per-frame scores follow the two study metrics: the fraction of chosen-path
waypoints on semantically traversable cells (with the strict all-or-nothing
variant alongside) and the discrete Frechet distance to an arc-length-matched
window of the scenario's human reference path.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    Pose2D,
    Trajectory,
    arc_lengths,
    frechet_distance,
    resample_points,
    robot_to_world,
    world_to_robot,
)
from .pipeline import EpisodeConfig, EpisodeLog, make_backend, run_episode
from .selection import RemoteConfig, STYLE_LINES, STYLE_LINES_AND_NUMBERS, STYLE_NUMBERS
from .trajgen import GeneratorConfig, NoFreeSpace
from .world import ScenarioSpec, TraversabilityView, trace_traversable

METRIC_RESAMPLE_POINTS = 32


class NoScenarios(Exception):
    pass


class UnknownVariant(Exception):
    pass


@dataclass
class FrameScore:
    traversability_fraction: float
    traversability_strict: int
    frechet_to_reference: float


@dataclass(frozen=True)
class VariantComponents:
    generator: str
    selection: str
    marking: str


_VARIANT_TABLE = {
    "tgs-oracle": VariantComponents("geometric-sampler", "oracle", STYLE_LINES_AND_NUMBERS),
    "tgs-remote": VariantComponents("geometric-sampler", "remote", STYLE_LINES_AND_NUMBERS),
    "mtg-heuristic": VariantComponents("geometric-sampler", "argmin-goal-distance", STYLE_LINES),
    "pivot-random": VariantComponents("random-lines", "oracle", STYLE_LINES_AND_NUMBERS),
    "convoi-waypoints": VariantComponents("sparse-waypoints", "oracle", STYLE_NUMBERS),
}
VARIANT_IDS = tuple(_VARIANT_TABLE)
NON_REMOTE_VARIANTS = tuple(v for v in VARIANT_IDS if v != "tgs-remote")


def variant_components(variant_id: str) -> VariantComponents:
    try:
        return _VARIANT_TABLE[variant_id]
    except KeyError:
        raise UnknownVariant(f"unknown variant '{variant_id}' (have {VARIANT_IDS})") from None


# ---------------------------------------------------------------------------
# per-frame scoring

def _closest_arc_position(ref: np.ndarray, point: np.ndarray) -> float:
    """Arc-length position of the closest point on the reference polyline."""
    s = arc_lengths(ref)
    best_d, best_s = np.inf, 0.0
    for i in range(len(ref) - 1):
        a, b = ref[i], ref[i + 1]
        seg = b - a
        L2 = float(seg @ seg)
        t = 0.0 if L2 == 0 else float(np.clip((point - a) @ seg / L2, 0.0, 1.0))
        d = float(np.linalg.norm(point - (a + t * seg)))
        if d < best_d:
            best_d = d
            best_s = s[i] + t * float(np.linalg.norm(seg))
    return best_s


def _slice_by_arc(ref: np.ndarray, s0: float, s1: float) -> np.ndarray:
    """Sub-polyline of ``ref`` between arc positions s0 and s1 (inclusive)."""
    s = arc_lengths(ref)
    s0 = float(np.clip(s0, 0.0, s[-1]))
    s1 = float(np.clip(s1, 0.0, s[-1]))
    if s1 <= s0 + 1e-12:
        i = int(np.searchsorted(s, s0, side="right")) - 1
        i = max(0, min(i, len(ref) - 2))
        t = 0.0 if s[i + 1] == s[i] else (s0 - s[i]) / (s[i + 1] - s[i])
        return (ref[i] + t * (ref[i + 1] - ref[i])).reshape(1, 2)

    def interp(target):
        i = int(np.searchsorted(s, target, side="right")) - 1
        i = max(0, min(i, len(ref) - 2))
        t = 0.0 if s[i + 1] == s[i] else (target - s[i]) / (s[i + 1] - s[i])
        return ref[i] + t * (ref[i + 1] - ref[i])

    inner = ref[(s > s0) & (s < s1)]
    return np.vstack([interp(s0), inner.reshape(-1, 2), interp(s1)])


def frechet_to_reference(traj_world: np.ndarray, reference: np.ndarray) -> float:
    """Frechet distance between a world-frame trajectory and the reference
    window of equal arc length anchored at the closest reference point."""
    traj_world = np.asarray(traj_world, dtype=float).reshape(-1, 2)
    reference = np.asarray(reference, dtype=float).reshape(-1, 2)
    L = float(arc_lengths(traj_world)[-1])
    s0 = _closest_arc_position(reference, traj_world[0])
    window = _slice_by_arc(reference, s0, s0 + L)
    if L > 1e-9:
        traj_world = resample_points(traj_world, METRIC_RESAMPLE_POINTS)
    if float(arc_lengths(window)[-1]) > 1e-9:
        window = resample_points(window, METRIC_RESAMPLE_POINTS)
    return frechet_distance(traj_world, window)


def score_frame(traj, pose: Pose2D, scenario: ScenarioSpec,
                view: TraversabilityView | None = None) -> FrameScore:
    """Score one chosen trajectory (robot frame at ``pose``)."""
    if view is None:
        view = TraversabilityView.from_grid(scenario.grid)
    traj = traj if isinstance(traj, Trajectory) else Trajectory(np.asarray(traj, dtype=float))
    flags = trace_traversable(view, "semantic", traj, pose)
    world = robot_to_world(traj.waypoints, pose)
    return FrameScore(
        traversability_fraction=float(flags.mean()),
        traversability_strict=int(flags.all()),
        frechet_to_reference=frechet_to_reference(world, scenario.reference_path),
    )


# ---------------------------------------------------------------------------
# ablation candidate generators

PIVOT_SAMPLES = 10
PIVOT_RANGE = (5.0, 15.0)


def pivot_controls(rng: np.random.Generator, n: int = PIVOT_SAMPLES) -> list:
    """Random straight-line candidates: two control points each, endpoints
    uniformly 5 to 15 m ahead of the robot."""
    controls = []
    for _ in range(n):
        r = rng.uniform(*PIVOT_RANGE)
        theta = rng.uniform(-np.pi / 2, np.pi / 2)
        controls.append(np.array([[0.0, 0.0], [r * np.cos(theta), r * np.sin(theta)]]))
    return controls


def make_pivot_generator(ep_seed: int, M: int = 16):
    def gen(scan, state, view, step):
        rng = np.random.default_rng(np.random.SeedSequence([ep_seed, step, 0xB1D]))
        return [Trajectory(resample_points(c, M)) for c in pivot_controls(rng)]
    return gen


CONVOI_PITCH = 2.0      # meters between lattice marks
CONVOI_REACH = 12.0     # how far ahead marks are placed
CONVOI_HOP = 6.0        # max hop between chained marks
CONVOI_CHAIN = 4        # marks per chain including the seed


def make_convoi_generator(goal_world, K: int = 8, M: int = 16):
    """Waypoint-mark stand-in: sparse lattice marks on free cells, chained
    greedily toward the goal and joined linearly. Midpoints between marks are
    never checked, which is exactly this style's weakness."""
    goal_world = np.asarray(goal_world, dtype=float)

    def gen(scan, state, view, step):
        grid = view.grid
        pose = state.pose
        xs = np.arange(grid.origin[0] + 1.0, grid.origin[0] + grid.extent[0], CONVOI_PITCH)
        ys = np.arange(grid.origin[1] + 1.0, grid.origin[1] + grid.extent[1], CONVOI_PITCH)
        marks = np.array([[x, y] for x in xs for y in ys])
        local = world_to_robot(marks, pose)
        rr = np.floor((marks[:, 1] - grid.origin[1]) / grid.resolution).astype(int)
        cc = np.floor((marks[:, 0] - grid.origin[0]) / grid.resolution).astype(int)
        inside = (rr >= 0) & (rr < grid.height) & (cc >= 0) & (cc < grid.width)
        free = np.zeros(len(marks), dtype=bool)
        free[inside] = view.geometric[rr[inside], cc[inside]]
        near = np.linalg.norm(local, axis=1) <= CONVOI_REACH
        keep = free & near & (local[:, 0] >= 0.5)
        if keep.sum() < 2:
            keep = free & near
        if keep.sum() < 1:
            raise NoFreeSpace("no free waypoint marks around the robot")
        pts_local = local[keep]
        pts_world = marks[keep]
        goal_d = np.linalg.norm(pts_world - goal_world, axis=1)
        seeds = np.argsort(np.linalg.norm(pts_local, axis=1), kind="stable")[:K]
        trajs = []
        for si in seeds:
            chain = [np.zeros(2), pts_local[si]]
            used = {int(si)}
            current = int(si)
            for _ in range(CONVOI_CHAIN - 1):
                hops = np.linalg.norm(pts_local - pts_local[current], axis=1)
                cand = [j for j in range(len(pts_local))
                        if j not in used and hops[j] <= CONVOI_HOP
                        and goal_d[j] < goal_d[current] - 0.5]
                if not cand:
                    break
                nxt = min(cand, key=lambda j: (goal_d[j], j))
                chain.append(pts_local[nxt])
                used.add(nxt)
                current = nxt
            pts = np.array(chain)
            if float(arc_lengths(pts)[-1]) < 1e-9:
                continue
            trajs.append(Trajectory(resample_points(pts, M)))
        if not trajs:
            raise NoFreeSpace("no usable waypoint chains")
        return trajs

    return gen


# ---------------------------------------------------------------------------
# benchmark harness

@dataclass
class CellStats:
    mean_fraction: float = 0.0
    mean_strict: float = 0.0
    mean_frechet: float = 0.0
    frames: int = 0
    episodes: int = 0
    outcomes: dict = field(default_factory=dict)
    skipped: str | None = None


@dataclass
class BenchmarkReport:
    scenario_names: list
    variant_ids: list
    episodes_per_cell: int
    seed: int
    cells: dict  # (scenario_name, variant_id) -> CellStats


def episode_seed(seed: int, scenario_name: str, episode: int) -> int:
    """Stable per-episode seed shared by every variant (paired comparisons)."""
    digest = hashlib.sha256(f"{seed}:{scenario_name}:{episode}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


def build_variant_config(variant_id: str, ep_seed: int, scenario: ScenarioSpec,
                         base: EpisodeConfig | None = None):
    """EpisodeConfig plus optional generator override for one variant episode.

    Candidate pooling and Hausdorff dedup belong to the marked-selection
    pipeline; the ablation baselines replan from scratch each round.
    """
    comp = variant_components(variant_id)
    base = base or EpisodeConfig(max_steps=600)
    is_tgs = variant_id.startswith("tgs-")
    cfg = EpisodeConfig(
        replan_period=base.replan_period, dt=base.dt, max_steps=base.max_steps,
        goal_radius=base.goal_radius, lookahead=base.lookahead,
        backend=comp.selection,
        generator=GeneratorConfig(
            backend="geometric-sampler", K=base.generator.K, M=base.generator.M,
            max_length=base.generator.max_length, seed=ep_seed),
        d_t=base.d_t,
        pool_capacity=2 if is_tgs else 1,
        use_dedup=is_tgs,
        marking_style=comp.marking,
        limits=base.limits, beams=base.beams, range_max=base.range_max,
    )
    generator_fn = None
    if comp.generator == "random-lines":
        generator_fn = make_pivot_generator(ep_seed, M=cfg.generator.M)
    elif comp.generator == "sparse-waypoints":
        generator_fn = make_convoi_generator(scenario.goal, K=cfg.generator.K,
                                             M=cfg.generator.M)
    return cfg, generator_fn


def score_episode_frames(log: EpisodeLog, scenario: ScenarioSpec,
                         view: TraversabilityView | None = None) -> list:
    """FrameScore for the chosen trajectory of every logged replan frame."""
    if view is None:
        view = TraversabilityView.from_grid(scenario.grid)
    scores = []
    for fr in log.frames:
        chosen = dict((n, w) for n, w in fr.candidates)[fr.chosen]
        pose = Pose2D(*fr.pose)
        scores.append(score_frame(np.array(chosen), pose, scenario, view))
    return scores


def run_benchmark(scenarios, variants, episodes_per_cell: int = 5, seed: int = 0,
                  base_config: EpisodeConfig | None = None,
                  remote_config: RemoteConfig | None = None) -> BenchmarkReport:
    """Run the scenario x variant matrix and aggregate per-frame scores.

    Remote variants are skipped (with a marked gap) unless a RemoteConfig is
    supplied. Results are deterministic for non-remote variants: every episode
    seed derives from (seed, scenario, episode index) so paired variants see
    identical candidate sets at matched frames.
    """
    scenarios = list(scenarios)
    if not scenarios:
        raise NoScenarios("benchmark needs at least one scenario")
    for vid in variants:
        variant_components(vid)

    cells = {}
    for scenario in scenarios:
        view = TraversabilityView.from_grid(scenario.grid)
        for vid in variants:
            comp = variant_components(vid)
            if comp.selection == "remote" and remote_config is None:
                cells[(scenario.name, vid)] = CellStats(skipped="remote backend not configured")
                continue
            fractions, stricts, frechets, outcomes = [], [], [], {}
            for ep in range(episodes_per_cell):
                es = episode_seed(seed, scenario.name, ep)
                cfg, generator_fn = build_variant_config(vid, es, scenario, base_config)
                backend = make_backend(cfg.backend, remote_config=remote_config)
                log = run_episode(scenario, cfg, backend=backend, generator_fn=generator_fn)
                outcomes[log.outcome] = outcomes.get(log.outcome, 0) + 1
                for score in score_episode_frames(log, scenario, view):
                    fractions.append(score.traversability_fraction)
                    stricts.append(score.traversability_strict)
                    frechets.append(score.frechet_to_reference)
            cells[(scenario.name, vid)] = CellStats(
                mean_fraction=float(np.mean(fractions)) if fractions else 0.0,
                mean_strict=float(np.mean(stricts)) if stricts else 0.0,
                mean_frechet=float(np.mean(frechets)) if frechets else 0.0,
                frames=len(fractions),
                episodes=episodes_per_cell,
                outcomes=outcomes,
            )
    return BenchmarkReport(
        scenario_names=[s.name for s in scenarios],
        variant_ids=list(variants),
        episodes_per_cell=episodes_per_cell,
        seed=seed,
        cells=cells,
    )


# ---------------------------------------------------------------------------
# report emission

_METRIC_ROWS = (
    ("Traversability (%)", lambda c: c.mean_fraction * 100.0, "{:.2f}"),
    ("Traversability strict (%)", lambda c: c.mean_strict * 100.0, "{:.2f}"),
    ("Frechet distance (m)", lambda c: c.mean_frechet, "{:.3f}"),
)


def format_report_table(report: BenchmarkReport) -> str:
    lines = [f"Benchmark report: episodes_per_cell={report.episodes_per_cell} "
             f"seed={report.seed}", ""]
    name_w = max(len(v) for v in report.variant_ids) + 2
    col_w = max(max(len(s) for s in report.scenario_names) + 2, 16)
    for title, getter, fmt in _METRIC_ROWS:
        lines.append(title)
        header = " " * name_w + "".join(s.rjust(col_w) for s in report.scenario_names)
        lines.append(header)
        for vid in report.variant_ids:
            row = vid.ljust(name_w)
            for sname in report.scenario_names:
                cell = report.cells[(sname, vid)]
                if cell.skipped:
                    row += "skipped".rjust(col_w)
                else:
                    row += f"{fmt.format(getter(cell))} (n={cell.frames})".rjust(col_w)
            lines.append(row)
        lines.append("")
    skipped = [(s, v, c.skipped) for (s, v), c in report.cells.items() if c.skipped]
    for s, v, reason in sorted(skipped):
        lines.append(f"skipped {s}/{v}: {reason}")
    if skipped:
        lines.append("")
    return "\n".join(lines)


def format_report_csv(report: BenchmarkReport) -> str:
    lines = ["metric,method,scenario,value,frames"]
    for title, getter, fmt in _METRIC_ROWS:
        for vid in report.variant_ids:
            for sname in report.scenario_names:
                cell = report.cells[(sname, vid)]
                value = "" if cell.skipped else fmt.format(getter(cell))
                lines.append(f"{title.replace(' ', '_')},{vid},{sname},{value},{cell.frames}")
    return "\n".join(lines) + "\n"


def emit_report(report: BenchmarkReport, path, fmt: str = "table") -> None:
    if fmt not in ("table", "delimited"):
        raise ValueError(f"unknown report format '{fmt}'")
    text = format_report_table(report) if fmt == "table" else format_report_csv(report)
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise IOError(f"cannot write report to {path}: {exc}") from exc
