"""Closed-loop episode runner: perceive, generate, pool, mark, select, track.

Every ``replan_period`` steps the robot regenerates candidates, pools them
with the previous round, dedups, numbers, optionally renders and annotates the
camera view, and asks the selection backend for one number. Between replans a
pure-pursuit law tracks the chosen trajectory. Episodes end on goal arrival,
geometric collision, step budget, or a boxed-in generator.
"""

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._draw import save_png
from .geometry import Pose2D, arc_lengths, normalize_angle, robot_to_world, world_to_robot
from .selection import (
    BackendUnavailable,
    CandidatePool,
    FixtureExhausted,
    HeuristicBackend,
    MarkerItem,
    MarkerSet,
    OracleBackend,
    RemoteBackend,
    RemoteConfig,
    ReplayBackend,
    STYLE_LINES_AND_NUMBERS,
    SelectionContext,
    annotate_image,
    build_marker_set,
    build_prompt,
    dedup_representatives,
    fallback_choice,
    select,
    sort_and_number,
    update_pool,
)
from .trajgen import GeneratorConfig, NoFreeSpace, generate_candidates
from .world import (
    GEOMETRIC_BLOCKING,
    RobotLimits,
    RobotState,
    ScenarioSpec,
    TraversabilityView,
    render_camera_image,
    simulate_lidar,
    step_robot,
)

OUTCOME_REACHED = "reached"
OUTCOME_TIMEOUT = "timeout"
OUTCOME_COLLISION = "collision"
OUTCOME_BOXED_IN = "boxed_in"


@dataclass
class EpisodeConfig:
    replan_period: int = 10
    dt: float = 0.1
    max_steps: int = 3000
    goal_radius: float = 1.0
    lookahead: float = 1.0
    backend: str = "oracle"  # oracle | replay | remote | argmin-goal-distance
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    d_t: float = 1.0
    pool_capacity: int = 2
    use_dedup: bool = True
    marking_style: str = STYLE_LINES_AND_NUMBERS
    limits: RobotLimits = field(default_factory=RobotLimits)
    beams: int = 360
    range_max: float = 20.0
    prompt_template: str | None = None
    save_frames: bool = False
    out_dir: str | None = None
    goal_noise_std: float = 0.0  # optional GPS-style noise on the perceived goal

    def __post_init__(self):
        if (self.replan_period < 1 or self.dt <= 0 or self.max_steps <= 0
                or self.goal_radius <= 0 or self.lookahead <= 0 or self.d_t <= 0
                or self.goal_noise_std < 0):
            raise ValueError("episode config values must be positive")


@dataclass
class FrameRecord:
    step: int
    pose: tuple  # (x, y, heading)
    candidates: list  # [[number, [[x, y], ...]], ...] in the robot frame
    marker_numbers: list
    chosen: int
    raw_response: str
    image_path: str | None = None


@dataclass
class EpisodeLog:
    scenario: str
    seed: int
    frames: list
    executed_path: np.ndarray  # (steps + 1, 3) of x, y, heading
    outcome: str
    wall_time: float

    def to_jsonl(self, include_wall_time: bool = True) -> str:
        lines = []
        for fr in self.frames:
            lines.append(json.dumps({"frame": {
                "step": fr.step,
                "pose": [float(v) for v in fr.pose],
                "candidates": fr.candidates,
                "marker_numbers": list(fr.marker_numbers),
                "chosen": fr.chosen,
                "raw_response": fr.raw_response,
                "image_path": fr.image_path,
            }}, sort_keys=True))
        summary = {
            "scenario": self.scenario,
            "seed": self.seed,
            "outcome": self.outcome,
            "steps": len(self.executed_path) - 1,
            "executed_path": [[float(v) for v in row] for row in self.executed_path],
        }
        if include_wall_time:
            summary["wall_time"] = self.wall_time
        lines.append(json.dumps({"summary": summary}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, path) -> "EpisodeLog":
        frames = []
        summary = None
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            doc = json.loads(line)
            if "frame" in doc:
                f = doc["frame"]
                frames.append(FrameRecord(
                    step=f["step"], pose=tuple(f["pose"]), candidates=f["candidates"],
                    marker_numbers=f["marker_numbers"], chosen=f["chosen"],
                    raw_response=f["raw_response"], image_path=f.get("image_path")))
            elif "summary" in doc:
                summary = doc["summary"]
        if summary is None:
            raise ValueError(f"no summary record in {path}")
        return cls(scenario=summary["scenario"], seed=summary.get("seed", 0), frames=frames,
                   executed_path=np.array(summary["executed_path"], dtype=float),
                   outcome=summary["outcome"], wall_time=summary.get("wall_time", 0.0))


def make_backend(backend_id: str, fixture_path=None, remote_config: RemoteConfig | None = None):
    if backend_id == "oracle":
        return OracleBackend()
    if backend_id in ("argmin-goal-distance", "heuristic"):
        return HeuristicBackend()
    if backend_id == "replay":
        if fixture_path is None:
            raise ValueError("replay backend needs a fixture file")
        return ReplayBackend(fixture_path=fixture_path)
    if backend_id == "remote":
        if remote_config is None:
            raise ValueError("remote backend needs a RemoteConfig")
        return RemoteBackend(remote_config)
    raise ValueError(f"unknown selection backend '{backend_id}'")


def track(traj_world: np.ndarray, pose: Pose2D, cfg: EpisodeConfig) -> tuple[float, float]:
    """Pure pursuit toward the point one lookahead arc-length past the closest
    trajectory point; linear speed backs off with commanded curvature."""
    pts = np.asarray(traj_world, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return 0.0, 0.0
    s = arc_lengths(pts)
    if s[-1] < 1e-9:
        return 0.0, 0.0
    nearest = int(np.argmin(np.linalg.norm(pts - pose.xy, axis=1)))
    ahead = np.nonzero(s - s[nearest] >= cfg.lookahead)[0]
    target = pts[ahead[0]] if len(ahead) else pts[-1]
    alpha = normalize_angle(math.atan2(target[1] - pose.y, target[0] - pose.x) - pose.heading)
    v_max, w_max = cfg.limits.v_max, cfg.limits.omega_max
    kappa = 2.0 * math.sin(alpha) / cfg.lookahead
    omega = max(-w_max, min(w_max, v_max * kappa))
    v = v_max * max(0.0, math.cos(alpha)) / (1.0 + abs(kappa))
    return v, omega


def run_episode(scenario: ScenarioSpec, cfg: EpisodeConfig, backend=None,
                weights=None, generator_fn=None) -> EpisodeLog:
    """Run one closed-loop episode and return its full log.

    ``generator_fn(scan, state, view, step)`` overrides the built-in candidate
    generator (used by the benchmark ablation variants). Backend failures
    inside the loop degrade to the fallback policy and never abort the run.
    """
    t0 = time.perf_counter()
    grid = scenario.grid
    view = TraversabilityView.from_grid(grid)
    if backend is None:
        backend = make_backend(cfg.backend)
    needs_image = cfg.save_frames or getattr(backend, "needs_image", False)
    out_dir = Path(cfg.out_dir) if cfg.out_dir else None
    if cfg.save_frames and out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    state = RobotState(pose=scenario.start)
    pool = CandidatePool(capacity=cfg.pool_capacity)
    executed = [(state.pose.x, state.pose.y, state.pose.heading)]
    frames: list[FrameRecord] = []
    chosen_world = np.zeros((0, 2))
    outcome = None
    step = 0

    def at_goal(p: Pose2D) -> bool:
        return math.dist((p.x, p.y), tuple(scenario.goal)) <= cfg.goal_radius

    while step < cfg.max_steps:
        pose = state.pose
        if at_goal(pose):
            outcome = OUTCOME_REACHED
            break

        if step % cfg.replan_period == 0:
            scan = simulate_lidar(grid, pose, beams=cfg.beams, range_max=cfg.range_max)
            try:
                if generator_fn is not None:
                    batch = generator_fn(scan, state, view, step)
                else:
                    batch = generate_candidates(scan, state, view, cfg.generator, weights)
            except NoFreeSpace:
                outcome = OUTCOME_BOXED_IN
                break
            pool = update_pool(pool, batch, pose)
            cands = (dedup_representatives(pool, cfg.d_t) if cfg.use_dedup
                     else pool.trajectories_newest_first())
            goal_sensed = np.asarray(scenario.goal, dtype=float)
            if cfg.goal_noise_std > 0:
                noise_rng = np.random.default_rng(
                    np.random.SeedSequence([cfg.generator.seed, step, 0x60A1]))
                goal_sensed = goal_sensed + noise_rng.normal(0.0, cfg.goal_noise_std, 2)
            goal_robot = world_to_robot(goal_sensed, pose)[0]
            numbered = sort_and_number(cands, goal_robot)
            markers = build_marker_set(numbered, scenario.camera)
            context = SelectionContext(view=view, pose=pose)
            image_path = None

            if markers.items:
                annotated = None
                if needs_image:
                    image = render_camera_image(grid, pose, scenario.camera)
                    annotated = annotate_image(image, markers, scenario.camera,
                                               style=cfg.marking_style)
                    if cfg.save_frames and out_dir is not None:
                        name = f"frame_{step:06d}.png"
                        save_png(annotated, out_dir / name)
                        image_path = name
                bundle = build_prompt(markers, cfg.prompt_template, image=annotated)
                try:
                    result = select(backend, bundle, markers, context)
                except (BackendUnavailable, FixtureExhausted):
                    result = fallback_choice(markers, context)
                selection_items = [(it.number, it.trajectory) for it in markers.items]
                chosen_traj = markers.by_number(result.chosen).trajectory
            else:
                # camera sees none of the candidates; fall back over all of them
                from .geometry import PixelPolyline
                pseudo = MarkerSet(items=[
                    MarkerItem(n, PixelPolyline(np.zeros((0, 2)), np.zeros(0, bool)), t)
                    for n, t in numbered])
                result = fallback_choice(pseudo, context)
                selection_items = list(numbered)
                chosen_traj = dict(numbered)[result.chosen]

            chosen_world = robot_to_world(chosen_traj.waypoints, pose)
            frames.append(FrameRecord(
                step=step,
                pose=(pose.x, pose.y, pose.heading),
                candidates=[[n, t.waypoints.tolist()] for n, t in selection_items],
                marker_numbers=[n for n, _ in selection_items],
                chosen=result.chosen,
                raw_response=result.raw_response,
                image_path=image_path,
            ))

        action = track(chosen_world, state.pose, cfg)
        state = step_robot(state, action, cfg.dt, cfg.limits)
        executed.append((state.pose.x, state.pose.y, state.pose.heading))
        label = grid.label_at(state.pose.x, state.pose.y)
        if label is None or label in GEOMETRIC_BLOCKING:
            outcome = OUTCOME_COLLISION
            break
        step += 1

    if outcome is None:
        outcome = OUTCOME_REACHED if at_goal(state.pose) else OUTCOME_TIMEOUT

    log = EpisodeLog(
        scenario=scenario.name,
        seed=cfg.generator.seed,
        frames=frames,
        executed_path=np.array(executed, dtype=float),
        outcome=outcome,
        wall_time=time.perf_counter() - t0,
    )
    return log
