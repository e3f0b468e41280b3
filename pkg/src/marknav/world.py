"""Simulated 2D outdoor scenarios.

A scenario is a grid of semantic labels plus a start pose, goal, reference
path, and camera. Two traversability layers are derived from the labels:

* geometric: what range sensing can rule out (buildings, obstacles, curbs)
* semantic: what a wheeled robot should drive on (pavement, sidewalk, crosswalk)

The split is deliberate: flower beds and roads are geometrically free but
semantically disallowed, which is exactly the gap the selection stage closes.
"""

import math
from dataclasses import dataclass, field
from enum import IntEnum
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .geometry import CameraModel, Pose2D, normalize_angle, robot_to_world


class ParseError(Exception):
    """Scenario file is malformed (bad syntax, missing or mistyped fields)."""


class ValidationError(Exception):
    """Scenario violates an invariant; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


class PoseOutOfBounds(Exception):
    pass


class ActionLimitExceeded(Exception):
    pass


class Label(IntEnum):
    PAVEMENT = 0
    SIDEWALK = 1
    CROSSWALK = 2
    ROAD = 3
    GRASS = 4
    FLOWERBED = 5
    CURB = 6
    BUILDING = 7
    OBSTACLE = 8


CHAR_TO_LABEL = {
    "P": Label.PAVEMENT,
    "S": Label.SIDEWALK,
    "C": Label.CROSSWALK,
    "R": Label.ROAD,
    "G": Label.GRASS,
    "F": Label.FLOWERBED,
    "K": Label.CURB,
    "B": Label.BUILDING,
    "O": Label.OBSTACLE,
}
LABEL_TO_CHAR = {v: k for k, v in CHAR_TO_LABEL.items()}

# occluding or elevated: reflects lidar beams and blocks the robot
GEOMETRIC_BLOCKING = frozenset({Label.CURB, Label.BUILDING, Label.OBSTACLE})
# human-compliant terrain for a wheeled robot
SEMANTIC_FREE = frozenset({Label.PAVEMENT, Label.SIDEWALK, Label.CROSSWALK})

# fixed per-label palette (RGB); pure white is reserved for marker glyphs
PALETTE = {
    Label.PAVEMENT: (168, 168, 168),
    Label.SIDEWALK: (198, 198, 192),
    Label.CROSSWALK: (235, 235, 235),
    Label.ROAD: (90, 90, 95),
    Label.GRASS: (88, 160, 66),
    Label.FLOWERBED: (139, 94, 60),
    Label.CURB: (214, 208, 186),
    Label.BUILDING: (121, 96, 86),
    Label.OBSTACLE: (60, 60, 60),
}
SKY_COLOR = (170, 205, 235)

# extrusion heights (meters) for labels rendered as vertical blocks
EXTRUSION_HEIGHT = {
    Label.BUILDING: 2.5,
    Label.OBSTACLE: 1.2,
    Label.CURB: 0.15,
}


@dataclass
class SemanticGrid:
    """Per-cell semantic labels; ``cells[row, col]`` with row 0 at minimum y."""

    cells: np.ndarray
    resolution: float
    origin: np.ndarray  # world coordinates of the grid's (0, 0) corner

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.uint8)
        self.origin = np.asarray(self.origin, dtype=float).reshape(2)
        if self.resolution <= 0:
            raise ValidationError("resolution", "must be > 0")

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def extent(self) -> tuple[float, float]:
        """World-frame size (x_size, y_size) in meters."""
        return self.width * self.resolution, self.height * self.resolution

    def cell_index(self, x: float, y: float) -> tuple[int, int] | None:
        col = int(math.floor((x - self.origin[0]) / self.resolution))
        row = int(math.floor((y - self.origin[1]) / self.resolution))
        if 0 <= row < self.height and 0 <= col < self.width:
            return row, col
        return None

    def in_bounds(self, x: float, y: float) -> bool:
        return self.cell_index(x, y) is not None

    def label_at(self, x: float, y: float) -> Label | None:
        idx = self.cell_index(x, y)
        return None if idx is None else Label(self.cells[idx])

    def cell_center(self, row: int, col: int) -> np.ndarray:
        return self.origin + (np.array([col, row]) + 0.5) * self.resolution

    def to_rows(self) -> list[str]:
        """Character rows, northernmost first (matches the file layout)."""
        return [
            "".join(LABEL_TO_CHAR[Label(v)] for v in self.cells[r])
            for r in range(self.height - 1, -1, -1)
        ]


@dataclass
class TraversabilityView:
    """Boolean free-space layers derived from a SemanticGrid."""

    grid: SemanticGrid
    geometric: np.ndarray
    semantic: np.ndarray

    @classmethod
    def from_grid(cls, grid: SemanticGrid) -> "TraversabilityView":
        blocking = np.isin(grid.cells, [int(l) for l in GEOMETRIC_BLOCKING])
        semantic = np.isin(grid.cells, [int(l) for l in SEMANTIC_FREE])
        return cls(grid=grid, geometric=~blocking, semantic=semantic)

    def layer(self, name: str) -> np.ndarray:
        if name not in ("geometric", "semantic"):
            raise ValueError(f"unknown traversability layer '{name}'")
        return self.geometric if name == "geometric" else self.semantic


@dataclass
class ScenarioSpec:
    name: str
    grid: SemanticGrid
    start: Pose2D
    goal: np.ndarray
    reference_path: np.ndarray
    camera: CameraModel
    camera_mount: tuple[float, float, float, float]  # x, y, z, pitch

    def __post_init__(self):
        self.goal = np.asarray(self.goal, dtype=float).reshape(2)
        self.reference_path = np.asarray(self.reference_path, dtype=float).reshape(-1, 2)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "resolution": float(self.grid.resolution),
            "origin": [float(v) for v in self.grid.origin],
            "rows": self.grid.to_rows(),
            "start": [self.start.x, self.start.y, self.start.heading],
            "goal": [float(v) for v in self.goal],
            "reference_path": [[float(x), float(y)] for x, y in self.reference_path],
            "camera": {
                "fx": self.camera.fx,
                "fy": self.camera.fy,
                "cx": self.camera.cx,
                "cy": self.camera.cy,
                "width": self.camera.width,
                "height": self.camera.height,
                "mount": list(self.camera_mount),
            },
        }


@dataclass
class LidarScan:
    """Planar scan; beam angles are relative to the robot heading."""

    ranges: np.ndarray
    angle_min: float
    angle_increment: float
    range_max: float

    def __post_init__(self):
        self.ranges = np.asarray(self.ranges, dtype=float)

    @property
    def beams(self) -> int:
        return len(self.ranges)


@dataclass
class RobotLimits:
    v_max: float = 1.5
    omega_max: float = 1.8


DEFAULT_LIMITS = RobotLimits()


@dataclass
class RobotState:
    pose: Pose2D
    velocity_history: tuple = ()
    history_cap: int = 5

    def __post_init__(self):
        self.velocity_history = tuple(self.velocity_history)[-self.history_cap:]


# ---------------------------------------------------------------------------
# scenario files

_REQUIRED_FIELDS = ("name", "resolution", "origin", "rows", "start", "goal",
                    "reference_path", "camera")
_CAMERA_FIELDS = ("fx", "fy", "cx", "cy", "width", "height", "mount")


def _build_grid(rows: list, resolution: float, origin) -> SemanticGrid:
    if not isinstance(rows, list) or not rows or not all(isinstance(r, str) for r in rows):
        raise ValidationError("rows", "must be a non-empty list of strings")
    width = len(rows[0])
    if width == 0 or any(len(r) != width for r in rows):
        raise ValidationError("rows", "all rows must have the same non-zero length")
    bad = sorted({ch for r in rows for ch in r} - set(CHAR_TO_LABEL))
    if bad:
        raise ValidationError("rows", f"unknown cell characters {bad}")
    cells = np.array(
        [[int(CHAR_TO_LABEL[ch]) for ch in row] for row in reversed(rows)],
        dtype=np.uint8,
    )
    return SemanticGrid(cells=cells, resolution=resolution, origin=np.asarray(origin, float))


def _scenario_from_dict(data: dict) -> ScenarioSpec:
    if not isinstance(data, dict):
        raise ParseError("scenario document must be a mapping")
    for key in _REQUIRED_FIELDS:
        if key not in data:
            raise ParseError(f"missing field '{key}'")
    try:
        resolution = float(data["resolution"])
        origin = [float(v) for v in data["origin"]]
        start_vals = [float(v) for v in data["start"]]
        goal = [float(v) for v in data["goal"]]
        ref = [[float(x), float(y)] for x, y in data["reference_path"]]
        cam_raw = dict(data["camera"])
    except (TypeError, ValueError) as exc:
        raise ParseError(f"malformed field: {exc}") from exc
    if len(start_vals) != 3:
        raise ParseError("start must be [x, y, heading]")
    if len(goal) != 2:
        raise ParseError("goal must be [x, y]")
    for key in _CAMERA_FIELDS:
        if key not in cam_raw:
            raise ParseError(f"missing field 'camera.{key}'")

    if resolution <= 0:
        raise ValidationError("resolution", "must be > 0")
    grid = _build_grid(data["rows"], resolution, origin)

    if cam_raw["fx"] <= 0:
        raise ValidationError("camera.fx", "must be > 0")
    if cam_raw["fy"] <= 0:
        raise ValidationError("camera.fy", "must be > 0")
    if not 0 <= cam_raw["cx"] < cam_raw["width"]:
        raise ValidationError("camera.cx", "must lie inside the frame")
    if not 0 <= cam_raw["cy"] < cam_raw["height"]:
        raise ValidationError("camera.cy", "must lie inside the frame")
    mount = tuple(float(v) for v in cam_raw["mount"])
    if len(mount) != 4:
        raise ParseError("camera.mount must be [x, y, z, pitch]")
    camera = CameraModel.from_mount(
        float(cam_raw["fx"]), float(cam_raw["fy"]), float(cam_raw["cx"]),
        float(cam_raw["cy"]), int(cam_raw["width"]), int(cam_raw["height"]),
        mount_xyz=mount[:3], pitch=mount[3],
    )

    start = Pose2D(*start_vals)
    label = grid.label_at(start.x, start.y)
    if label is None or label not in SEMANTIC_FREE:
        raise ValidationError("start", f"must lie on a semantically traversable cell, got {label}")
    if not grid.in_bounds(goal[0], goal[1]):
        raise ValidationError("goal", "must lie within the grid bounds")
    if len(ref) < 2:
        raise ValidationError("reference_path", "needs at least 2 points")
    for i, (x, y) in enumerate(ref):
        lab = grid.label_at(x, y)
        if lab is None or lab not in SEMANTIC_FREE:
            raise ValidationError("reference_path", f"point {i} at ({x}, {y}) is on {lab}")

    return ScenarioSpec(
        name=str(data["name"]), grid=grid, start=start, goal=np.array(goal),
        reference_path=np.array(ref), camera=camera, camera_mount=mount,
    )


def load_scenario(path) -> ScenarioSpec:
    """Load and fully validate a scenario file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read scenario file {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"invalid scenario syntax: {exc}") from exc
    return _scenario_from_dict(data)


def save_scenario(spec: ScenarioSpec, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(spec.to_dict(), fh, sort_keys=False, default_flow_style=None)


BUNDLED_SCENARIOS = ("flowerbed", "curb", "crosswalk", "corner")


def bundled_scenario_path(name: str) -> Path:
    p = resources.files("marknav").joinpath(f"scenarios/{name}.yaml")
    return Path(str(p))


def load_bundled_scenario(name: str) -> ScenarioSpec:
    if name not in BUNDLED_SCENARIOS:
        raise ParseError(f"unknown bundled scenario '{name}' (have {BUNDLED_SCENARIOS})")
    return load_scenario(bundled_scenario_path(name))


# ---------------------------------------------------------------------------
# lidar

def simulate_lidar(grid: SemanticGrid, pose: Pose2D, beams: int = 360,
                   range_max: float = 20.0) -> LidarScan:
    """March every beam through the grid and report the first blocking hit.

    Only geometrically blocking labels reflect; grass, flower beds, roads and
    crosswalks are transparent, as is anything beyond the grid edge. Sampling
    is at half-cell steps, so ranges are never shorter than the true hit and
    at most half a cell longer.
    """
    if not grid.in_bounds(pose.x, pose.y):
        raise PoseOutOfBounds(f"pose ({pose.x}, {pose.y}) outside the grid")

    step = grid.resolution / 2.0
    n_steps = int(math.ceil(range_max / step))
    dists = step * np.arange(1, n_steps + 1)
    angle_min = -math.pi
    inc = 2.0 * math.pi / beams
    angles = pose.heading + angle_min + inc * np.arange(beams)

    dx = np.cos(angles)[:, None] * dists[None, :]
    dy = np.sin(angles)[:, None] * dists[None, :]
    cols = np.floor((pose.x + dx - grid.origin[0]) / grid.resolution).astype(int)
    rows = np.floor((pose.y + dy - grid.origin[1]) / grid.resolution).astype(int)
    inside = (rows >= 0) & (rows < grid.height) & (cols >= 0) & (cols < grid.width)
    blocking = np.isin(grid.cells, [int(l) for l in GEOMETRIC_BLOCKING])
    hit = np.zeros_like(inside)
    hit[inside] = blocking[rows[inside], cols[inside]]

    any_hit = hit.any(axis=1)
    first = np.argmax(hit, axis=1)
    ranges = np.full(beams, float(range_max))
    ranges[any_hit] = dists[first[any_hit]]
    ranges = np.minimum(ranges, range_max)
    return LidarScan(ranges=ranges, angle_min=angle_min, angle_increment=inc,
                     range_max=float(range_max))


# ---------------------------------------------------------------------------
# camera rendering

def _merge_boxes(mask: np.ndarray, grid: SemanticGrid) -> list[tuple[float, float, float, float]]:
    """Merge True cells into world-frame rectangles (row runs, then vertical)."""
    boxes = []
    open_runs: dict[tuple[int, int], list] = {}  # (c0, c1) -> [r_start, r_end]
    for r in range(grid.height):
        row_runs = []
        c = 0
        while c < grid.width:
            if mask[r, c]:
                c0 = c
                while c < grid.width and mask[r, c]:
                    c += 1
                row_runs.append((c0, c))
            else:
                c += 1
        next_open = {}
        for run in row_runs:
            if run in open_runs and open_runs[run][1] == r:
                ext = open_runs[run]
                ext[1] = r + 1
                next_open[run] = ext
            else:
                next_open[run] = [r, r + 1]
        for run, (r0, r1) in open_runs.items():
            if run not in next_open:
                boxes.append((run[0], run[1], r0, r1))
        open_runs = next_open
    for run, (r0, r1) in open_runs.items():
        boxes.append((run[0], run[1], r0, r1))

    res, (ox, oy) = grid.resolution, grid.origin
    return [(ox + c0 * res, ox + c1 * res, oy + r0 * res, oy + r1 * res)
            for c0, c1, r0, r1 in boxes]


def render_camera_image(grid: SemanticGrid, pose: Pose2D, cam: CameraModel) -> np.ndarray:
    """Render a perspective ground-plane view as an (H, W, 3) uint8 image.

    Every pixel's ray is intersected with the ground plane and colored by the
    cell it lands in (clamped to the nearest cell beyond the grid edge); rays
    that never reach the ground are sky. Blocking labels are drawn as vertical
    extrusions of fixed height that occlude the ground behind them.
    """
    if not grid.in_bounds(pose.x, pose.y):
        raise PoseOutOfBounds(f"pose ({pose.x}, {pose.y}) outside the grid")

    h, w = cam.height, cam.width
    us, vs = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    d_cam = np.stack([(us - cam.cx) / cam.fx, (vs - cam.cy) / cam.fy, np.ones_like(us)], axis=-1)
    d_robot = d_cam @ cam.rotation  # equals R^T applied to each direction

    c, s = math.cos(pose.heading), math.sin(pose.heading)
    dx = c * d_robot[..., 0] - s * d_robot[..., 1]
    dy = s * d_robot[..., 0] + c * d_robot[..., 1]
    dz = d_robot[..., 2]

    cam_robot = cam.position_robot
    ox = pose.x + c * cam_robot[0] - s * cam_robot[1]
    oy = pose.y + s * cam_robot[0] + c * cam_robot[1]
    oz = cam_robot[2]

    below = dz < -1e-12
    t_ground = np.where(below, -oz / np.where(below, dz, -1.0), np.inf)

    with np.errstate(invalid="ignore"):
        gx = ox + t_ground * dx
        gy = oy + t_ground * dy
    cols = np.clip(np.floor((gx - grid.origin[0]) / grid.resolution), 0, grid.width - 1)
    rows = np.clip(np.floor((gy - grid.origin[1]) / grid.resolution), 0, grid.height - 1)
    cols = np.where(np.isfinite(cols), cols, 0).astype(int)
    rows = np.where(np.isfinite(rows), rows, 0).astype(int)

    lut = np.zeros((len(Label), 3), dtype=np.uint8)
    for lab, rgb in PALETTE.items():
        lut[int(lab)] = rgb
    image = np.empty((h, w, 3), dtype=np.uint8)
    image[...] = SKY_COLOR
    ground_color = lut[grid.cells[rows, cols]]
    image[below] = ground_color[below]

    # vertical extrusions, nearest hit wins
    t_best = np.where(below, t_ground, np.inf)
    for label, height in EXTRUSION_HEIGHT.items():
        mask = grid.cells == int(label)
        if not mask.any():
            continue
        color = np.array(PALETTE[label], dtype=np.uint8)
        for x0, x1, y0, y1 in _merge_boxes(mask, grid):
            with np.errstate(divide="ignore", invalid="ignore"):
                txs = np.stack([(x0 - ox) / dx, (x1 - ox) / dx])
                tys = np.stack([(y0 - oy) / dy, (y1 - oy) / dy])
                tzs = np.stack([(0.0 - oz) / dz, (height - oz) / dz])
            t_entry = np.maximum.reduce([
                np.where(dx != 0, txs.min(axis=0), np.where((ox >= x0) & (ox <= x1), -np.inf, np.inf)),
                np.where(dy != 0, tys.min(axis=0), np.where((oy >= y0) & (oy <= y1), -np.inf, np.inf)),
                np.where(dz != 0, tzs.min(axis=0), np.where((oz >= 0) & (oz <= height), -np.inf, np.inf)),
            ])
            t_exit = np.minimum.reduce([
                np.where(dx != 0, txs.max(axis=0), np.where((ox >= x0) & (ox <= x1), np.inf, -np.inf)),
                np.where(dy != 0, tys.max(axis=0), np.where((oy >= y0) & (oy <= y1), np.inf, -np.inf)),
                np.where(dz != 0, tzs.max(axis=0), np.where((oz >= 0) & (oz <= height), np.inf, -np.inf)),
            ])
            hit = (t_entry <= t_exit) & (t_entry > 1e-9) & (t_entry < t_best)
            if hit.any():
                image[hit] = color
                t_best = np.where(hit, t_entry, t_best)
    return image


# ---------------------------------------------------------------------------
# kinematics and traversability tracing

def step_robot(state: RobotState, action: tuple[float, float], dt: float,
               limits: RobotLimits = DEFAULT_LIMITS) -> RobotState:
    """Integrate unicycle kinematics for one step and update the velocity FIFO.

    Uses the exact constant-twist arc so repeated steps reproduce the
    closed-form unicycle trajectory instead of accumulating Euler drift.
    """
    v, omega = float(action[0]), float(action[1])
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if abs(v) > limits.v_max + 1e-12 or abs(omega) > limits.omega_max + 1e-12:
        raise ActionLimitExceeded(f"action ({v:.3f}, {omega:.3f}) exceeds limits "
                                  f"({limits.v_max}, {limits.omega_max})")
    pose = state.pose
    theta = pose.heading
    if abs(omega) < 1e-12:
        dx = v * math.cos(theta) * dt
        dy = v * math.sin(theta) * dt
    else:
        dx = (v / omega) * (math.sin(theta + omega * dt) - math.sin(theta))
        dy = (v / omega) * (math.cos(theta) - math.cos(theta + omega * dt))
    new_pose = Pose2D(pose.x + dx, pose.y + dy, normalize_angle(theta + omega * dt))
    history = (state.velocity_history + ((v, omega),))[-state.history_cap:]
    return RobotState(pose=new_pose, velocity_history=history,
                      history_cap=state.history_cap)


def trace_traversable(view: TraversabilityView, layer: str, traj, pose: Pose2D) -> np.ndarray:
    """Per-waypoint traversability flags for a robot-frame trajectory at ``pose``."""
    world_pts = robot_to_world(traj, pose)
    grid = view.grid
    free = view.layer(layer)
    cols = np.floor((world_pts[:, 0] - grid.origin[0]) / grid.resolution).astype(int)
    rows = np.floor((world_pts[:, 1] - grid.origin[1]) / grid.resolution).astype(int)
    inside = (rows >= 0) & (rows < grid.height) & (cols >= 0) & (cols < grid.width)
    flags = np.zeros(len(world_pts), dtype=bool)
    flags[inside] = free[rows[inside], cols[inside]]
    return flags
