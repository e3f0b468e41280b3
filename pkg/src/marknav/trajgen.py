"""Diverse candidate-trajectory generation.

Two interchangeable backends sit behind ``generate_candidates``:

* ``geometric-sampler``: plans K shortest grid paths to farthest-point-sampled
  frontier targets in geometrically free space. Every emitted waypoint is
  guaranteed geometrically traversable; this is the verifiable desk backend.
* ``latent-decoder``: runs the learned pipeline mechanics (condition encoding,
  latent projection heads, affine+tanh decoder) with loadable weights. No
  traversability guarantee; geometric feasibility is what training provides.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2D, Trajectory, resample_points, world_to_robot
from .world import DEFAULT_LIMITS, LidarScan, RobotLimits, RobotState, TraversabilityView

N_RANGE_BINS = 64
N_VELOCITY_FEATURES = 4
CONDITION_DIM = N_RANGE_BINS + N_VELOCITY_FEATURES


class TooFewBeams(Exception):
    pass


class DimensionMismatch(Exception):
    pass


class NoFreeSpace(Exception):
    """The robot is boxed in; no useful frontier is reachable."""


class MissingWeights(Exception):
    pass


@dataclass
class AffineMap:
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.A.ndim != 2 or self.A.shape[0] != self.b.shape[0]:
            raise DimensionMismatch(f"affine map shapes {self.A.shape} / {self.b.shape}")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError("affine map parameters must be finite")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.A.shape[1]:
            raise DimensionMismatch(f"expected input of length {self.A.shape[1]}, got {x.shape[0]}")
        return self.A @ x + self.b


@dataclass
class ProjectionHead:
    """Affine latent projection; one head per candidate trajectory."""

    A: np.ndarray
    b: np.ndarray
    head_index: int = 1

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.A.ndim != 2 or self.A.shape[0] != self.A.shape[1] or self.A.shape[0] != len(self.b):
            raise DimensionMismatch(f"head needs square A matching b, got {self.A.shape}")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError("projection head parameters must be finite")


@dataclass
class GeneratorWeights:
    encoder: AffineMap       # raw features -> condition, D x D
    latent: AffineMap        # condition -> latent mean, L x D
    heads: list
    decoder_layer1: AffineMap  # [z_k || c] -> hidden, tanh
    decoder_layer2: AffineMap  # hidden -> 2M per-step offsets
    D: int = CONDITION_DIM
    L: int = 16
    K: int = 8
    M: int = 16

    def __post_init__(self):
        if len(self.heads) != self.K:
            raise DimensionMismatch(f"expected {self.K} heads, got {len(self.heads)}")
        if self.encoder.A.shape != (self.D, self.D):
            raise DimensionMismatch("encoder must map raw features to a same-length condition")
        if self.latent.A.shape != (self.L, self.D):
            raise DimensionMismatch("latent map must be L x D")
        for h in self.heads:
            if h.A.shape != (self.L, self.L):
                raise DimensionMismatch("projection heads must be L x L")
        if self.decoder_layer1.A.shape[1] != self.L + self.D:
            raise DimensionMismatch("decoder layer1 must consume [z || c]")
        if self.decoder_layer2.A.shape[0] != 2 * self.M:
            raise DimensionMismatch("decoder layer2 must emit 2M offsets")
        if self.decoder_layer2.A.shape[1] != self.decoder_layer1.A.shape[0]:
            raise DimensionMismatch("decoder layer shapes disagree on hidden size")
        for i in range(len(self.heads)):
            for j in range(i + 1, len(self.heads)):
                sep = (np.linalg.norm(self.heads[i].A - self.heads[j].A)
                       + np.linalg.norm(self.heads[i].b - self.heads[j].b))
                if sep <= 0.0:
                    raise ValueError(f"heads {i} and {j} are identical")


@dataclass
class GeneratorConfig:
    backend: str = "geometric-sampler"  # or "latent-decoder"
    K: int = 8
    M: int = 16
    max_length: float = 15.0
    seed: int = 0
    perturb_latent: bool = False
    perturb_scale: float = 0.1

    def __post_init__(self):
        if self.K < 2 or self.M < 2 or self.max_length <= 0:
            raise ValueError("need K >= 2, M >= 2, max_length > 0")


# ---------------------------------------------------------------------------
# weights i/o

def _affine_to_dict(m: AffineMap) -> dict:
    return {"A": m.A.tolist(), "b": m.b.tolist()}


def save_weights(weights: GeneratorWeights, path) -> None:
    doc = {
        "D": weights.D, "L": weights.L, "K": weights.K, "M": weights.M,
        "encoder": _affine_to_dict(weights.encoder),
        "latent": _affine_to_dict(weights.latent),
        "heads": [_affine_to_dict(AffineMap(h.A, h.b)) for h in weights.heads],
        "decoder": {
            "layer1": _affine_to_dict(weights.decoder_layer1),
            "layer2": _affine_to_dict(weights.decoder_layer2),
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_weights(path) -> GeneratorWeights:
    with open(path) as fh:
        doc = json.load(fh)
    heads = [ProjectionHead(h["A"], h["b"], head_index=i + 1)
             for i, h in enumerate(doc["heads"])]
    return GeneratorWeights(
        encoder=AffineMap(**doc["encoder"]),
        latent=AffineMap(**doc["latent"]),
        heads=heads,
        decoder_layer1=AffineMap(**doc["decoder"]["layer1"]),
        decoder_layer2=AffineMap(**doc["decoder"]["layer2"]),
        D=int(doc["D"]), L=int(doc["L"]), K=int(doc["K"]), M=int(doc["M"]),
    )


def random_weights(seed: int, D: int = CONDITION_DIM, L: int = 16, K: int = 8,
                   M: int = 16, hidden: int = 64) -> GeneratorWeights:
    """Seeded random weights for testing the latent backend end to end.

    The decoder bias leans each step forward so decoded candidates fan out
    ahead of the robot at a realistic trajectory scale instead of curling
    around the origin.
    """
    rng = np.random.default_rng(seed)

    def affine(rows, cols, scale):
        return AffineMap(rng.normal(0.0, scale, (rows, cols)), rng.normal(0.0, scale, rows))

    heads = [ProjectionHead(np.eye(L) + rng.normal(0.0, 0.25, (L, L)),
                            rng.normal(0.0, 1.0, L), head_index=k + 1)
             for k in range(K)]
    layer2 = affine(2 * M, hidden, 0.6 / math.sqrt(hidden))
    layer2.b[0::2] += 0.55  # forward lean on the x component of every step
    return GeneratorWeights(
        encoder=AffineMap(np.eye(D) + rng.normal(0.0, 0.02, (D, D)), rng.normal(0.0, 0.02, D)),
        latent=affine(L, D, 1.0 / math.sqrt(D)),
        heads=heads,
        decoder_layer1=affine(hidden, L + D, 1.0 / math.sqrt(L + D)),
        decoder_layer2=layer2,
        D=D, L=L, K=K, M=M,
    )


# ---------------------------------------------------------------------------
# learned-pipeline mechanics

def encode_condition(scan: LidarScan, state: RobotState,
                     limits: RobotLimits = DEFAULT_LIMITS) -> np.ndarray:
    """Deterministic featurization: 64 min-pooled range bins plus 4 velocity stats."""
    if scan.beams < N_RANGE_BINS:
        raise TooFewBeams(f"need at least {N_RANGE_BINS} beams, got {scan.beams}")
    edges = (np.arange(N_RANGE_BINS + 1) * scan.beams) // N_RANGE_BINS
    bins = np.array([scan.ranges[edges[j]:edges[j + 1]].min() for j in range(N_RANGE_BINS)])
    bins = bins / scan.range_max
    if state.velocity_history:
        hist = np.asarray(state.velocity_history, dtype=float)
        vel = np.array([hist[:, 0].mean(), hist[-1, 0], hist[:, 1].mean(), hist[-1, 1]])
    else:
        vel = np.zeros(N_VELOCITY_FEATURES)
    vel = vel / np.array([limits.v_max, limits.v_max, limits.omega_max, limits.omega_max])
    return np.concatenate([bins, vel])


def project_latent(z: np.ndarray, head: ProjectionHead) -> np.ndarray:
    """Affine latent projection z_k = A z + b."""
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.shape[0] != head.A.shape[1]:
        raise DimensionMismatch(f"latent length {z.shape[0]} vs head {head.A.shape}")
    return head.A @ z + head.b


def decode_trajectory(z_k: np.ndarray, c: np.ndarray, weights: GeneratorWeights,
                      max_length: float = 15.0) -> Trajectory:
    """Decode per-step offsets from [z_k || c] and integrate them from the origin.

    Each step's norm is clamped to max_length / M, so the arc length can never
    exceed max_length regardless of the weights.
    """
    z_k = np.asarray(z_k, dtype=float).reshape(-1)
    c = np.asarray(c, dtype=float).reshape(-1)
    if z_k.shape[0] != weights.L or c.shape[0] != weights.D:
        raise DimensionMismatch(f"expected (L={weights.L}, D={weights.D}), "
                                f"got ({z_k.shape[0]}, {c.shape[0]})")
    hidden = np.tanh(weights.decoder_layer1(np.concatenate([z_k, c])))
    offsets = weights.decoder_layer2(hidden).reshape(weights.M, 2)
    max_step = max_length / weights.M
    norms = np.linalg.norm(offsets, axis=1)
    over = norms > max_step
    offsets[over] *= (max_step / norms[over])[:, None]
    waypoints = np.cumsum(offsets, axis=0)
    return Trajectory(waypoints, confidence=1.0)


# ---------------------------------------------------------------------------
# geometric sampler backend

_SHIFTS8 = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1))


def _dilate8(mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    out[1:, :] |= mask[:-1, :]
    out[:-1, :] |= mask[1:, :]
    out[:, 1:] |= mask[:, :-1]
    out[:, :-1] |= mask[:, 1:]
    out[1:, 1:] |= mask[:-1, :-1]
    out[1:, :-1] |= mask[:-1, 1:]
    out[:-1, 1:] |= mask[1:, :-1]
    out[:-1, :-1] |= mask[1:, 1:]
    return out


def _coarsen_free(free: np.ndarray, factor: int) -> np.ndarray:
    """Conservative downsampling: a coarse cell is free iff all fine cells are."""
    h, w = free.shape
    ph = (-h) % factor
    pw = (-w) % factor
    padded = np.pad(free, ((0, ph), (0, pw)), constant_values=False)
    H, W = padded.shape
    return padded.reshape(H // factor, factor, W // factor, factor).all(axis=(1, 3))


def _wavefront(free: np.ndarray, start: tuple[int, int], max_steps: int) -> np.ndarray:
    """8-connected BFS distance in steps; -1 where unreachable."""
    dist = np.full(free.shape, -1, dtype=int)
    if not free[start]:
        return dist
    dist[start] = 0
    frontier = np.zeros_like(free)
    frontier[start] = True
    for it in range(1, max_steps + 1):
        frontier = _dilate8(frontier) & free & (dist < 0)
        if not frontier.any():
            break
        dist[frontier] = it
    return dist


def _descend(dist: np.ndarray, target: tuple[int, int]) -> list[tuple[int, int]]:
    """Walk the distance field from target back to its source."""
    path = [target]
    r, c = target
    while dist[r, c] > 0:
        want = dist[r, c] - 1
        for dr, dc in _SHIFTS8:
            nr, nc = r + dr, c + dc
            if 0 <= nr < dist.shape[0] and 0 <= nc < dist.shape[1] and dist[nr, nc] == want:
                r, c = nr, nc
                break
        else:
            break  # should not happen on a BFS field
        path.append((r, c))
    path.reverse()
    return path


def _farthest_point_indices(points: np.ndarray, k: int, first: int) -> list[int]:
    chosen = [first]
    min_d = np.linalg.norm(points - points[first], axis=1)
    while len(chosen) < k:
        nxt = int(np.argmax(min_d))
        chosen.append(nxt)
        min_d = np.minimum(min_d, np.linalg.norm(points - points[nxt], axis=1))
    return chosen


def _smooth_within(points: np.ndarray, passable, passes: int = 3) -> np.ndarray:
    """Average each interior point with its edge midpoints, reverting any point
    that the averaging would push into blocked space."""
    pts = points.copy()
    for _ in range(passes):
        if len(pts) < 3:
            break
        cand = pts.copy()
        cand[1:-1] = 0.25 * pts[:-2] + 0.5 * pts[1:-1] + 0.25 * pts[2:]
        ok = passable(cand)
        cand[~ok] = pts[~ok]
        pts = cand
    return pts


def _truncate_arc(points: np.ndarray, max_length: float) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if cum[-1] <= max_length:
        return points
    idx = int(np.searchsorted(cum, max_length))
    t = (max_length - cum[idx - 1]) / (cum[idx] - cum[idx - 1])
    cut = points[idx - 1] + t * (points[idx] - points[idx - 1])
    return np.vstack([points[:idx], cut])


MIN_FRONTIER_M = 1.5  # below this reach the robot counts as boxed in
PLAN_COARSEN = 2      # planning-grid coarsening factor
INFLATE_CELLS = 2     # obstacle inflation (fine cells) before planning


def _sample_geometric_candidates(view: TraversabilityView, pose: Pose2D,
                                 cfg: GeneratorConfig) -> list[Trajectory]:
    grid = view.grid
    res = grid.resolution

    def fine_free_at(points: np.ndarray) -> np.ndarray:
        cols = np.floor((points[:, 0] - grid.origin[0]) / res).astype(int)
        rows = np.floor((points[:, 1] - grid.origin[1]) / res).astype(int)
        inside = (rows >= 0) & (rows < grid.height) & (cols >= 0) & (cols < grid.width)
        out = np.zeros(len(points), dtype=bool)
        out[inside] = view.geometric[rows[inside], cols[inside]]
        return out

    # plan on a conservative coarse grid; relax inflation if it swallows the robot
    coarse_res = res * PLAN_COARSEN
    start_rc = (int((pose.y - grid.origin[1]) / coarse_res),
                int((pose.x - grid.origin[0]) / coarse_res))
    dist = None
    for inflate in (INFLATE_CELLS, 1, 0):
        blocked = ~view.geometric
        for _ in range(inflate):
            blocked = _dilate8(blocked)
        coarse_free = _coarsen_free(~blocked, PLAN_COARSEN)
        if (0 <= start_rc[0] < coarse_free.shape[0]
                and 0 <= start_rc[1] < coarse_free.shape[1]
                and coarse_free[start_rc]):
            dist = _wavefront(coarse_free, start_rc,
                              int(math.ceil(cfg.max_length / coarse_res)))
            break
    if dist is None:
        raise NoFreeSpace("robot cell is blocked even without inflation")

    d_max = dist.max()
    if d_max * coarse_res < MIN_FRONTIER_M:
        raise NoFreeSpace(f"farthest reachable point is only {d_max * coarse_res:.2f} m away")

    rows, cols = np.nonzero(dist > 0)
    centers = np.column_stack([
        grid.origin[0] + (cols + 0.5) * coarse_res,
        grid.origin[1] + (rows + 0.5) * coarse_res,
    ])
    dvals = dist[rows, cols]

    # spread targets over the reachable set, preferring cells in front of the
    # robot; the first target is always the farthest reachable cell
    local = world_to_robot(centers, pose)
    band = np.ones(len(dvals), dtype=bool)
    forward = local[:, 0] >= 0.0
    if forward.sum() >= cfg.K:
        band = forward
    if band.sum() < cfg.K:
        raise NoFreeSpace("not enough reachable free cells")

    idx = np.nonzero(band)[0]
    pts = centers[idx]
    first = int(np.argmax(dvals[idx]))
    chosen = _farthest_point_indices(pts, cfg.K, first)

    candidates = []
    for ci in chosen:
        r, c = rows[idx[ci]], cols[idx[ci]]
        cell_path = _descend(dist, (r, c))
        world = np.array([
            [grid.origin[0] + (cc + 0.5) * coarse_res, grid.origin[1] + (rr + 0.5) * coarse_res]
            for rr, cc in cell_path
        ])
        world[0] = [pose.x, pose.y]
        world = _smooth_within(world, fine_free_at)
        world = _truncate_arc(world, cfg.max_length)
        world = resample_points(world, cfg.M)
        # pull any waypoint the resampling dropped onto a blocked cell back
        # toward its (safe) predecessor
        ok = fine_free_at(world)
        for i in np.nonzero(~ok)[0]:
            for _ in range(60):
                world[i] = world[i - 1] + 0.7 * (world[i] - world[i - 1])
                if fine_free_at(world[i:i + 1])[0]:
                    break
        candidates.append(Trajectory(world_to_robot(world, pose), confidence=1.0))
    return candidates


def generate_candidates(scan: LidarScan, state: RobotState,
                        view: TraversabilityView | None, cfg: GeneratorConfig,
                        weights: GeneratorWeights | None = None) -> list[Trajectory]:
    """Produce K candidate trajectories in the robot frame at ``state.pose``."""
    if cfg.backend == "geometric-sampler":
        if view is None:
            raise ValueError("geometric-sampler backend needs a TraversabilityView")
        return _sample_geometric_candidates(view, state.pose, cfg)
    if cfg.backend == "latent-decoder":
        if weights is None:
            raise MissingWeights("latent-decoder backend needs GeneratorWeights")
        raw = encode_condition(scan, state)
        c = weights.encoder(raw)
        z = weights.latent(c)
        if cfg.perturb_latent:
            rng = np.random.default_rng(cfg.seed)
            z = z + rng.normal(0.0, cfg.perturb_scale, z.shape)
        return [
            decode_trajectory(project_latent(z, head), c, weights, max_length=cfg.max_length)
            for head in weights.heads
        ]
    raise ValueError(f"unknown generator backend '{cfg.backend}'")
