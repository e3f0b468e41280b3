"""Candidate pooling, dedup, visual marking, and pluggable trajectory selection.

The flow per replan round: fresh candidates are pooled with the previous
round's batch (re-expressed in the current robot frame), near-duplicates are
filtered by Hausdorff distance, the survivors are numbered by distance to
goal, drawn as numbered lines onto the camera image, and a backend (oracle,
replay, remote, or lowest-number heuristic) answers with one number.
"""

import base64
import os
import re
import time
from dataclasses import dataclass, field

import numpy as np
import requests

from ._draw import draw_disc, draw_number, draw_polyline, png_bytes
from .geometry import (
    CameraModel,
    EmptyProjection,
    PixelPolyline,
    Pose2D,
    Trajectory,
    distance_to_goal,
    hausdorff_distance,
    project_to_image,
    robot_to_world,
    to_camera_frame,
    world_to_robot,
)
from .world import TraversabilityView, trace_traversable


class EmptyBatch(Exception):
    pass


class NothingVisible(Exception):
    pass


class EmptyTemplate(Exception):
    pass


class Unparseable(Exception):
    def __init__(self, response: str):
        self.response = response
        super().__init__(f"no trajectory answer found in: {response!r}")


class InvalidChoice(Exception):
    def __init__(self, choice: int, valid, response: str = ""):
        self.choice = choice
        self.response = response
        super().__init__(f"chose {choice}, valid numbers are {sorted(valid)}")


class BackendUnavailable(Exception):
    pass


class FixtureExhausted(Exception):
    pass


# marker rendering constants (chosen for legibility at 640x480)
LINE_COLOR = (230, 60, 60)
DISC_COLOR = (180, 20, 20)
GLYPH_COLOR = (255, 255, 255)
LINE_WIDTH = 3
DISC_RADIUS = 12

STYLE_LINES_AND_NUMBERS = "lines-and-numbers"
STYLE_LINES = "lines"
STYLE_NUMBERS = "numbers"

TRAVERSABILITY_INSTRUCTION = (
    "Pick one path that I should follow to navigate safely, like what humans do. "
    "Remember that I must walk on pavements, avoid rough, bumpy terrains, and "
    "follow the rules. I cannot go over/under the curbs."
)
DIRECTION_INSTRUCTION = "The lower number indicates the shortest path to the goal. Pick only one."
ANSWER_FORMAT = "Provide the answer in this form: {'trajectory': []}"
DEFAULT_TEMPLATE = "\n".join([TRAVERSABILITY_INSTRUCTION, DIRECTION_INSTRUCTION, ANSWER_FORMAT])


# ---------------------------------------------------------------------------
# candidate pool

@dataclass
class PoolBatch:
    pose: Pose2D  # robot pose when this batch was generated
    trajectories: list


@dataclass
class CandidatePool:
    """Batches from the latest generation rounds, oldest first.

    All stored waypoints are kept re-expressed in ``frame_pose``'s frame, which
    is always the pose of the newest batch.
    """

    capacity: int = 2
    batches: list = field(default_factory=list)
    frame_pose: Pose2D | None = None

    def __len__(self) -> int:
        return len(self.batches)

    def trajectories_newest_first(self) -> list:
        out = []
        for batch in reversed(self.batches):
            out.extend(batch.trajectories)
        return out


def update_pool(pool: CandidatePool, batch, pose: Pose2D) -> CandidatePool:
    """Append a batch, re-expressing older batches in the new robot frame and
    evicting the oldest batch beyond capacity."""
    batch = list(batch)
    if not batch:
        raise EmptyBatch("cannot pool an empty candidate batch")
    entries = []
    if pool.batches:
        old_frame = pool.frame_pose
        for pb in pool.batches:
            moved = [
                Trajectory(world_to_robot(robot_to_world(t.waypoints, old_frame), pose),
                           confidence=t.confidence)
                for t in pb.trajectories
            ]
            entries.append(PoolBatch(pose=pb.pose, trajectories=moved))
    entries.append(PoolBatch(pose=pose, trajectories=batch))
    while len(entries) > pool.capacity:
        entries.pop(0)
    return CandidatePool(capacity=pool.capacity, batches=entries, frame_pose=pose)


def dedup_representatives(pool: CandidatePool, d_t: float) -> list:
    """Greedy newest-first filter keeping only trajectories whose Hausdorff
    distance to every kept one exceeds d_t."""
    if d_t <= 0:
        raise ValueError("d_t must be > 0")
    kept = []
    for traj in pool.trajectories_newest_first():
        if all(hausdorff_distance(traj.waypoints, k.waypoints) > d_t for k in kept):
            kept.append(traj)
    return kept


# ---------------------------------------------------------------------------
# numbering and marking

@dataclass
class MarkerItem:
    number: int
    polyline: PixelPolyline
    trajectory: Trajectory


@dataclass
class MarkerSet:
    items: list

    def numbers(self) -> set:
        return {it.number for it in self.items}

    def by_number(self, n: int) -> MarkerItem:
        for it in self.items:
            if it.number == n:
                return it
        raise KeyError(n)


def sort_and_number(trajs, goal) -> list:
    """Stable-sort trajectories by endpoint distance to goal; returns
    [(number, trajectory), ...] with number 1 closest."""
    trajs = list(trajs)
    if not trajs:
        raise EmptyBatch("nothing to number")
    dists = np.array([distance_to_goal(t.waypoints, goal) for t in trajs])
    order = np.argsort(dists, kind="stable")
    return [(rank + 1, trajs[i]) for rank, i in enumerate(order)]


def build_marker_set(numbered, cam: CameraModel) -> MarkerSet:
    """Project numbered trajectories into the image; invisible ones are dropped
    and the survivors renumbered consecutively (order preserved)."""
    items = []
    for _, traj in numbered:
        try:
            poly = project_to_image(to_camera_frame(traj.waypoints, cam), cam)
        except EmptyProjection:
            continue
        items.append(MarkerItem(number=len(items) + 1, polyline=poly, trajectory=traj))
    return MarkerSet(items=items)


def annotate_image(image: np.ndarray, markers: MarkerSet, cam: CameraModel,
                   style: str = STYLE_LINES_AND_NUMBERS) -> np.ndarray:
    """Draw marker polylines and numbered discs; lower numbers render on top."""
    drawable = [it for it in markers.items if len(it.polyline) > 0]
    if not drawable:
        raise NothingVisible("every marker polyline was fully clipped")
    if image.shape[0] != cam.height or image.shape[1] != cam.width:
        raise ValueError("image size does not match the camera model")
    out = image.copy()
    for item in sorted(drawable, key=lambda it: -it.number):
        if style in (STYLE_LINES_AND_NUMBERS, STYLE_LINES):
            draw_polyline(out, item.polyline.points, LINE_COLOR, width=LINE_WIDTH)
        if style in (STYLE_LINES_AND_NUMBERS, STYLE_NUMBERS):
            end = item.polyline.points[-1]
            draw_disc(out, end, DISC_RADIUS, DISC_COLOR)
            draw_number(out, end, item.number, GLYPH_COLOR)
    return out


# ---------------------------------------------------------------------------
# prompting and parsing

@dataclass
class PromptBundle:
    instruction: str
    valid_numbers: set
    image: np.ndarray | None = None


def build_prompt(markers: MarkerSet, template: str | None = None,
                 image: np.ndarray | None = None) -> PromptBundle:
    """Fill the instruction template; '{N}' expands to the marker number range."""
    if not markers.items:
        raise EmptyBatch("cannot prompt without markers")
    if template is None:
        template = DEFAULT_TEMPLATE
    if not template:
        raise EmptyTemplate("prompt template is empty")
    numbers = markers.numbers()
    instruction = template.replace("{N}", f"1-{max(numbers)}")
    return PromptBundle(instruction=instruction, valid_numbers=numbers, image=image)


_ANSWER_RE = re.compile(r"['\"]?trajectory['\"]?\s*[:=]?\s*\[\s*(\d+)")


def parse_response(text: str, valid) -> int:
    """Extract the first trajectory-answer integer list from free text."""
    match = _ANSWER_RE.search(text or "")
    if not match:
        raise Unparseable(text or "")
    choice = int(match.group(1))
    if choice not in valid:
        raise InvalidChoice(choice, valid, response=text)
    return choice


def format_answer(choice: int) -> str:
    return "{'trajectory': [%d]}" % choice


# ---------------------------------------------------------------------------
# backends

@dataclass
class SelectionResult:
    chosen: int
    raw_response: str
    backend: str
    latency: float = 0.0


@dataclass
class SelectionContext:
    """World knowledge for the oracle backend and the fallback policy."""

    view: TraversabilityView
    pose: Pose2D


class OracleBackend:
    """Ground-truth stand-in for a vision-language selector: prefers the
    lowest number whose whole trajectory is semantically traversable, else the
    highest semantic fraction (ties to the lower number)."""

    name = "oracle"
    needs_image = False

    def choose(self, bundle: PromptBundle, markers: MarkerSet,
               context: SelectionContext | None) -> SelectionResult:
        if context is None:
            raise ValueError("oracle backend needs a SelectionContext")
        best = None  # (not fully traversable, -fraction, number)
        for item in sorted(markers.items, key=lambda it: it.number):
            flags = trace_traversable(context.view, "semantic", item.trajectory, context.pose)
            key = (not flags.all(), -float(flags.mean()), item.number)
            if best is None or key < best[0]:
                best = (key, item.number)
        chosen = best[1]
        return SelectionResult(chosen=chosen, raw_response=format_answer(chosen),
                               backend=self.name)


class HeuristicBackend:
    """No model call at all: picks the lowest number, i.e. the candidate whose
    endpoint is closest to the goal (the numbering already encodes that)."""

    name = "argmin-goal-distance"
    needs_image = False

    def choose(self, bundle, markers, context) -> SelectionResult:
        chosen = min(bundle.valid_numbers)
        return SelectionResult(chosen=chosen, raw_response=format_answer(chosen),
                               backend=self.name)


class ReplayBackend:
    """Replays recorded raw responses, one per selection round."""

    name = "replay"
    needs_image = False

    def __init__(self, responses=None, fixture_path=None):
        if fixture_path is not None:
            with open(fixture_path) as fh:
                responses = [line.rstrip("\n") for line in fh if line.strip()]
        self._responses = list(responses or [])
        self._cursor = 0

    def choose(self, bundle, markers, context) -> SelectionResult:
        if self._cursor >= len(self._responses):
            raise FixtureExhausted(f"fixture exhausted after {self._cursor} responses")
        raw = self._responses[self._cursor]
        self._cursor += 1
        chosen = parse_response(raw, bundle.valid_numbers)
        return SelectionResult(chosen=chosen, raw_response=raw, backend=self.name)


@dataclass
class RemoteConfig:
    endpoint: str
    model: str = "gpt-4o"
    api_key_env: str = "MARKNAV_API_KEY"
    timeout: float = 20.0
    retries: int = 2


class RemoteBackend:
    """Sends the instruction plus base64 PNG to a chat-completion endpoint."""

    name = "remote"
    needs_image = True

    def __init__(self, config: RemoteConfig):
        self.config = config

    def _request_once(self, bundle: PromptBundle) -> str:
        content = [{"type": "text", "text": bundle.instruction}]
        if bundle.image is not None:
            b64 = base64.b64encode(png_bytes(bundle.image)).decode("ascii")
            content.append({
                "type": "image_url",
                "image_url": {"url": f"data:image/png;base64,{b64}"},
            })
        payload = {"model": self.config.model,
                   "messages": [{"role": "user", "content": content}]}
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        resp = requests.post(self.config.endpoint, json=payload, headers=headers,
                             timeout=self.config.timeout)
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"]

    def choose(self, bundle, markers, context) -> SelectionResult:
        last_error = None
        for _ in range(self.config.retries + 1):
            try:
                raw = self._request_once(bundle)
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_error = exc
                continue
            try:
                chosen = parse_response(raw, bundle.valid_numbers)
            except (Unparseable, InvalidChoice) as exc:
                last_error = exc
                continue
            return SelectionResult(chosen=chosen, raw_response=raw, backend=self.name)
        raise BackendUnavailable(f"remote selection failed after "
                                 f"{self.config.retries + 1} attempts: {last_error}")


def fallback_choice(markers: MarkerSet, context: SelectionContext | None,
                    raw_response: str = "") -> SelectionResult:
    """Degraded policy when a backend fails: the lowest number among
    geometrically traversable candidates (lowest number overall if none are)."""
    ordered = sorted(markers.items, key=lambda it: it.number)
    chosen = ordered[0].number
    if context is not None:
        for item in ordered:
            flags = trace_traversable(context.view, "geometric", item.trajectory, context.pose)
            if flags.all():
                chosen = item.number
                break
    return SelectionResult(chosen=chosen, raw_response=raw_response, backend="fallback")


def select(backend, bundle: PromptBundle, markers: MarkerSet,
           context: SelectionContext | None = None) -> SelectionResult:
    """Run one selection round; response-level failures degrade to the fallback
    policy, transport-level failures do too when world context is available."""
    t0 = time.perf_counter()
    try:
        result = backend.choose(bundle, markers, context)
    except (Unparseable, InvalidChoice) as exc:
        result = fallback_choice(markers, context, raw_response=getattr(exc, "response", ""))
    except BackendUnavailable:
        if context is None:
            raise
        result = fallback_choice(markers, context)
    result.latency = time.perf_counter() - t0
    if result.chosen not in bundle.valid_numbers:
        raise InvalidChoice(result.chosen, bundle.valid_numbers, result.raw_response)
    return result
