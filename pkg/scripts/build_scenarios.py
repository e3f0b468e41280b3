#!/usr/bin/env python3
"""Regenerate the bundled scenario files and the broken validation fixtures.

Each scenario is painted as world-frame rectangles on a base label, then saved
through the library so the committed files are guaranteed to validate.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from marknav.geometry import CameraModel, Pose2D
from marknav.world import (
    Label,
    ScenarioSpec,
    SemanticGrid,
    load_scenario,
    save_scenario,
)

OUT = Path(__file__).resolve().parents[1] / "src" / "marknav" / "scenarios"
RES = 0.1
CAMERA = dict(fx=280.0, fy=280.0, cx=320.0, cy=240.0, width=640, height=480)
MOUNT = (0.2, 0.0, 0.8, 0.25)
WALL = 0.5  # perimeter wall thickness, keeps lidar and BFS inside the map


def blank(size_x, size_y, base=Label.PAVEMENT):
    w = int(round(size_x / RES))
    h = int(round(size_y / RES))
    cells = np.full((h, w), int(base), dtype=np.uint8)
    return SemanticGrid(cells=cells, resolution=RES, origin=np.zeros(2))


def paint(grid, label, x0, x1, y0, y1):
    cx = grid.origin[0] + (np.arange(grid.width) + 0.5) * grid.resolution
    cy = grid.origin[1] + (np.arange(grid.height) + 0.5) * grid.resolution
    mask = ((cy >= y0) & (cy < y1))[:, None] & ((cx >= x0) & (cx < x1))[None, :]
    grid.cells[mask] = int(label)


def perimeter(grid, size_x, size_y):
    paint(grid, Label.BUILDING, 0, size_x, 0, WALL)
    paint(grid, Label.BUILDING, 0, size_x, size_y - WALL, size_y)
    paint(grid, Label.BUILDING, 0, WALL, 0, size_y)
    paint(grid, Label.BUILDING, size_x - WALL, size_x, 0, size_y)


def spec(name, grid, start, goal, ref):
    cam = CameraModel.from_mount(**CAMERA, mount_xyz=MOUNT[:3], pitch=MOUNT[3])
    return ScenarioSpec(name=name, grid=grid, start=Pose2D(*start), goal=np.array(goal),
                        reference_path=np.array(ref), camera=cam, camera_mount=MOUNT)


def flowerbed():
    sx, sy = 26.0, 16.0
    g = blank(sx, sy)
    paint(g, Label.GRASS, WALL, sx - WALL, 13.5, sy - WALL)
    paint(g, Label.FLOWERBED, 9.0, 17.0, 5.0, 12.0)
    perimeter(g, sx, sy)
    ref = [(2.5, 8.0), (4.5, 6.0), (6.5, 4.0), (9.0, 3.0), (13.0, 2.5),
           (17.0, 3.0), (19.5, 4.5), (21.5, 6.5), (23.5, 8.0)]
    return spec("flowerbed", g, (2.5, 8.0, 0.0), (23.5, 8.0), ref)


def curb():
    sx, sy = 26.0, 14.0
    g = blank(sx, sy, base=Label.SIDEWALK)
    paint(g, Label.GRASS, WALL, sx - WALL, WALL, 3.5)
    paint(g, Label.CURB, WALL, sx - WALL, 8.0, 8.4)
    paint(g, Label.ROAD, WALL, sx - WALL, 8.4, sy - WALL)
    paint(g, Label.GRASS, 9.0, 17.5, 3.5, 6.0)  # bulge squeezing the sidewalk
    perimeter(g, sx, sy)
    ref = [(2.5, 5.5), (5.0, 5.9), (7.5, 6.6), (9.0, 7.0), (11.0, 7.1),
           (13.5, 7.1), (16.0, 7.1), (17.5, 7.0), (19.5, 6.3), (21.5, 5.7),
           (23.5, 5.0)]
    return spec("curb", g, (2.5, 5.5, 0.0), (23.5, 5.0), ref)


def crosswalk():
    sx, sy = 26.0, 16.0
    g = blank(sx, sy, base=Label.SIDEWALK)
    paint(g, Label.ROAD, 10.5, 15.5, WALL, sy - WALL)
    paint(g, Label.CROSSWALK, 10.5, 15.5, 10.0, 12.0)
    paint(g, Label.BUILDING, 3.0, 7.0, 12.5, 15.5)
    paint(g, Label.BUILDING, 19.0, 23.0, WALL, 3.5)
    perimeter(g, sx, sy)
    ref = [(3.0, 5.5), (6.0, 6.5), (8.5, 8.5), (9.5, 10.5), (11.0, 11.0),
           (13.0, 11.0), (15.0, 11.0), (16.5, 10.8), (18.0, 9.5), (20.0, 7.5),
           (21.8, 6.2), (23.0, 5.5)]
    return spec("crosswalk", g, (3.0, 5.5, 0.0), (23.0, 5.5), ref)


def corner():
    sx, sy = 20.0, 20.0
    g = blank(sx, sy)
    paint(g, Label.BUILDING, 4.0, 13.5, 6.5, 17.0)
    paint(g, Label.GRASS, 13.5, 17.5, 6.5, 15.0)  # pocket toward the goal
    paint(g, Label.OBSTACLE, 13.5, 17.5, 15.0, 15.4)  # dead-ends the pocket
    perimeter(g, sx, sy)
    ref = [(2.0, 3.0), (6.0, 2.5), (10.0, 2.5), (14.0, 3.0), (16.5, 4.0),
           (18.3, 6.0), (18.6, 9.0), (18.6, 12.0), (18.6, 15.0), (18.4, 16.5),
           (18.5, 18.0)]
    return spec("corner", g, (2.0, 3.0, 0.0), (18.5, 18.0), ref)


BROKEN_BASE = """\
name: {name}
resolution: {resolution}
origin: [0.0, 0.0]
rows:
{rows}
start: {start}
goal: {goal}
reference_path: [[1.0, 1.0], [8.0, 1.0]]
camera: {{fx: {fx}, fy: 120.0, cx: 80.0, cy: 60.0, width: 160, height: 120, mount: [0.2, 0.0, 0.8, 0.25]}}
"""


def broken_fixtures():
    # 10 x 3 cells at 1 m: pavement with a building run and one flowerbed cell
    rows_ok = "\n".join([
        '  - "BBBBBBBBBB"',
        '  - "PPPPPFPPPP"',
        '  - "PPPPPPPPPP"',
    ])
    rows_ragged = "\n".join([
        '  - "BBBBBBBBBB"',
        '  - "PPPPPFPP"',
        '  - "PPPPPPPPPP"',
    ])
    good = dict(resolution=1.0, rows=rows_ok, start="[1.0, 1.0, 0.0]",
                goal="[8.0, 1.0]", fx=120.0)
    cases = {
        "start_on_building": dict(good, start="[1.0, 2.5, 0.0]"),
        "goal_outside": dict(good, goal="[50.0, 1.0]"),
        "reference_off_pavement": dict(good),  # patched below
        "bad_resolution": dict(good, resolution=-0.1),
        "ragged_rows": dict(good, rows=rows_ragged),
        "bad_camera_fx": dict(good, fx=0.0),
    }
    out = {}
    for name, kw in cases.items():
        text = BROKEN_BASE.format(name=name, **kw)
        if name == "reference_off_pavement":
            text = text.replace("reference_path: [[1.0, 1.0], [8.0, 1.0]]",
                                "reference_path: [[1.0, 1.0], [5.5, 1.5]]")
        out[name] = text
    return out


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "broken").mkdir(exist_ok=True)
    for build in (flowerbed, curb, crosswalk, corner):
        sc = build()
        path = OUT / f"{sc.name}.yaml"
        save_scenario(sc, path)
        load_scenario(path)  # must round-trip through full validation
        print(f"wrote {path}")
    for name, text in broken_fixtures().items():
        path = OUT / "broken" / f"{name}.yaml"
        path.write_text(text)
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
