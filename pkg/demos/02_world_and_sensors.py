"""Scenario worlds and simulated sensors: semantic grid, lidar, camera.

Run:  python3 demos/02_world_and_sensors.py
Writes demos/output/world_<scenario>.png for each bundled scenario.
"""

import os
from pathlib import Path

os.environ.setdefault("MPLBACKEND", "Agg")
import matplotlib.pyplot as plt
import numpy as np

from marknav.world import (
    BUNDLED_SCENARIOS,
    Label,
    PALETTE,
    load_bundled_scenario,
    render_camera_image,
    simulate_lidar,
)

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

lut = np.zeros((len(Label), 3), dtype=np.uint8)
for lab, rgb in PALETTE.items():
    lut[int(lab)] = rgb

for name in BUNDLED_SCENARIOS:
    sc = load_bundled_scenario(name)
    scan = simulate_lidar(sc.grid, sc.start)
    hits = scan.ranges < scan.range_max
    print(f"{name}: grid {sc.grid.width}x{sc.grid.height} cells at "
          f"{sc.grid.resolution} m, {hits.sum()}/{scan.beams} beams hit something, "
          f"nearest obstacle {scan.ranges.min():.2f} m")

    # top-down semantic map with start, goal, and the human reference path
    fig, ax = plt.subplots(1, 2, figsize=(12, 4.5))
    ax[0].imshow(lut[sc.grid.cells], origin="lower",
                 extent=[0, sc.grid.extent[0], 0, sc.grid.extent[1]])
    ax[0].plot(*sc.reference_path.T, "y--", lw=2, label="reference")
    ax[0].plot(sc.start.x, sc.start.y, "b^", ms=10, label="start")
    ax[0].plot(*sc.goal, "r*", ms=14, label="goal")
    ax[0].legend(loc="upper right")
    ax[0].set_title(f"{name}: semantic map")

    # the robot's forward camera view from the start pose
    ax[1].imshow(render_camera_image(sc.grid, sc.start, sc.camera))
    ax[1].set_title("camera view at start")
    ax[1].axis("off")
    fig.tight_layout()
    fig.savefig(out / f"world_{name}.png", dpi=110)
    plt.close(fig)
    print(f"  wrote {out / f'world_{name}.png'}")
