"""A full closed-loop episode: replan, select, pure-pursuit, repeat.

Run:  python3 demos/05_closed_loop_episode.py
Writes demos/output/episode_<scenario>.png for two scenarios.
"""

import os
from pathlib import Path

os.environ.setdefault("MPLBACKEND", "Agg")
import matplotlib.pyplot as plt
import numpy as np

from marknav.evaluation import score_episode_frames
from marknav.pipeline import EpisodeConfig, run_episode
from marknav.trajgen import GeneratorConfig
from marknav.world import Label, PALETTE, load_bundled_scenario

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

lut = np.zeros((len(Label), 3), dtype=np.uint8)
for lab, rgb in PALETTE.items():
    lut[int(lab)] = rgb

for name in ("flowerbed", "corner"):
    sc = load_bundled_scenario(name)
    cfg = EpisodeConfig(max_steps=600, generator=GeneratorConfig(seed=7))
    log = run_episode(sc, cfg)
    scores = score_episode_frames(log, sc)
    frac = np.mean([s.traversability_fraction for s in scores])
    fre = np.mean([s.frechet_to_reference for s in scores])
    print(f"{name}: outcome={log.outcome} in {len(log.executed_path) - 1} steps, "
          f"{len(log.frames)} replans, mean traversability {frac * 100:.1f}%, "
          f"mean frechet-to-reference {fre:.2f} m")

    fig, ax = plt.subplots(figsize=(7, 5))
    ax.imshow(lut[sc.grid.cells], origin="lower",
              extent=[0, sc.grid.extent[0], 0, sc.grid.extent[1]])
    ax.plot(*sc.reference_path.T, "y--", lw=2, label="human reference")
    path = log.executed_path
    ax.plot(path[:, 0], path[:, 1], "c-", lw=2, label="executed")
    ax.plot(sc.start.x, sc.start.y, "b^", ms=10, label="start")
    ax.plot(*sc.goal, "r*", ms=14, label="goal")
    ax.legend(loc="best")
    ax.set_title(f"{name}: closed-loop run ({log.outcome})")
    fig.tight_layout()
    fig.savefig(out / f"episode_{name}.png", dpi=110)
    plt.close(fig)
    print(f"  wrote {out / f'episode_{name}.png'}")
