"""Candidate generation with both backends: geometric sampler and latent decoder.

The sampler guarantees geometrically traversable waypoints; the latent decoder
runs the learned-pipeline mechanics (condition -> latent -> per-head projection
-> decode) with loadable weights and makes no such guarantee.

Run:  python3 demos/03_candidate_generation.py
Writes demos/output/candidates.png
"""

import os
from pathlib import Path

os.environ.setdefault("MPLBACKEND", "Agg")
import matplotlib.pyplot as plt
import numpy as np

from marknav.geometry import robot_to_world
from marknav.trajgen import GeneratorConfig, generate_candidates, random_weights
from marknav.world import (
    Label,
    PALETTE,
    RobotState,
    TraversabilityView,
    load_bundled_scenario,
    simulate_lidar,
    trace_traversable,
)

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

sc = load_bundled_scenario("flowerbed")
view = TraversabilityView.from_grid(sc.grid)
state = RobotState(pose=sc.start)
scan = simulate_lidar(sc.grid, sc.start)

sampler_cfg = GeneratorConfig(backend="geometric-sampler", K=8, seed=7)
sampled = generate_candidates(scan, state, view, sampler_cfg)
print("geometric sampler:")
for i, t in enumerate(sampled):
    geo = trace_traversable(view, "geometric", t, sc.start).all()
    sem = trace_traversable(view, "semantic", t, sc.start).mean()
    print(f"  candidate {i}: arc {t.arc_length:5.2f} m, geometric ok={geo}, "
          f"semantic fraction={sem:.2f}")

weights = random_weights(seed=42)
latent_cfg = GeneratorConfig(backend="latent-decoder", seed=42)
decoded = generate_candidates(scan, state, view, latent_cfg, weights=weights)
print(f"\nlatent decoder: {len(decoded)} candidates from {weights.K} projection heads")

lut = np.zeros((len(Label), 3), dtype=np.uint8)
for lab, rgb in PALETTE.items():
    lut[int(lab)] = rgb
fig, axes = plt.subplots(1, 2, figsize=(13, 4.5))
for ax, cands, title in ((axes[0], sampled, "geometric sampler"),
                         (axes[1], decoded, "latent decoder (random weights)")):
    ax.imshow(lut[sc.grid.cells], origin="lower",
              extent=[0, sc.grid.extent[0], 0, sc.grid.extent[1]])
    for t in cands:
        world = robot_to_world(t.waypoints, sc.start)
        ax.plot(*world.T, "-", lw=1.5)
    ax.plot(sc.start.x, sc.start.y, "b^", ms=10)
    ax.plot(*sc.goal, "r*", ms=14)
    ax.set_title(title)
fig.tight_layout()
fig.savefig(out / "candidates.png", dpi=110)
print(f"\nwrote {out / 'candidates.png'}")
