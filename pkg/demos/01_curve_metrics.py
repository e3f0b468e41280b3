"""Curve metrics walkthrough: Hausdorff, discrete Frechet, and resampling.

Run:  python3 demos/01_curve_metrics.py
Writes demos/output/curve_metrics.png
"""

import os
from pathlib import Path

os.environ.setdefault("MPLBACKEND", "Agg")
import matplotlib.pyplot as plt
import numpy as np

from marknav.geometry import (
    Trajectory,
    frechet_distance,
    hausdorff_distance,
    resample,
)

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

# two paths heading the same way with a detour in the middle
straight = np.column_stack([np.linspace(0, 12, 13), np.zeros(13)])
ts = np.linspace(0, 12, 25)
detour = np.column_stack([ts, 2.0 * np.exp(-((ts - 6) ** 2) / 4)])

print("straight vs detour:")
print(f"  hausdorff = {hausdorff_distance(straight, detour):.3f} m  "
      "(worst point-to-set gap)")
print(f"  frechet   = {frechet_distance(straight, detour):.3f} m  "
      "(best monotone walk, so ordering matters)")

# a backward copy has identical points but a very different frechet distance
backward = detour[::-1]
print("\ndetour vs its reversal (same point set, opposite direction):")
print(f"  hausdorff = {hausdorff_distance(detour, backward):.3f} m")
print(f"  frechet   = {frechet_distance(detour, backward):.3f} m")

# resampling to a fixed waypoint count keeps endpoints and arc spacing uniform
traj = Trajectory(np.array([[0.0, 0.0], [4.0, 0.0], [4.0, 3.0], [9.0, 3.0]]))
even = resample(traj, 12)
gaps = np.linalg.norm(np.diff(even.waypoints, axis=0), axis=1)
print(f"\nresampled L-path: {len(even)} points, spacing "
      f"{gaps.min():.3f}..{gaps.max():.3f} m")

fig, ax = plt.subplots(1, 2, figsize=(10, 4))
ax[0].plot(*straight.T, "o-", label="straight")
ax[0].plot(*detour.T, "s-", label="detour")
ax[0].set_title("hausdorff vs frechet inputs")
ax[0].legend()
ax[0].set_aspect("equal")
ax[1].plot(*traj.waypoints.T, "o-", label="original")
ax[1].plot(*even.waypoints.T, ".--", label="resampled x12")
ax[1].set_title("uniform arc-length resampling")
ax[1].legend()
ax[1].set_aspect("equal")
fig.tight_layout()
fig.savefig(out / "curve_metrics.png", dpi=110)
print(f"\nwrote {out / 'curve_metrics.png'}")
