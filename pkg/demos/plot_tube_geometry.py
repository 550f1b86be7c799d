"""
Building a curve virtual tube
=============================

A tube is a centerline polyline plus a half-width. Every query projects a
point onto the centerline and reports the local frame and how far the point
is from the nearest wall.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from tubeswarm import build_tube, query
from tubeswarm.harness import open_tube_centerline

tube = build_tube(open_tube_centerline(), 1.0, resample_step=0.02)
print(f"centerline length {tube.length:.2f} m, {len(tube.curve.arc)} samples")

# %%
# Query a few points: one on the centerline, one near the left wall, one
# outside the tube. Outside points get a negative boundary distance.
for p in [(5.0, 2.5), (5.0, 3.3), (15.0, 0.5)]:
    q = query(tube, p)
    print(f"{p}: s={q.arc_length:6.2f}  lateral={q.lateral_offset:+.3f}  d_t={q.boundary_distance:+.3f}")

# %%
# Draw the walls and the local frames at a handful of arc lengths.
left, right = tube.boundary()
fig, ax = plt.subplots(figsize=(9, 3.5))
ax.plot(*tube.curve.points.T, "k--", lw=0.8)
ax.plot(*left.T, "C0")
ax.plot(*right.T, "C0")
for k in np.linspace(0, len(tube.curve.arc) - 1, 12).astype(int):
    p, t, n = tube.curve.points[k], tube.curve.tangents[k], tube.curve.normals[k]
    ax.arrow(*p, *(0.8 * t), color="C1", head_width=0.12)
    ax.arrow(*p, *(0.8 * n), color="C2", head_width=0.12)
ax.set_aspect("equal")
ax.set_title("tube walls, tangents (orange) and normals (green)")
fig.savefig("tube_geometry.png", dpi=120, bbox_inches="tight")
