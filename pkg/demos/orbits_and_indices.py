"""Fixed points of a small cosine map, their Morse and Maslov indices, and
the iteration bounds along their iterates.

Run with ``python3 demos/orbits_and_indices.py``.
"""

import numpy as np

from sympal import canonical_path, check_iteration_bounds, find_critical_points, sys_c

fmap = sys_c()
found = find_critical_points(fmap, 1)
print(f"{len(found)} fixed points of {fmap.label}")

for rec in found:
    x, y = rec.loop.points[0]
    print(f"  ({x:+.3f}, {y:+.3f})  action {rec.action:+.5f}  mor {rec.morse_index}  "
          f"mas {rec.maslov:+d}  |floquet| {np.abs(rec.floquet).max():.4f}")

# mor - dkp should equal mas on each of them
print("index identity:", all(r.morse_index - 1 == r.maslov for r in found))

# the saddle is hyperbolic, so its Maslov index grows exactly linearly
saddle = max(found, key=lambda r: np.abs(r.floquet).max())
pts = saddle.loop.points
path = canonical_path(fmap, pts[0], 1, points=pts)
for n in (1, 2, 4, 8, 12):
    rep = check_iteration_bounds(path, n, tol_null=saddle.tol_null)
    print(f"  n = {n:2d}: {rep['lower']:+.3f} <= mas {rep['mas']:+d} <= {rep['upper']:+.3f}")
