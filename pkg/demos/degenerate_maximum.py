"""The flat maximum of ``-eps (sin^4 pi x + sin^4 pi y)`` at the origin.

Shows the index pattern of its iterates, the degenerate-maximum checks and
why a sampled vanishing homotopy is out of reach for this map: the loop
length forced by the modulus of the maximum is huge.
"""

import numpy as np

from sympal import sdm_criteria, sys_b
from sympal.sdm import admissible_parameters, sdm1_check

fmap = sys_b()
origin = [0.0, 0.0]

rep = sdm_criteria(fmap, origin, range(1, 9), "max")
print("label:", rep.label)
for row in rep.criteria:
    print(f"  n = {row['n']}: mor {row['morse_index']}  nul {row['nullity']}  unipotent {row['unipotent']}")

# the shell test distinguishes a maximum from a minimum of the mirrored map
print("max shells ok:", all(e["ok"] for e in sdm1_check(fmap, origin, "max")))
print("mirror as max:", all(e["ok"] for e in sdm1_check(fmap.negated(), origin, "max")))

print("\nsmallest admissible loop per radius (epsilon = 1)")
for R in np.arange(0.1, 0.8, 0.1):
    par = admissible_parameters(fmap, origin, float(R), 1.0)
    print(f"  R = {R:.1f}: r = {par['r']:.2e}  n' = {par['n_prime']:.3e}")
