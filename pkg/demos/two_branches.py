import matplotlib.pyplot as plt
import numpy as np

from _figures import save
from cmctori import Params, build_closed_profile, cmc_residual, find_branches, hausdorff_distance

# Two hypertori with the same mean curvature H = -0.2 in S^5 (n = 2).
# Every quarter arc starts on the diagonal theta = pi/4 heading straight
# down (alpha = -pi/2); we want the starting radii whose arc lands on the
# equator r = pi/2 exactly when it turns horizontal (alpha = 0).
params = Params(2, -0.2)
branches = find_branches(params)
for b in branches:
    print(f"rho = {b.rho:.10f}  s* = {b.s_star:.6f}  "
          f"residuals = ({b.residual_r:.1e}, {b.residual_alpha:.1e})")

# Reflecting the quarter arc across the equator and the diagonal closes it up
curves = [build_closed_profile(b) for b in branches]
for c in curves:
    print(f"closure gap {c.closure_gap:.1e}, simple {c.simple}, "
          f"CMC residual {cmc_residual(c):.1e}")
print("Hausdorff distance between the loops:", hausdorff_distance(*curves))

fig, (left, right) = plt.subplots(1, 2, figsize=(11, 5))
t = np.linspace(0, np.pi / 2, 200)
for c, colour in zip(curves, ("tab:red", "tab:green")):
    label = f"rho = {c.rho:.5f}"
    left.plot(c.theta, c.r, color=colour, label=label)
    # geodesic polar picture: distance r from the pole, angle theta
    right.plot(c.r * np.cos(c.theta), c.r * np.sin(c.theta), color=colour, label=label)
left.axhline(np.pi / 2, color="grey", lw=0.5)
left.axvline(np.pi / 4, color="grey", lw=0.5)
left.set_xlabel("theta")
left.set_ylabel("r")
left.legend()
right.set_aspect("equal")
right.plot(*np.pi / 2 * np.array([np.cos(t), np.sin(t)]), color="grey", lw=0.5)
right.set_xlabel("r cos theta")
right.set_ylabel("r sin theta")
save(fig, "two_branches.png")
