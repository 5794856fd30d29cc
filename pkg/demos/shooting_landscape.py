import matplotlib.pyplot as plt
import numpy as np

from _figures import save
from cmctori import OutcomeKind, Params, radius_bound, scan, shoot
from cmctori.shooting import default_scan_range

# How does the quarter arc end as the starting radius r0 moves up to a(H)?
# HitR: it reaches the equator while still pointing down (alpha < 0).
# HitA: it turns horizontal before reaching the equator (r < pi/2).
# Each change of outcome brackets one branch.
fig, axes = plt.subplots(2, 1, figsize=(9, 7), sharex=True)
for H in (-0.05, -0.1, -0.2):
    p = Params(2, H)
    res = scan(p, *default_scan_range(p), 400)
    r0 = np.array(res.r0)
    end = np.array([[state.r, state.alpha] for _, _, state in res.grid])
    hit_r = np.array([k is OutcomeKind.HIT_R for k in res.kinds])
    line, = axes[0].plot(r0, end[:, 0], lw=1, label=f"H = {H}")
    axes[1].plot(r0, end[:, 1], lw=1, color=line.get_color())
    axes[1].plot(r0[hit_r], end[hit_r, 1], ".", ms=2, color=line.get_color())
    for lo, hi in res.brackets:
        axes[0].axvline(0.5 * (lo + hi), color=line.get_color(), ls=":", lw=0.8)
    print(f"H = {H}: a(H) = {radius_bound(p):.5f}, brackets {res.brackets}")

axes[0].axhline(np.pi / 2, color="grey", lw=0.5)
axes[0].set_ylabel("terminal r")
axes[1].axhline(0.0, color="grey", lw=0.5)
axes[1].set_ylabel("terminal alpha")
axes[1].set_xlabel("r0")
axes[0].legend()
save(fig, "shooting_landscape.png")

# Close to a(H) the terminal radius creeps towards a(H) itself.
p = Params(2, -0.2)
a = radius_bound(p)
for k in range(1, 6):
    t = shoot(a - 10.0 ** -k, p)
    print(f"r0 = a - 1e-{k}: {t.kind.value:>4}  |r(s*) - a| = {abs(t.terminal.r - a):.3e}")
