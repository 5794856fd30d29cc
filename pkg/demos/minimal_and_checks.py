from cmctori import Params, build_closed_profile, find_branches, run_suite
from cmctori.shooting import (
    boundary_radii,
    default_scan_range,
    epsilon_bound,
    estimate_delta,
    scan,
)

# The minimal case H = 0 has a single branch per dimension.
for n in (2, 3):
    b = find_branches(Params(n, 0.0))[0]
    c = build_closed_profile(b)
    print(f"n = {n}: rho = {b.rho:.11f}, simple loop: {c.simple}")

# How far can H move away from 0 while both branches persist?  The scan
# around the H = 0 flip gives the two boundary radii, and a dyadic search
# for the first |H| that changes the lower one's outcome gives delta.
p0 = Params(2, 0.0)
r_prime, r_double = boundary_radii(scan(p0, *default_scan_range(p0), 512))
delta = estimate_delta(2, r_prime, r_double)
print(f"boundary radii {r_prime:.6f}, {r_double:.6f}; delta = {delta}")
print("estimated two-branch regime: 0 < -H <", epsilon_bound(2, r_prime, delta))

# Every numerical check on a small grid; the CLI's `verify` runs the same
# suite on the full default grid.
reports = run_suite(ns=(2, 3), Hs=(-0.05, -0.2), r0_points=16)
for name, rep in reports.items():
    print(f"{name:>22}: {'ok' if rep.passed else 'FAILED'}  "
          f"{rep.cases_passed}/{rep.cases_run} (+{rep.vacuous} vacuous), "
          f"worst margin {rep.worst_margin:.2e}")
