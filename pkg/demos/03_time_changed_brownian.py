"""Slowing Brownian motion down near the origin.

Time-changing Brownian motion with the speed g(x) = min(|x|^3, 1) + 0.1 gives a
process whose symbol is g(x) * q(u) = -g(x) u^2 / 2. We simulate 2000 paths,
solve the time change path by path and test the martingale problem for the
new symbol. Replacing g by 2 g in the candidate must fail the same test.
"""

from levytime import SimConfig, parse_g, simulate_ensemble, solve_tce, symbol_preset, triplet_preset
from levytime.verify import check_time_changed_symbol, time_changed_symbol

if __name__ == "__main__":
    e = simulate_ensemble(triplet_preset("brownian"), 0.0, SimConfig(1e-3, 1.0, 2000), master_seed=3)
    g = parse_g("min(pow(abs(x), 3), 1) + 0.1")
    sols = solve_tce(e, g, z_horizon=0.9)
    q = symbol_preset("brownian")
    u_grid = [-2.0, -1.0, 1.0, 2.0]
    for label, cand in [("g * q", None), ("2 g * q", time_changed_symbol(g, q, factor=2.0))]:
        r = check_time_changed_symbol(sols, g, q, u_grid, 0.1, 0.9, candidate=cand)
        print(f"candidate {label:<8} pass fraction {r.fraction:.2f}")
        for res in r.results:
            print(f"   u = {res.u[0]:+.1f}  |defect| = {abs(res.estimate):.4f}  3 stderr = {3 * res.stderr:.4f}")
    clocks = [s.alpha[-1] for s in sols]
    print(f"clock at t = 0.9: mean {sum(clocks) / len(clocks):.3f}, between {min(clocks):.3f} and {max(clocks):.3f}")
