"""A time change that is not unique.

Freeze the path X(t) = t of a unit drift and ask for Z(t) = X(A(t)) with
A(t) = int_0^t g(Z(s)) ds and g(x) = min(sqrt|x|, 1). Since g vanishes at the
start, A = 0 (stay at 0 forever) is a solution, but so is A(t) = t^2 / 4: the
reciprocal integral int_0 ds / sqrt(s) is finite, so the zero does not trap.
With g(x) = min(|x|, 1) instead, int_0 ds / s diverges and A = 0 is the only
solution. The solver returns both extremal clocks and the uniqueness verdict.
"""

import numpy as np

from levytime import SimConfig, parse_g, simulate_ensemble, solve_tce, triplet_preset

if __name__ == "__main__":
    e = simulate_ensemble(triplet_preset("drift(1)"), 0.0, SimConfig(1e-3, 1.0, 1), master_seed=0)
    for text, lam in [("min(sqrt(abs(x)), 1)", 0.5), ("min(abs(x), 1)", 1.0)]:
        s = solve_tce(e, parse_g(text, growth_exponent=lam))[0]
        print(f"g = {text}")
        print(f"  unique: {s.unique}   index gap (lambda - beta): {s.report.index_gap:+.2f}")
        for t in (0.25, 0.5, 1.0):
            i = int(np.searchsorted(s.times, t))
            print(f"  t = {t:4.2f}   minimal clock {s.alpha[i]:.4f}   maximal clock {s.alpha_max[i]:.4f}"
                  f"   t^2/4 = {t * t / 4:.4f}")
