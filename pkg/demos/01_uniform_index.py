"""How fast does a symbol grow at high frequency?

For a Levy-type process with symbol q(x, u), H(R) = sup_y sup_{|e| <= 1} |q(y, e/R)|
grows like R**(-beta) as R -> 0. The exponent beta is the uniform index: it is
the stable index for stable processes, 2 for any nondegenerate diffusion part
and 1 for a pure drift. A bounded symbol (compound Poisson) has index 0.
"""

import numpy as np

from levytime import estimate_uniform_index, h_global, symbol_preset

if __name__ == "__main__":
    print(f"{'preset':<14}{'H(1)':>10}{'H(1e-3)':>12}{'index':>8}")
    for name in ["brownian", "stable(0.5)", "cauchy", "stable(1.5)", "drift(1)", "cpp(2,-0.4)"]:
        q = symbol_preset(name)
        est = estimate_uniform_index(q)
        print(f"{name:<14}{h_global(q, 1.0):>10.3g}{h_global(q, 1e-3):>12.3g}{est.beta_infinity:>8.3f}")

    # the log-log fit behind one estimate
    est = estimate_uniform_index(symbol_preset("stable(1.5)"))
    print("\nstable(1.5): log10 H(R) against log10(1/R)")
    for r, h in zip(est.r_grid[::4], est.h_values[::4]):
        print(f"  {np.log10(1 / r):5.1f}  {np.log10(h):7.3f}")
