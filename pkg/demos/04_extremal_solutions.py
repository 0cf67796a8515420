"""Minimal and maximal solutions of y(t) = int_0^t Y(y(s)) ds.

For a nonnegative profile Y the maximal solution inverts I(x) = int_0^x ds / Y(s)
up to the first zero tau of Y; it leaves tau only if I stays finite there.
The minimal solution stops at tau. Below, Y(s) = |s - 0.3|^p for a few
powers p: for p < 1 the solutions split at tau = 0.3, for p >= 1 they agree.
"""

import numpy as np

from levytime import TimeProfile, residual, solve_ivp_extremal

if __name__ == "__main__":
    t = np.linspace(0.0, 2.0, 2001)
    for p in (0.3, 0.6, 1.0, 1.5):
        Y = TimeProfile.from_function(lambda s: np.abs(s - 0.3) ** p, 3.0, 1e-4)
        sol = solve_ivp_extremal(Y, t)
        print(f"p = {p:3.1f}  tau = {sol.tau:.3f}  unique = {sol.unique!s:<5}  gap = {sol.gap:.3f}"
              f"  residuals {residual(Y, sol.alpha1, t):.1e} / {residual(Y, sol.alpha2, t):.1e}")
