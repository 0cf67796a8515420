"""Random bounded right-regular profiles and fixed-point iterates of the integral map."""

import numpy as np

from levytime.ivp import TimeProfile, integral_along, residual, solve_ivp_extremal


def random_profile(rng, dt):
    """Bounded, nonnegative, right-regular; about half vanish somewhere with a random local power."""
    kind = rng.integers(3)
    amp = rng.uniform(0.3, 2.0)
    w, ph = rng.uniform(1, 8), rng.uniform(0, 2 * np.pi)
    horizon = 2.5 * amp + 0.5  # covers every solution on t in [0, 1]
    if kind == 0:
        f = lambda s: amp * (1.0 + 0.5 * np.sin(w * s + ph))  # noqa: E731
    else:
        z = 0.0 if kind == 1 else rng.uniform(0.05, 0.8)
        p = rng.choice([rng.uniform(0.2, 0.9), rng.uniform(1.0, 2.0)])
        f = lambda s: np.minimum(amp * np.abs(s - z) ** p, 1.5 * amp) * (1.0 + 0.3 * np.sin(w * s + ph))  # noqa: E731
    Y = TimeProfile.from_function(f, horizon, dt, sup_bound=1.95 * amp)
    return Y


def picard_iterates(Y, t, starts, max_iter=60):
    """Every iterate of ``z -> int_0^. Y(z)`` from each start, with its residual."""
    out = []
    for z in starts:
        for _ in range(max_iter):
            z = integral_along(Y, z, t)
            r = residual(Y, z, t)
            out.append((z, r))
            if r <= 1e-13:
                break
    return out


def sandwich_violations(Y, dt, n_delays=4, rng=None):
    """``(violations, qualifying)`` for iterates with residual <= dt against ``[a1 - 2dt, a2 + 2dt]``."""
    t = np.linspace(0.0, 1.0, int(round(1.0 / dt)) + 1)
    sol = solve_ivp_extremal(Y, t)
    starts = [np.zeros_like(t), Y.sup_bound * t, sol.alpha1, sol.alpha2, 0.5 * (sol.alpha1 + sol.alpha2)]
    if rng is not None:
        # a random nondecreasing start below the speed bound
        inc = rng.uniform(0, Y.sup_bound * dt, t.size - 1)
        starts.append(np.concatenate([[0.0], np.cumsum(inc)]))
    if sol.tau < np.inf:
        # leave the zero late: wait at tau, then follow the maximal solution shifted
        for c in np.linspace(0.1, 0.9, n_delays):
            tt = np.maximum(t - c, 0.0)
            starts.append(np.where(sol.alpha1 < sol.tau, sol.alpha1, np.maximum(sol.tau, np.interp(tt, t, sol.alpha2))))
    bad = good = 0
    for z, r in picard_iterates(Y, t, starts):
        if r <= dt:
            good += 1
            if np.any(z < sol.alpha1 - 2 * dt) or np.any(z > sol.alpha2 + 2 * dt):
                bad += 1
    return bad, good
