"""Monte Carlo checks of path-level claims on simulated ensembles.

Every estimator is a mean over paths of a per-path functional, so standard
errors come from the sample variance and results are reproducible bit for
bit given the ensemble. Ensembles are duck-typed: anything with ``times``
``(T,)`` and ``values`` ``(n, T, d)`` works, e.g. a stack of time-changed paths.

Band rule: a test passes when ``|estimate| <= 3 * stderr + bias_bound``;
``bias_bound`` defaults to 0 and exists for deterministic ensembles, whose
standard error vanishes while the quadrature bias does not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import StatisticsError
from .simulate import SimConfig, grid_index, running_sup_increments, simulate_path
from .symbol import MarkovTriplet, Symbol, as_states, h_global

AGGREGATE_RULE = 0.95


def _values(ensemble):
    v = np.asarray(ensemble.values, dtype=float)
    if v.ndim == 2:
        v = v[:, :, None]
    return np.asarray(ensemble.times, dtype=float), v


def _symbol_on(q, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Evaluate a candidate symbol on states ``x`` ``(m, d)`` at one frequency ``u`` ``(d,)``."""
    us = np.broadcast_to(u, x.shape)
    if isinstance(q, Symbol):
        return q.evaluate(x, us)
    return np.broadcast_to(np.asarray(q(x, us), dtype=complex), (x.shape[0],))


def _complex_stderr(samples: np.ndarray) -> float:
    n = samples.size
    if n < 2:
        raise StatisticsError(f"need at least 2 samples, got {n}")
    var = np.var(samples.real, ddof=1) + np.var(samples.imag, ddof=1)
    return float(math.sqrt(var / n))


# ---------------------------------------------------------------------------
# Martingale characterisation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MartingaleTestResult:
    u: tuple
    s: float
    t: float
    estimate: complex
    stderr: float
    n: int
    passed: bool
    bias_bound: float = 0.0


def martingale_defect(ensemble, q_candidate, u, s: float, t: float,
                      weight: Optional[Callable] = None, bias_bound: float = 0.0) -> MartingaleTestResult:
    """Estimate ``E[w(X(s)) (M_u(t) - M_u(s))]`` with
    ``M_u(r) = e^{i<u, X(r)>} - int_0^r e^{i<u, X(v)>} q(X(v), u) dv``.

    The integral uses the left-point rule on the ensemble grid. ``weight`` maps
    states ``(n, d)`` to bounded complex or real values and defaults to 1.
    """
    times, vals = _values(ensemble)
    n, _, d = vals.shape
    if n < 2:
        raise StatisticsError(f"need at least 2 paths, got {n}")
    if not (0 <= s < t <= times[-1] * (1 + 1e-12)):
        raise ValueError(f"need 0 <= s < t <= horizon, got s={s}, t={t}")
    uu = np.asarray(u, dtype=float).reshape(d)
    i_s, i_t = int(grid_index(times, s)), int(grid_index(times, t))
    seg = vals[:, i_s:i_t + 1]  # (n, k+1, d)
    phase = np.exp(1j * (seg @ uu))  # (n, k+1)
    qv = _symbol_on(q_candidate, seg[:, :-1].reshape(-1, d), uu).reshape(n, -1)
    dt = np.diff(times[i_s:i_t + 1])
    integral = np.sum(phase[:, :-1] * qv * dt[None, :], axis=1)
    incr = phase[:, -1] - phase[:, 0] - integral
    w = np.ones(n) if weight is None else np.asarray(weight(vals[:, i_s]), dtype=complex).reshape(n)
    samples = w * incr
    est = complex(np.mean(samples))
    se = _complex_stderr(samples)
    ok = abs(est) <= 3.0 * se + bias_bound
    return MartingaleTestResult(tuple(uu.tolist()), float(times[i_s]), float(times[i_t]), est, se, n, bool(ok), bias_bound)


def aggregate_pass(results: Sequence[MartingaleTestResult], rule: float = AGGREGATE_RULE) -> bool:
    """At least ``rule`` of the individual tests pass."""
    if not results:
        raise ValueError("no results to aggregate")
    return sum(r.passed for r in results) >= rule * len(results)


def martingale_design(n_points: int = 20, horizon: float = 1.0, u_max: float = 2.0, dim: int = 1, seed: int = 0):
    """A deterministic design of ``(u, s, t)`` triples with ``0 <= s < t <= horizon``."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_points):
        mag = rng.uniform(0.25, u_max)
        direction = rng.standard_normal(dim)
        u = mag * direction / np.linalg.norm(direction)
        s, t = np.sort(rng.uniform(0.0, horizon, 2))
        if t - s < 0.1 * horizon:
            s, t = 0.0, horizon
        out.append((u if dim > 1 else float(u[0]), float(s), float(t)))
    return out


# ---------------------------------------------------------------------------
# Small-time limit of the characteristic function
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SmallTimeEstimate:
    value: complex
    stderr: float
    t_grid: tuple
    degenerate: bool = False


def small_time_symbol(ensemble, u, t_grid) -> SmallTimeEstimate:
    """Extrapolate ``(E e^{i<u, X(t) - x>} - 1) / t`` to ``t = 0`` by a linear fit in ``t``.

    The fit is done per path with fixed least-squares weights, so the
    intercept is a mean over paths and its standard error is exact.
    """
    times, vals = _values(ensemble)
    n, _, d = vals.shape
    if n < 2:
        raise StatisticsError(f"need at least 2 paths, got {n}")
    tg = np.asarray(t_grid, dtype=float)
    if np.any(tg <= 0) or np.any(tg > times[-1] * (1 + 1e-12)):
        raise ValueError("t_grid must lie in (0, horizon]")
    idx = grid_index(times, tg)
    tt = times[idx]
    x0 = vals[:, 0]
    uu = np.asarray(u, dtype=float).reshape(d)
    y = (np.exp(1j * ((vals[:, idx] - x0[:, None, :]) @ uu)) - 1.0) / tt[None, :]
    if np.unique(tt).size < 2:
        samples = y[:, 0]
        return SmallTimeEstimate(complex(np.mean(samples)), _complex_stderr(samples), tuple(tt.tolist()), True)
    c = tt - tt.mean()
    w = 1.0 / tt.size - tt.mean() * c / np.sum(c * c)
    samples = y @ w
    return SmallTimeEstimate(complex(np.mean(samples)), _complex_stderr(samples), tuple(tt.tolist()))


# ---------------------------------------------------------------------------
# Time-changed symbol
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeChangedSymbolResult:
    results: tuple
    fraction: float
    passed: bool


def time_changed_symbol(g, q: Symbol, factor: float = 1.0) -> Symbol:
    """The candidate ``factor * g(x) q(x, u)`` as a symbol."""

    def fn(x, u):
        return factor * g.evaluate(x) * q.evaluate(x, u)

    return Symbol.closed_form(fn, q.dim, q.state_space, name=f"g*{q.name}")


def check_time_changed_symbol(solutions, g, q: Symbol, u_grid, s: float, t: float,
                              candidate: Optional[Symbol] = None, bias_bound: float = 0.0) -> TimeChangedSymbolResult:
    """Martingale tests of the time-changed paths against ``g(x) q(x, u)``.

    ``solutions`` is a list of time change solutions; ``candidate`` replaces
    the default ``g * q``. Aggregate pass iff at least 95% of ``u`` pass.
    """
    from .tce import time_changed_paths

    stack = time_changed_paths(solutions)
    cand = candidate if candidate is not None else time_changed_symbol(g, q)
    res = tuple(martingale_defect(stack, cand, u, s, t, bias_bound=bias_bound) for u in u_grid)
    frac = sum(r.passed for r in res) / len(res)
    return TimeChangedSymbolResult(res, frac, bool(frac >= AGGREGATE_RULE))


# ---------------------------------------------------------------------------
# Maximal inequality
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MaximalIneqResult:
    R: float
    h_grid: tuple
    empirical_probs: tuple
    ratios: tuple
    fitted_cd: float
    H_R: float
    n: int
    bounded: bool
    vacuous: bool = False


def maximal_inequality_check(ensemble, R: float, h_grid, H_R: Optional[float] = None,
                             symbol: Optional[Symbol] = None) -> MaximalIneqResult:
    """Exceedance probabilities ``P(sup_{s <= h} |X(s) - X(0)| >= R)`` over ``h_grid``.

    Ratios are taken against ``h * H(R)``, with ``H(R)`` from the ensemble's
    symbol unless given. ``bounded`` holds when the ratio at the smallest
    ``h`` does not exceed the ratio at the largest ``h`` beyond 3 standard
    errors.
    """
    times, vals = _values(ensemble)
    n = vals.shape[0]
    hs = np.asarray(h_grid, dtype=float)
    if np.any(hs <= 0) or np.any(hs > times[-1] * (1 + 1e-12)):
        raise ValueError("h_grid must lie in (0, horizon]")
    if H_R is None:
        if symbol is None:
            symbol = Symbol.from_triplet(ensemble.triplet)
        H_R = float(h_global(symbol, R))
    run = running_sup_increments(vals, 0)
    idx = grid_index(times, hs)
    probs = np.mean(run[:, idx] >= R, axis=0)
    vacuous = bool(np.all(probs == 0))
    if H_R > 0:
        ratios = probs / (hs * H_R)
    else:
        # a zero symbol gives constant paths; any exceedance is unbounded
        ratios = np.where(probs > 0, math.inf, 0.0)
    order = np.argsort(hs)
    lo, hi = order[0], order[-1]
    if vacuous:
        bounded = True
    elif H_R > 0:
        se_lo = math.sqrt(max(probs[lo] * (1 - probs[lo]), 1.0 / n) / n) / (hs[lo] * H_R)
        bounded = bool(ratios[lo] <= ratios[hi] + 3.0 * se_lo)
    else:
        bounded = False
    return MaximalIneqResult(float(R), tuple(hs.tolist()), tuple(probs.tolist()), tuple(ratios.tolist()),
                             float(np.max(ratios)), H_R, n, bounded, vacuous)


# ---------------------------------------------------------------------------
# Holder index
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HolderIndexResult:
    lam: float
    h_grid: tuple
    ratios: np.ndarray  # (n_paths, len(h_grid))
    vanishing: np.ndarray  # (n_paths,)
    fraction: float


def holder_index_check(ensemble, lam: float, h_grid, tau=0.0) -> HolderIndexResult:
    """Per path ``r(h) = h**(-1/lam) sup_{s <= h} |X(tau + s) - X(tau)|`` on a decreasing ``h_grid``.

    A path is vanishing when ``r`` strictly decreases over the three finest
    ``h``. ``tau`` is a fixed time or one (stopping) time per path.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    hs = np.asarray(h_grid, dtype=float)
    if hs.size < 3 or np.any(np.diff(hs) >= 0):
        raise ValueError("h_grid must be strictly decreasing with at least 3 entries")
    times, vals = _values(ensemble)
    n = vals.shape[0]
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (n,))
    if np.any(tau + hs[0] > times[-1] * (1 + 1e-12)):
        raise ValueError("tau + max(h) exceeds the horizon")
    if hs[-1] < np.max(np.diff(times)) * (1 - 1e-9):
        raise ValueError("the finest h is below the grid step")
    i0 = grid_index(times, tau)
    run = running_sup_increments(vals, i0)
    idx = grid_index(times, times[i0][:, None] + hs[None, :])
    sup = run[np.arange(n)[:, None], idx]
    r = sup / hs[None, :] ** (1.0 / lam)
    fine = r[:, -3:]
    vanishing = np.all(np.diff(fine, axis=1) < 0, axis=1) | np.all(fine == 0, axis=1)
    return HolderIndexResult(float(lam), tuple(hs.tolist()), r, vanishing, float(np.mean(vanishing)))


# ---------------------------------------------------------------------------
# Occupation measure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OccupationResult:
    t: float
    refinement_levels: tuple
    partial_integrals: tuple
    verdict: str  # "diverging", "finite" or "inconclusive"
    exponent: float = math.nan


def occupation_divergence(triplet: MarkovTriplet, x0, g, t: float, refinement_levels, seed: int = 0,
                          p_margin: float = 0.05) -> OccupationResult:
    """``int_0^t ds / g(X(s))`` on a sequence of refined grids of one path.

    The path is simulated once on the finest grid and subsampled for the
    coarser ones, so all levels see the same noise. Right-point sums exclude
    the start, where ``g`` vanishes by hypothesis. From the last three levels
    the increments ``D_k`` between consecutive sums give a local exponent
    ``p = 1 + log(D_{k+1} / D_k) / log(refinement)``; the integral is
    diverging iff ``p >= 1 - p_margin``. An exact zero of ``g`` at a later
    grid point is diverging outright.
    """
    levels = np.asarray(refinement_levels, dtype=float)
    if levels.size < 1 or np.any(np.diff(levels) >= 0):
        raise ValueError("refinement_levels must be strictly decreasing")
    fine = levels[-1]
    steps = levels / fine
    if np.any(np.abs(steps - np.round(steps)) > 1e-9 * steps):
        raise ValueError("every level must be an integer multiple of the finest one")
    path = simulate_path(triplet, x0, SimConfig(fine, t), seed)
    gvals = g.evaluate(path.values)
    sums = []
    for k in np.round(steps).astype(int):
        gv = gvals[k::k]
        if np.any(gv <= 0):
            sums.append(math.inf)
        else:
            sums.append(float(np.sum(k * fine / gv)))
    sums_t = tuple(sums)
    if any(math.isinf(v) for v in sums):
        return OccupationResult(float(t), tuple(levels.tolist()), sums_t, "diverging", math.inf)
    if levels.size < 3:
        return OccupationResult(float(t), tuple(levels.tolist()), sums_t, "inconclusive")
    d1, d2 = sums[-2] - sums[-3], sums[-1] - sums[-2]
    scale = max(abs(sums[-1]), 1e-300)
    if abs(d1) <= 1e-12 * scale and abs(d2) <= 1e-12 * scale:
        return OccupationResult(float(t), tuple(levels.tolist()), sums_t, "finite", 0.0)
    if d1 <= 0 or d2 <= 0:
        # sums not increasing under refinement: no blow-up to certify
        return OccupationResult(float(t), tuple(levels.tolist()), sums_t, "finite", math.nan)
    ratio = levels[-2] / levels[-1]
    p = 1.0 + math.log(d2 / d1) / math.log(ratio)
    verdict = "diverging" if p >= 1.0 - p_margin else "finite"
    return OccupationResult(float(t), tuple(levels.tolist()), sums_t, verdict, p)
