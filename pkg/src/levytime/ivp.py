"""Extremal solutions of ``y(t) = int_0^t Y(y(s)) ds`` for a sampled profile ``Y >= 0``.

The construction follows the inverse-of-the-reciprocal-integral recipe:

* ``tau``   first zero of ``Y``,
* ``I(t)``  ``int_0^t ds / Y(s)``, strictly increasing before its blow-up time ``eta``,
* ``g``     inverse of ``I`` on ``[0, gamma)`` with ``gamma = sup_{t < eta} I(t)``,
* minimal solution ``alpha1 = min(g, tau)`` (``tau`` after ``gamma``),
* maximal solution ``alpha2 = g`` (``eta`` after ``gamma``).

The two agree exactly when ``eta <= tau``.

A grid can never witness whether ``1/Y`` is integrable at a zero, so every
isolated zero gets a local power-law fit ``Y(s) ~ K |s - z|^p`` over the
decade of samples next to it on each side: the reciprocal integral is
declared divergent iff ``p >= 1 - p_margin``. Two or more consecutive zero
samples form a plateau, which is always divergent.

Zeros and blow-up are located on the samples. Quadrature and inversion use a
continuous model of the profile: linear interpolation between samples, the
fitted power law on cells adjacent to a convergent zero, and the last sample
held beyond the grid. Each cell is integrated and inverted in closed form.
A pure step model would bias ``I`` by ``O(sqrt(dt))`` next to square-root
zeros.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

INF = math.inf


@dataclass(frozen=True)
class PowerFit:
    """Local fit ``Y ~ coefficient * offset**exponent`` on one side of a zero."""

    exponent: float
    coefficient: float
    n_points: int
    side: str
    divergent: bool
    conclusive: bool = True
    plateau: bool = False


class TimeProfile:
    """Nonnegative samples of a bounded function on an increasing grid starting at 0.

    Values below ``1e-14 * sup_bound`` are stored as exact zeros.
    ``right_regular`` is ``False`` when some isolated zero sample sits between
    two neighbours larger than ``regularity_threshold * sup_bound``.
    """

    def __init__(self, times, values, sup_bound: Optional[float] = None,
                 p_margin: float = 0.05, regularity_threshold: float = 0.5):
        t = np.asarray(times, dtype=float)
        y = np.asarray(values, dtype=float).copy()
        if t.ndim != 1 or y.shape != t.shape or t.size < 2:
            raise ValueError("times and values must be 1-d arrays of equal length >= 2")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("times must start at 0 and increase strictly")
        if not np.all(np.isfinite(y)):
            raise ValueError("profile values must be finite")
        top = float(np.max(y))
        sup = top if sup_bound is None else float(sup_bound)
        if sup < top * (1 - 1e-12):
            raise ValueError(f"sup_bound {sup} is below the largest value {top}")
        if np.min(y) < -1e-14 * max(sup, 1.0):
            raise ValueError("profile values must be nonnegative")
        y[y < 1e-14 * sup] = 0.0
        self.times = t
        self.values = y
        self.sup_bound = sup
        self.p_margin = p_margin
        self.regularity_threshold = regularity_threshold

    @classmethod
    def from_function(cls, f: Callable, horizon: float, dt: float, **kw):
        n = int(round(horizon / dt))
        t = np.linspace(0.0, horizon, n + 1)
        return cls(t, f(t), **kw)

    @property
    def dt(self) -> float:
        return float(np.max(np.diff(self.times)))

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def right_regular(self) -> bool:
        y = self.values
        iso = (y[1:-1] == 0) & (y[:-2] > 0) & (y[2:] > 0)
        thr = self.regularity_threshold * self.sup_bound
        return not np.any(iso & (y[:-2] > thr) & (y[2:] > thr))

    def cell_index(self, s):
        tol = 1e-9 * self.dt
        idx = np.searchsorted(self.times, np.asarray(s, dtype=float) + tol, side="right") - 1
        return np.clip(idx, 0, self.times.size - 1)


# ---------------------------------------------------------------------------
# Divergence certificates
# ---------------------------------------------------------------------------


def _fit(offsets, vals, side, p_margin) -> PowerFit:
    keep = vals > 0
    if keep.sum() < 2:
        return PowerFit(math.nan, math.nan, int(keep.sum()), side, divergent=True, conclusive=False)
    lx, ly = np.log(offsets[keep]), np.log(vals[keep])
    if np.ptp(lx) == 0:
        return PowerFit(math.nan, math.nan, int(keep.sum()), side, divergent=True, conclusive=False)
    p, logk = np.polyfit(lx, ly, 1)
    return PowerFit(float(p), float(math.exp(logk)), int(keep.sum()), side, divergent=bool(p >= 1.0 - p_margin))


def certify_divergence(profile: TimeProfile, index: int, side: str = "right") -> PowerFit:
    """Power-law certificate for ``int 1/Y = inf`` next to the zero sample ``index``.

    ``side="right"`` looks at ``(t_z, t_z + eps)``, ``"left"`` at ``(t_z - eps, t_z)``.
    A zero neighbour (plateau) is divergent outright; too few samples to fit
    give an inconclusive fit that counts as divergent.
    """
    t, y = profile.times, profile.values
    if y[index] != 0.0:
        raise ValueError(f"sample {index} is not a zero of the profile")
    if side == "right":
        if index == t.size - 1:
            # the last value is held forever: a zero plateau
            return PowerFit(math.inf, 0.0, 0, side, divergent=True, plateau=True)
        if y[index + 1] == 0.0:
            return PowerFit(math.inf, 0.0, 0, side, divergent=True, plateau=True)
        off = t[index + 1:] - t[index]
        sel = off <= 10.0 * off[0] * (1 + 1e-9)
        return _fit(off[sel], y[index + 1:][sel], side, profile.p_margin)
    if side == "left":
        if index == 0:
            raise ValueError("no samples to the left of index 0")
        if y[index - 1] == 0.0:
            return PowerFit(math.inf, 0.0, 0, side, divergent=True, plateau=True)
        off = t[index] - t[:index][::-1]
        sel = off <= 10.0 * off[0] * (1 + 1e-9)
        return _fit(off[sel], y[:index][::-1][sel], side, profile.p_margin)
    raise ValueError("side must be 'left' or 'right'")


# ---------------------------------------------------------------------------
# Cell model
# ---------------------------------------------------------------------------

_LIN, _POW_R, _POW_L, _STEP = 0, 1, 2, 3


@dataclass(frozen=True, eq=False)
class _Cells:
    """Profile model on each grid cell ``[t_k, t_{k+1})`` plus the tail beyond the grid.

    ``_LIN`` interpolates the two samples linearly, ``_POW_R`` is ``K u**p``
    after a zero at ``t_k``, ``_POW_L`` is ``K (width - u)**p`` before a zero at
    ``t_{k+1}``, ``_STEP`` holds ``y0``. The tail cell has infinite width.
    """

    kind: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    K: np.ndarray
    p: np.ndarray
    width: np.ndarray
    knots: np.ndarray  # I(t_k) for k = 0..last (inf allowed at the end)
    last: int
    tau: float
    eta: float
    gamma: float
    left_divergent: bool
    fits: tuple


def _analyse(Y: TimeProfile) -> _Cells:
    t, y = Y.times, Y.values
    n = t.size
    width = np.append(np.diff(t), INF)
    y1 = np.append(y[1:], y[-1])
    kind = np.full(n, _LIN)
    kind[-1] = _STEP
    K = np.zeros(n)
    p = np.zeros(n)

    zeros = np.flatnonzero(y == 0.0)
    tau = float(t[zeros[0]]) if zeros.size else INF
    eta, last, left_div = INF, n - 1, False
    fits = []
    for z in zeros:
        z = int(z)
        if z > 0 and y[z - 1] == 0.0:
            continue  # inside a plateau, its start decides
        right = certify_divergence(Y, z, "right")
        left = certify_divergence(Y, z, "left") if z > 0 else None
        # a nonpositive fitted power does not vanish at the zero: hold the neighbour instead
        if z < n - 1 and not right.divergent:
            if right.exponent > 0:
                kind[z], K[z], p[z] = _POW_R, right.coefficient, right.exponent
            else:
                kind[z], K[z], p[z] = _POW_R, y[z + 1], 0.0
        if left is not None:
            if not left.conclusive:
                kind[z - 1] = _STEP
            elif not left.divergent:
                if left.exponent > 0:
                    kind[z - 1], K[z - 1], p[z - 1] = _POW_L, left.coefficient, left.exponent
                else:
                    kind[z - 1], K[z - 1], p[z - 1] = _POW_L, y[z - 1], 0.0
        if eta == INF:
            fits.append(right if left is None else (left, right))
            if right.divergent or (left is not None and left.conclusive and left.divergent):
                eta, last = float(t[z]), z
                left_div = left is not None and left.conclusive and left.divergent

    cells = _Cells(kind, y, y1, K, p, width, np.empty(0), last, tau, eta, INF, left_div, tuple(fits))
    full = _cell_reciprocal(cells, np.arange(last), width[:last])
    knots = np.concatenate([[0.0], np.cumsum(full)])
    if left_div:
        knots[-1] = INF
    if eta < INF:
        gamma = float(knots[-1])
    else:
        gamma = INF if y[-1] > 0 else float(knots[-1])
    return _Cells(kind, y, y1, K, p, width, knots, last, tau, eta, gamma, left_div, tuple(fits))


def _slope(c: _Cells, k):
    with np.errstate(invalid="ignore"):
        m = (c.y1[k] - c.y0[k]) / c.width[k]
    return np.where(np.isfinite(m), m, 0.0)


def _cell_reciprocal(c: _Cells, k, u):
    """``int_0^u dv / model_k(v)`` for offsets ``u`` inside cell ``k``."""
    k = np.asarray(k)
    u = np.asarray(u, dtype=float)
    out = np.full(u.shape, INF)
    kind = c.kind[k]
    y0 = c.y0[k]
    m = _slope(c, k)
    with np.errstate(divide="ignore", invalid="ignore"):
        lin = kind == _LIN
        flat = lin & (np.abs(m) * c.width[k] <= 1e-12 * y0)
        out = np.where(flat | (kind == _STEP), u / y0, out)
        curved = lin & ~flat
        val = np.log1p(m * u / y0) / m
        out = np.where(curved, val, out)
        q = 1.0 - c.p[k]
        out = np.where(kind == _POW_R, u ** q / (c.K[k] * q), out)
        w = c.width[k]
        out = np.where(kind == _POW_L, (w ** q - np.maximum(w - u, 0.0) ** q) / (c.K[k] * q), out)
    out = np.where(u == 0.0, 0.0, out)
    return np.where(np.isnan(out), INF, out)


def _cell_inverse(c: _Cells, k, J):
    """Offset ``u`` in cell ``k`` with ``int_0^u dv / model_k(v) = J``."""
    kind = c.kind[k]
    y0 = c.y0[k]
    m = _slope(c, k)
    w = c.width[k]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        flat = (kind == _STEP) | ((kind == _LIN) & (np.abs(m) * w <= 1e-12 * y0))
        lin = np.where(m != 0, y0 * np.expm1(m * J) / np.where(m != 0, m, 1.0), y0 * J)
        out = np.where(flat, y0 * J, lin)
        q = 1.0 - c.p[k]
        out = np.where(kind == _POW_R, (c.K[k] * q * J) ** (1.0 / q), out)
        base = np.maximum(w ** q - c.K[k] * q * J, 0.0)
        out = np.where(kind == _POW_L, w - base ** (1.0 / q), out)
    return np.clip(np.nan_to_num(out, nan=0.0), 0.0, w)


def _cell_model(c: _Cells, k, u):
    kind = c.kind[k]
    out = c.y0[k] + _slope(c, k) * u
    out = np.where(kind == _STEP, c.y0[k], out)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(kind == _POW_R, c.K[k] * u ** c.p[k], out)
        out = np.where(kind == _POW_L, c.K[k] * np.maximum(c.width[k] - u, 0.0) ** c.p[k], out)
    # the sample itself at the cell start, also for a held neighbour after a zero
    return np.where(u == 0.0, c.y0[k], out)


def _cell_primitive(c: _Cells, k, u):
    """``int_0^u model_k(v) dv``."""
    kind = c.kind[k]
    out = c.y0[k] * u + 0.5 * _slope(c, k) * u * u
    out = np.where(kind == _STEP, c.y0[k] * u, out)
    p1 = c.p[k] + 1.0
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(kind == _POW_R, c.K[k] * u ** p1 / p1, out)
        w = c.width[k]
        out = np.where(kind == _POW_L, c.K[k] * (w ** p1 - np.maximum(w - u, 0.0) ** p1) / p1, out)
    return out


# ---------------------------------------------------------------------------
# Reciprocal integral
# ---------------------------------------------------------------------------


def first_zero(Y: TimeProfile) -> float:
    """First grid time where the profile vanishes, ``inf`` if none."""
    z = np.flatnonzero(Y.values == 0.0)
    return float(Y.times[z[0]]) if z.size else INF


def blowup_time(Y: TimeProfile) -> float:
    """Smallest time at which the reciprocal integral is certified infinite."""
    return _analyse(Y).eta


def integrate_reciprocal(Y: TimeProfile, t: float) -> float:
    """``int_0^t ds / Y(s)``; ``inf`` from the blow-up time on."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    c = _analyse(Y)
    if t > c.eta or (t == c.eta and c.left_divergent):
        return INF
    k = min(int(Y.cell_index(t)), c.last)
    if k == c.last and c.eta < INF:
        return float(c.knots[k])
    return float(c.knots[k] + _cell_reciprocal(c, np.array([k]), np.array([t - Y.times[k]]))[0])


# ---------------------------------------------------------------------------
# Extremal solutions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class IvpSolution:
    times: np.ndarray
    alpha1: np.ndarray
    alpha2: np.ndarray
    tau: float
    eta: float
    gamma: float
    unique: bool
    divergence_evidence: tuple = ()
    gap: float = 0.0
    right_regular: bool = True

    @property
    def divergence_exponent(self) -> float:
        """Fitted local power at the first zero (``nan`` if there is none)."""
        if not self.divergence_evidence:
            return math.nan
        first = self.divergence_evidence[0]
        fit = first[1] if isinstance(first, tuple) else first
        return fit.exponent


def _inverse(Y: TimeProfile, c: _Cells, t: np.ndarray) -> np.ndarray:
    """The maximal solution: inverse of ``I`` below ``gamma``, then ``eta``."""
    knots = c.knots
    k = np.searchsorted(knots, t, side="right") - 1
    k = np.clip(k, 0, c.last)
    beyond = k == c.last
    kk = np.where(beyond, max(c.last - 1, 0), k)
    out = Y.times[kk] + _cell_inverse(c, kk, t - knots[kk])
    if c.eta < INF:
        out = np.where(beyond, c.eta, out)
    else:
        # past the grid the last sample is held; it is positive here
        out = np.where(beyond, Y.times[-1] + (t - knots[-1]) * Y.values[-1], out)
    return out


def solve_ivp_extremal(Y: TimeProfile, t_grid=None) -> IvpSolution:
    """Minimal and maximal solutions of the IVP with profile ``Y``, started at 0.

    ``t_grid`` defaults to the profile's own grid.
    """
    t = Y.times if t_grid is None else np.asarray(t_grid, dtype=float)
    c = _analyse(Y)
    a2 = _inverse(Y, c, t)
    a2 = np.minimum(np.maximum.accumulate(a2), Y.sup_bound * t)
    a1 = np.minimum(a2, c.tau)
    return IvpSolution(t, a1, a2, c.tau, c.eta, c.gamma, bool(c.eta <= c.tau), c.fits,
                       float(np.max(np.abs(a2 - a1), initial=0.0)), Y.right_regular)


def profile_model(Y: TimeProfile, s) -> np.ndarray:
    """Value of the continuous profile model at times ``s``."""
    s = np.asarray(s, dtype=float)
    c = _analyse(Y)
    k = Y.cell_index(s)
    return _cell_model(c, k, s - Y.times[k])


def _primitive(Y: TimeProfile, c: _Cells, s: np.ndarray) -> np.ndarray:
    n = Y.times.size
    idx = np.arange(n - 1)
    full = _cell_primitive(c, idx, c.width[:-1])
    cum = np.concatenate([[0.0], np.cumsum(full)])
    k = Y.cell_index(s)
    return cum[k] + _cell_primitive(c, k, s - Y.times[k])


def integral_along(Y: TimeProfile, alpha, t_grid=None) -> np.ndarray:
    """``int_0^t Y(alpha(s)) ds`` at every grid time.

    ``alpha`` is sampled on ``t_grid`` (default: the profile grid) and taken
    piecewise linear in between; the integral of the profile model along each
    linear piece is exact. This is the integral map whose fixed points solve
    the IVP.
    """
    t = Y.times if t_grid is None else np.asarray(t_grid, dtype=float)
    a = np.asarray(alpha, dtype=float)
    if a.shape != t.shape:
        raise ValueError("alpha must be sampled on the time grid")
    c = _analyse(Y)
    F = _primitive(Y, c, a)
    da = np.diff(a)
    dt = np.diff(t)
    flat = np.abs(da) <= 1e-15 * np.maximum(1.0, np.abs(a[:-1]))
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.where(flat, 0.0, np.diff(F) / np.where(flat, 1.0, da))
    k = Y.cell_index(a[:-1])
    point = _cell_model(c, k, a[:-1] - Y.times[k])
    pieces = dt * np.where(flat, point, slope)
    return np.concatenate([[0.0], np.cumsum(pieces)])


def residual(Y: TimeProfile, alpha, t_grid=None) -> float:
    """``sup_t |alpha(t) - int_0^t Y(alpha(s)) ds|`` with the integral of :func:`integral_along`."""
    a = np.asarray(alpha, dtype=float)
    return float(np.max(np.abs(a - integral_along(Y, a, t_grid))))
