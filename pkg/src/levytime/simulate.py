"""Seeded Euler-type simulation of Levy-type processes from a Markov triplet.

One step of the scheme is

    X[k+1] = X[k] + (b - rate * E chi(J))(X[k]) dt + sqrt(c(X[k])) sqrt(dt) N[k] + J[k]

where ``J[k]`` is either the sum of thinned compound Poisson jumps inside the
step, or a stable increment with index and scale frozen at ``X[k]``.

Every path owns a ``numpy.random.Generator`` seeded from ``(master_seed, i)``,
so path ``i`` does not depend on how many other paths are simulated with it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import special, stats

from .errors import DomainError, NumericError, RangeError, SimulationError
from .symbol import CompoundPoisson, MarkovTriplet, NoJumps, StableLike, as_states


@dataclass(frozen=True)
class SimConfig:
    dt: float
    horizon: float
    n_paths: int = 1
    small_jump_cutoff: float = 0.1
    absorb_outside: bool = True
    stable_scheme: str = "direct"  # or "truncated" (1-d only)

    def __post_init__(self):
        if not (self.dt > 0 and self.horizon > 0):
            raise ValueError("dt and horizon must be positive")
        if self.dt > self.horizon * (1 + 1e-12):
            raise ValueError("dt must not exceed the horizon")
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if not self.small_jump_cutoff > 0:
            raise ValueError("small_jump_cutoff must be positive")
        if self.stable_scheme not in ("direct", "truncated"):
            raise ValueError(f"unknown stable scheme {self.stable_scheme!r}")
        n = self.horizon / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError("horizon must be an integer multiple of dt")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)


def grid_index(times: np.ndarray, t) -> np.ndarray:
    """Index of the greatest grid point ``<= t`` (with a tiny tolerance)."""
    tol = 1e-9 * (times[-1] - times[0]) / max(len(times) - 1, 1)
    idx = np.searchsorted(times, np.asarray(t, dtype=float) + tol, side="right") - 1
    return np.clip(idx, 0, len(times) - 1)


@dataclass(frozen=True, eq=False)
class SamplePath:
    """A cadlag path stored on a grid; ``X(t)`` is the value at the last grid point ``<= t``."""

    times: np.ndarray
    values: np.ndarray  # (n_times, d)
    seed: int = 0
    jump_times: tuple = ()

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if t.ndim != 1 or v.shape[0] != t.size:
            raise ValueError("times and values must have matching length")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("times must start at 0 and increase strictly")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def x(self) -> np.ndarray:
        """The values of a 1-d path as a flat array."""
        return self.values[:, 0]

    def at(self, t):
        """Left-point (step) evaluation at arbitrary times ``t >= 0``."""
        return self.values[grid_index(self.times, t)]


def path_sup_increment(path: SamplePath, t0: float, h: float) -> float:
    """``max |X(s) - X(t0)|`` over grid points ``s`` in ``[t0, t0 + h]``."""
    if t0 >= path.horizon:
        raise RangeError(f"t0={t0} is not before the horizon {path.horizon}")
    if not h > 0:
        raise ValueError("h must be positive")
    if t0 + h > path.horizon * (1 + 1e-12):
        raise RangeError(f"t0 + h = {t0 + h} exceeds the horizon {path.horizon}")
    return float(sup_increments(path.values[None], path.times, np.array([t0]), h)[0])


def sup_increments(values: np.ndarray, times: np.ndarray, t0, h: float) -> np.ndarray:
    """Vectorised ``path_sup_increment`` over a stack of paths ``(n, T, d)``.

    ``t0`` may be a scalar or one start time per path.
    """
    n = values.shape[0]
    t0 = np.broadcast_to(np.asarray(t0, dtype=float), (n,))
    i0 = grid_index(times, t0)
    i1 = grid_index(times, t0 + h)
    width = int(np.max(i1 - i0)) + 1
    offs = np.arange(width)
    idx = np.minimum(i0[:, None] + offs[None, :], len(times) - 1)
    inside = offs[None, :] <= (i1 - i0)[:, None]
    seg = values[np.arange(n)[:, None], idx]  # (n, width, d)
    base = values[np.arange(n), i0]  # (n, d)
    dist = np.linalg.norm(seg - base[:, None, :], axis=-1)
    return np.max(np.where(inside, dist, 0.0), axis=1)


def running_sup_increments(values: np.ndarray, start_index) -> np.ndarray:
    """``r[i, k] = max_{start_i <= j <= k} |X_i(t_j) - X_i(t_{start_i})|`` for a stack ``(n, T, d)``.

    Entries before the start index are 0.
    """
    n, T, _ = values.shape
    i0 = np.broadcast_to(np.asarray(start_index, dtype=int), (n,))
    base = values[np.arange(n), i0]
    dist = np.linalg.norm(values - base[:, None, :], axis=-1)
    dist[np.arange(T)[None, :] < i0[:, None]] = 0.0
    return np.maximum.accumulate(dist, axis=1)


@dataclass(frozen=True, eq=False)
class PathStack:
    """Paths sharing one grid, without simulation metadata (e.g. time-changed paths)."""

    times: np.ndarray
    values: np.ndarray  # (n_paths, n_times, d)

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Paths started at one state, sharing one time grid."""

    start: np.ndarray
    times: np.ndarray
    values: np.ndarray  # (n_paths, n_times, d)
    seeds: tuple
    triplet: MarkovTriplet
    config: SimConfig
    master_seed: int = 0
    jump_times: tuple = ()

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, i) -> SamplePath:
        jt = self.jump_times[i] if self.jump_times else ()
        return SamplePath(self.times, self.values[i], self.seeds[i], jt)

    @property
    def paths(self) -> list:
        return [self[i] for i in range(len(self))]

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])


def derive_seed(master_seed: int, i: int) -> int:
    """Seed of path ``i`` in an ensemble with ``master_seed``."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(i)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


# ---------------------------------------------------------------------------
# Stable variates
# ---------------------------------------------------------------------------


def symmetric_stable(alpha, v, w):
    """Chambers-Mallows-Stuck transform: ``E exp(iuS) = exp(-|u|^alpha)``.

    ``v`` is uniform on ``(-pi/2, pi/2)`` and ``w`` standard exponential.
    """
    alpha = np.asarray(alpha, dtype=float)
    cauchy = np.isclose(alpha, 1.0)
    a = np.where(cauchy, 0.5, alpha)
    s = np.sin(a * v) / np.cos(v) ** (1.0 / a) * (np.cos((1.0 - a) * v) / w) ** ((1.0 - a) / a)
    return np.where(cauchy, np.tan(v), s)


def positive_stable(a, u, e):
    """Kanter's transform: ``E exp(-sA) = exp(-s^a)`` for ``0 < a < 1``.

    ``u`` is uniform on ``(0, pi)`` and ``e`` standard exponential.
    """
    a = np.asarray(a, dtype=float)
    kanter = (np.sin(a * u) ** a * np.sin((1.0 - a) * u) ** (1.0 - a) / np.sin(u)) ** (1.0 / (1.0 - a))
    return (kanter / e) ** ((1.0 - a) / a)


def _stable_levy_constant(alpha):
    """Density constant of the Levy measure of ``exp(-|u|^alpha)`` in 1-d."""
    return special.gamma(1.0 + alpha) * np.sin(np.pi * alpha / 2.0) / np.pi


# ---------------------------------------------------------------------------
# Scheme
# ---------------------------------------------------------------------------


def _psd_sqrt(c: np.ndarray) -> np.ndarray:
    """Symmetric square roots of a stack of PSD matrices ``(n, d, d)``."""
    d = c.shape[-1]
    if d == 1:
        if np.any(c < -1e-12):
            raise NumericError("diffusion coefficient is negative")
        return np.sqrt(np.maximum(c, 0.0))
    w, q = np.linalg.eigh(c)
    scale = np.maximum(1.0, np.max(np.abs(c), axis=(-1, -2)))
    if np.any(w < -1e-10 * scale[..., None]):
        raise NumericError("diffusion matrix is not positive semidefinite")
    return np.einsum("...ij,...j,...kj->...ik", q, np.sqrt(np.maximum(w, 0.0)), q)


def _matvec(m: np.ndarray, z: np.ndarray) -> np.ndarray:
    # explicit loop keeps every row's arithmetic independent of batch size
    out = m[:, :, 0] * z[:, 0:1]
    for j in range(1, z.shape[1]):
        out = out + m[:, :, j] * z[:, j:j + 1]
    return out


def _rate_bound(jumps: CompoundPoisson, triplet: MarkovTriplet) -> float:
    if jumps.rate_bound is not None:
        return float(jumps.rate_bound)
    probe = triplet.state_space.probe_grid(4096)
    return float(np.max(jumps.rate(probe)))


def _is_levy(triplet: MarkovTriplet, config: SimConfig) -> bool:
    """Constant coefficients on all of R^d: increments are i.i.d. and never absorbed."""
    j = triplet.jumps
    if triplet.state_space.is_box or triplet.drift.constant is None or triplet.diffusion.constant is None:
        return False
    if isinstance(j, NoJumps):
        return True
    return (isinstance(j, StableLike) and config.stable_scheme == "direct"
            and j.index.constant is not None and j.scale.constant is not None)


def _levy_batch(triplet, x0, config, n, gauss, stable_cms, stable_sub, root, has_diffusion):
    """All steps at once: ``X(t_k) = x0 + k b dt + (cumulative noise)``.

    The drift is added as ``k b dt`` rather than summed, so noiseless paths
    are exact multiples of ``b dt``; with noise the result agrees with the
    step loop to rounding.
    """
    d, steps, dt = triplet.dim, config.n_steps, config.dt
    jumps = triplet.jumps
    probe = np.broadcast_to(x0, (n, d))
    noise = np.zeros((steps + 1, n, d))
    if has_diffusion:
        mv = root[None, None, :, 0] * gauss[:, :, 0:1]
        for j in range(1, d):
            mv = mv + root[None, None, :, j] * gauss[:, :, j:j + 1]
        noise[1:] += math.sqrt(dt) * mv
    if stable_cms is not None:
        a, sig = jumps.index(probe), jumps.scale(probe)
        noise[1:] += (sig * dt ** (1.0 / a) * symmetric_stable(a, stable_cms[0], stable_cms[1]))[..., None]
    elif stable_sub is not None:
        a, sig = jumps.index(probe), jumps.scale(probe)
        A = positive_stable(a / 2.0, stable_sub[0], stable_sub[1])
        noise[1:] += (sig * dt ** (1.0 / a) * np.sqrt(2.0 * A))[..., None] * stable_sub[2]
    np.cumsum(noise, axis=0, out=noise)
    drift = np.arange(steps + 1, dtype=float)[:, None, None] * (triplet.b(probe) * dt)[None]
    values = np.broadcast_to(x0, (n, d))[None] + drift + noise
    if not np.all(np.isfinite(values)):
        raise NumericError("non-finite value in a simulated path")
    return np.ascontiguousarray(values.transpose(1, 0, 2)), [() for _ in range(n)]


def _simulate_batch(triplet: MarkovTriplet, x0: np.ndarray, config: SimConfig, seeds: Sequence[int],
                    fast: bool = True):
    d = triplet.dim
    n, steps, dt = len(seeds), config.n_steps, config.dt
    sqdt = math.sqrt(dt)
    space = triplet.state_space
    jumps = triplet.jumps
    rngs = [np.random.default_rng(s) for s in seeds]

    # step-major storage keeps each step's slice contiguous
    gauss = np.stack([r.standard_normal((steps, d)) for r in rngs], axis=1)  # (steps, n, d)
    stable_cms = stable_sub = trunc_u = None
    cpp_counts = None
    if isinstance(jumps, StableLike):
        if config.stable_scheme == "truncated":
            if d != 1:
                raise ValueError("the truncated stable scheme is implemented in 1-d only")
            trunc_u = (np.stack([r.random(steps) for r in rngs], axis=1),
                       np.stack([r.standard_normal(steps) for r in rngs], axis=1))
        elif d == 1:
            stable_cms = (np.stack([r.uniform(-np.pi / 2, np.pi / 2, steps) for r in rngs], axis=1),
                          np.stack([r.standard_exponential(steps) for r in rngs], axis=1))
        else:
            stable_sub = (np.stack([r.uniform(0.0, np.pi, steps) for r in rngs], axis=1),
                          np.stack([r.standard_exponential(steps) for r in rngs], axis=1),
                          np.stack([r.standard_normal((steps, d)) for r in rngs], axis=1))
    elif isinstance(jumps, CompoundPoisson):
        lam_max = _rate_bound(jumps, triplet)
        cpp_counts = np.stack([r.poisson(lam_max * dt, steps) for r in rngs], axis=1)

    const_sqrt_c = None
    if triplet.diffusion.constant is not None:
        const_sqrt_c = _psd_sqrt(triplet.diffusion.constant[None])[0]
    has_diffusion = const_sqrt_c is None or np.any(const_sqrt_c != 0.0)

    if fast and _is_levy(triplet, config):
        return _levy_batch(triplet, x0, config, n, gauss, stable_cms, stable_sub, const_sqrt_c, has_diffusion)

    values = np.empty((steps + 1, n, d))
    x = np.broadcast_to(x0, (n, d)).astype(float).copy()
    values[0] = x
    alive = np.ones(n, dtype=bool)
    jump_log = [[] for _ in range(n)]
    times = config.grid()

    for k in range(steps):
        drift = triplet.b(x)
        if isinstance(jumps, CompoundPoisson):
            drift = drift - jumps.compensator(x)
        inc = drift * dt
        if has_diffusion:
            root = np.broadcast_to(const_sqrt_c, (n, d, d)) if const_sqrt_c is not None else _psd_sqrt(triplet.c(x))
            inc = inc + sqdt * _matvec(root, gauss[k])
        if stable_cms is not None:
            a, sig = jumps.index(x), jumps.scale(x)
            inc = inc + (sig * dt ** (1.0 / a) * symmetric_stable(a, stable_cms[0][k], stable_cms[1][k]))[:, None]
        elif stable_sub is not None:
            a, sig = jumps.index(x), jumps.scale(x)
            A = positive_stable(a / 2.0, stable_sub[0][k], stable_sub[1][k])
            inc = inc + (sig * dt ** (1.0 / a) * np.sqrt(2.0 * A))[:, None] * stable_sub[2][k]
        elif trunc_u is not None:
            inc = inc + _truncated_stable_step(jumps, x, dt, config.small_jump_cutoff,
                                               trunc_u, k, rngs, alive, jump_log, times[k])
        if cpp_counts is not None:
            for i in np.flatnonzero(alive & (cpp_counts[k] > 0)):
                inc[i] += _thinned_jumps(jumps, lam_max, x[i], int(cpp_counts[k, i]), rngs[i],
                                         dt, times[k], jump_log[i])
        prop = x + inc
        inside = space.contains(prop)
        if not np.all(inside | ~alive):
            if not config.absorb_outside:
                bad = int(np.flatnonzero(alive & ~inside)[0])
                raise SimulationError(f"path {bad} left the state space at t={times[k + 1]:.6g}")
            alive &= inside
        x = np.where(alive[:, None], prop, x)
        values[k + 1] = x
    return np.ascontiguousarray(values.transpose(1, 0, 2)), [tuple(j) for j in jump_log]


def _thinned_jumps(jumps, lam_max, x_row, count, rng, dt, t_left, log):
    offsets = np.sort(rng.random(count))
    total = np.zeros_like(x_row)
    cur = x_row.copy()
    for off in offsets:
        lam = float(jumps.rate(cur[None, :])[0])
        if lam > lam_max * (1 + 1e-12):
            raise SimulationError(f"jump rate {lam} exceeds the thinning bound {lam_max}")
        if rng.random() * lam_max < lam:
            j = jumps.law.sample(cur, rng)
            cur = cur + j
            total = total + j
            log.append(t_left + off * dt)
    return total


def _truncated_stable_step(jumps, x, dt, eps, trunc, k, rngs, alive, log, t_left):
    """Jumps above ``eps`` exactly, the rest replaced by a matched Gaussian."""
    a, sig = jumps.index(x), jumps.scale(x)
    dens = _stable_levy_constant(a) * sig**a
    rate = 2.0 * dens / (a * eps**a)
    small_var = 2.0 * dens * eps ** (2.0 - a) / (2.0 - a)
    inc = (np.sqrt(small_var * dt) * trunc[1][k])[:, None]
    counts = stats.poisson.ppf(trunc[0][k], rate * dt).astype(int)
    for i in np.flatnonzero(alive & (counts > 0)):
        r = rngs[i]
        mags = eps * (1.0 - r.random(counts[i])) ** (-1.0 / a[i])
        signs = np.where(r.random(counts[i]) < 0.5, -1.0, 1.0)
        inc[i, 0] += float(np.sum(mags * signs))
        log[i].extend(t_left + dt * np.sort(r.random(counts[i])))
    return inc


def simulate_path(triplet: MarkovTriplet, x0, config: SimConfig, seed: int) -> SamplePath:
    """One path from ``x0``; identical arguments give identical bytes."""
    x0 = _check_start(triplet, x0)
    values, jumps = _simulate_batch(triplet, x0, config, [int(seed)])
    return SamplePath(config.grid(), values[0], int(seed), jumps[0])


def simulate_ensemble(triplet: MarkovTriplet, x0, config: SimConfig, master_seed: int,
                      workers: Optional[int] = None, first_path: int = 0) -> Ensemble:
    """``config.n_paths`` paths with seeds ``derive_seed(master_seed, first_path + i)``.

    ``first_path`` lets a large ensemble be produced in memory-bounded slices
    that are bit-identical to the corresponding rows of the full run.
    ``workers > 1`` splits the paths into contiguous chunks run on threads;
    the result is bit-identical to the serial run.
    """
    x0 = _check_start(triplet, x0)
    seeds = [derive_seed(master_seed, first_path + i) for i in range(config.n_paths)]
    workers = max(1, int(workers or 1))
    if workers == 1 or config.n_paths < 2 * workers:
        values, jumps = _simulate_batch(triplet, x0, config, seeds)
    else:
        chunks = np.array_split(np.arange(config.n_paths), workers)
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda c: _simulate_batch(triplet, x0, config, [seeds[i] for i in c]), chunks))
        values = np.concatenate([p[0] for p in parts])
        jumps = [j for p in parts for j in p[1]]
    return Ensemble(x0, config.grid(), values, tuple(seeds), triplet, config, int(master_seed), tuple(jumps))


def _check_start(triplet: MarkovTriplet, x0) -> np.ndarray:
    x0 = as_states(x0, triplet.dim).reshape(triplet.dim)
    if not triplet.state_space.contains(x0[None])[0]:
        raise DomainError(f"start {x0.tolist()} lies outside the state space")
    return x0
