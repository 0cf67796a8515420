"""Markov triplets, symbols and the regularity functionals H(x, R), H(R).

A symbol is evaluated as

    q(x, u) = i<u, b(x)> - 1/2 <c(x) u, u> + int (e^{i<u,y>} - 1 - i<u, chi(y)>) F(x, dy)

with the truncation ``chi(y) = y`` for ``|y| <= 1`` and ``y / |y|`` otherwise.
Jump kernels come from two parametric families (compound Poisson and
symmetric stable-like), both of which have closed-form jump integrals.

Every evaluator here is vectorised: states are arrays of shape ``(n, d)`` and
frequencies broadcast against them.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate, special

from .errors import DomainError, NumericError

ArrayLike = Union[float, Sequence[float], np.ndarray]


def chi(y):
    """Truncation function, applied along the last axis."""
    y = np.asarray(y, dtype=float)
    norm = np.linalg.norm(y, axis=-1, keepdims=True)
    return np.where(norm > 1.0, y / np.where(norm > 1.0, norm, 1.0), y)


# ---------------------------------------------------------------------------
# State space and coefficient fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StateSpace:
    """All of ``R^d`` or an axis-aligned box ``[lower, upper]``."""

    dim: int = 1
    lower: Optional[tuple] = None
    upper: Optional[tuple] = None

    def __post_init__(self):
        if not 1 <= self.dim <= 3:
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dim}")
        if (self.lower is None) != (self.upper is None):
            raise ValueError("box needs both lower and upper bounds")
        if self.lower is not None:
            lo = tuple(float(v) for v in np.broadcast_to(self.lower, (self.dim,)))
            hi = tuple(float(v) for v in np.broadcast_to(self.upper, (self.dim,)))
            if not all(np.isfinite(lo + hi)) or any(a >= b for a, b in zip(lo, hi)):
                raise ValueError(f"box bounds must be finite and ordered: {lo}, {hi}")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)

    @property
    def is_box(self) -> bool:
        return self.lower is not None

    def contains(self, x) -> np.ndarray:
        x = as_states(x, self.dim)
        if not self.is_box:
            return np.all(np.isfinite(x), axis=-1)
        return np.all((x >= self.lower) & (x <= self.upper), axis=-1)

    def probe_grid(self, n: int = 128, radius: float = 10.0) -> np.ndarray:
        """Tensor grid covering the box, or ``[-radius, radius]^d`` otherwise.

        ``n`` is the total budget; each axis gets ``n ** (1/d)`` points.
        """
        per_axis = max(3, int(round(n ** (1.0 / self.dim))))
        if self.is_box:
            lo, hi = np.array(self.lower), np.array(self.upper)
        else:
            lo, hi = -radius * np.ones(self.dim), radius * np.ones(self.dim)
        axes = [np.linspace(a, b, per_axis) for a, b in zip(lo, hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def as_states(x, dim: int) -> np.ndarray:
    """Coerce ``x`` to shape ``(..., dim)``.

    In 1-d every entry is a state, unless the array already carries a
    trailing axis of length one.
    """
    x = np.asarray(x, dtype=float)
    if dim == 1:
        return x if x.ndim >= 2 and x.shape[-1] == 1 else x[..., None]
    if x.shape[-1:] != (dim,):
        raise ValueError(f"states need a trailing axis of length {dim}, got {x.shape}")
    return x


class Field:
    """A coefficient that is either constant or a vectorised function of state.

    Callables receive states of shape ``(n, d)`` and must return an array whose
    shape is ``(n,) + shape`` (a bare ``(n,)`` is accepted for 1-d outputs).
    """

    def __init__(self, value, shape: tuple, name: str = "field"):
        self.shape = shape
        self.name = name
        if callable(value):
            self.fn = value
            self.constant = None
        else:
            arr = np.asarray(value, dtype=float)
            if shape == (1, 1) and arr.ndim < 2:
                arr = arr.reshape(1, 1)
            elif len(shape) == 2 and arr.ndim == 0:
                arr = arr * np.eye(shape[0])
            arr = np.broadcast_to(arr, shape).copy() if arr.shape != shape else arr
            self.fn = None
            self.constant = arr

    def __call__(self, x: np.ndarray) -> np.ndarray:
        n = x.shape[0]
        if self.constant is not None:
            return np.broadcast_to(self.constant, (n,) + self.shape)
        out = np.asarray(self.fn(x), dtype=float)
        if out.ndim == 0:
            out = np.broadcast_to(out, (n,) + self.shape)
        elif out.shape != (n,) + self.shape:
            out = out.reshape((n,) + self.shape)
        return out

    def __repr__(self):
        if self.constant is not None:
            return f"Field({self.name}={self.constant.tolist()})"
        return f"Field({self.name}=<function>)"


# ---------------------------------------------------------------------------
# Jump laws and families
# ---------------------------------------------------------------------------


class PointMass:
    """Deterministic jump of (possibly state-dependent) size."""

    def __init__(self, size, dim: int = 1):
        self.dim = dim
        self.size = Field(size, (dim,), "size")

    def characteristic(self, x, u):
        return np.exp(1j * np.sum(u * self.size(x), axis=-1))

    def mean_chi(self, x):
        return chi(self.size(x))

    def sample(self, x_row, rng):
        return self.size(x_row[None, :])[0]


class Normal:
    """Gaussian jump with mean vector ``mean(x)`` and isotropic std ``std(x)``."""

    def __init__(self, mean=0.0, std=1.0, dim: int = 1):
        self.dim = dim
        self.mean = Field(mean, (dim,), "mean")
        self.std = Field(std, (), "std")

    def characteristic(self, x, u):
        m, s = self.mean(x), self.std(x)
        return np.exp(1j * np.sum(u * m, axis=-1) - 0.5 * s**2 * np.sum(u * u, axis=-1))

    def mean_chi(self, x):
        if self.mean.constant is not None and self.std.constant is not None:
            val = self._mean_chi(self.mean.constant[None, :], np.atleast_1d(self.std.constant))
            return np.broadcast_to(val, (x.shape[0], self.dim))
        return self._mean_chi(self.mean(x), np.asarray(self.std(x)))

    def _mean_chi(self, m, s):
        if self.dim == 1:
            return _normal_mean_chi_1d(m[:, 0], s)[:, None]
        s = np.broadcast_to(np.asarray(s, dtype=float), (m.shape[0],))
        return np.stack([_normal_mean_chi_radial(mi, si) for mi, si in zip(m, s)])

    def sample(self, x_row, rng):
        m = self.mean(x_row[None, :])[0]
        s = float(self.std(x_row[None, :])[0])
        return m + s * rng.standard_normal(self.dim)


def _normal_mean_chi_1d(m, s):
    """Closed form of E chi(Y) for Y ~ N(m, s^2)."""
    m = np.asarray(m, dtype=float)
    s = np.broadcast_to(np.asarray(s, dtype=float), m.shape)
    out = np.clip(m, -1.0, 1.0).astype(float)
    pos = s > 0
    if np.any(pos):
        mm, ss = m[pos], s[pos]
        a, b = (-1.0 - mm) / ss, (1.0 - mm) / ss
        cdf_a, cdf_b = special.ndtr(a), special.ndtr(b)
        pdf_a, pdf_b = np.exp(-0.5 * a * a), np.exp(-0.5 * b * b)
        inner = mm * (cdf_b - cdf_a) - ss * (pdf_b - pdf_a) / math.sqrt(2 * math.pi)
        out[pos] = inner + (1.0 - cdf_b) - cdf_a
    return out


def _ive(nu: float, k: float) -> float:
    """``I_nu(k) e^{-k}``; scipy returns nan past ``k ~ 1e9`` so the two-term asymptotic is used there."""
    if k < 1e7:
        return float(special.ive(nu, k))
    return (1.0 - (4 * nu * nu - 1) / (8 * k)) / math.sqrt(2 * math.pi * k)


def _normal_mean_chi_radial(m: np.ndarray, s: float, tol: float = 1e-10) -> np.ndarray:
    """``E chi(Y)`` for ``Y ~ N(m, s^2 I_d)`` as a one-dimensional radial integral.

    Given ``|Y| = r`` the mean direction of ``Y`` is ``m/|m|`` scaled by the
    Bessel ratio ``I_{d/2}(k) / I_{d/2-1}(k)`` with ``k = r |m| / s^2``, and
    ``|Y|`` has the noncentral chi density. Their product is written with
    exponentially scaled Bessel functions so that tiny ``s`` stays finite.
    The integrand is smooth on each side of ``r = 1``, so the integral is
    split there.
    """
    d = m.shape[0]
    mu = float(np.linalg.norm(m))
    if s <= 0:
        return chi(m)
    if mu == 0:
        return np.zeros(d)

    def integrand(r):
        k = r * mu / s**2
        dens = r / s**2 * (r / mu) ** (d / 2 - 1) * math.exp(-0.5 * ((r - mu) / s) ** 2)
        return min(r, 1.0) * dens * _ive(d / 2, k)

    lo, hi = max(0.0, mu - 12 * s), mu + 12 * s + 12 * s * math.sqrt(d)
    pieces = [(lo, min(1.0, hi)), (max(1.0, lo), hi)]
    total, err = 0.0, 0.0
    for a, b in pieces:
        if b > a:
            pts = [mu] if a < mu < b else None
            v, e, *_ = integrate.quad(integrand, a, b, epsabs=tol, epsrel=tol, limit=200, points=pts,
                                      full_output=1)
            total, err = total + v, err + e
    if not (err <= 1e-8 and math.isfinite(total)):
        raise NumericError("radial quadrature for E chi(Y) did not converge", residual=err)
    return total * m / mu


@dataclass(frozen=True)
class NoJumps:
    def symbol_term(self, x, u):
        return np.zeros(x.shape[0], dtype=complex)

    def describe(self):
        return {"type": "none"}


class CompoundPoisson:
    """Jumps at rate ``rate(x)`` with law ``law`` (``PointMass`` or ``Normal``).

    ``rate_bound`` is the thinning envelope used by the simulator; for a
    constant rate it defaults to that constant.
    """

    def __init__(self, rate, law, rate_bound: Optional[float] = None):
        self.rate = Field(rate, (), "rate")
        self.law = law
        if rate_bound is None and self.rate.constant is not None:
            rate_bound = float(self.rate.constant)
        self.rate_bound = rate_bound

    def symbol_term(self, x, u):
        lam = self.rate(x)
        return lam * (self.law.characteristic(x, u) - 1.0 - 1j * np.sum(u * self.law.mean_chi(x), axis=-1))

    def compensator(self, x):
        """rate(x) E chi(J): subtracted from the Euler drift."""
        return self.rate(x)[:, None] * self.law.mean_chi(x)

    def describe(self):
        return {"type": "cpp", "rate": repr(self.rate), "law": type(self.law).__name__}


class StableLike:
    """Rotation-invariant stable-like kernel: contributes ``-scale(x)^a |u|^a``
    with ``a = index(x)`` in (0, 2)."""

    def __init__(self, index, scale=1.0):
        self.index = Field(index, (), "index")
        self.scale = Field(scale, (), "scale")
        if self.index.constant is not None and not 0.0 < float(self.index.constant) < 2.0:
            raise ValueError("stable index must lie in (0, 2)")

    def symbol_term(self, x, u):
        a = self.index(x)
        sig = self.scale(x)
        return -(sig**a) * np.linalg.norm(u, axis=-1) ** a + 0j

    def describe(self):
        return {"type": "stable", "index": repr(self.index), "scale": repr(self.scale)}


JumpFamily = Union[NoJumps, CompoundPoisson, StableLike]


# ---------------------------------------------------------------------------
# Markov triplet and symbol
# ---------------------------------------------------------------------------


class MarkovTriplet:
    """Drift ``b``, diffusion matrix ``c`` and jump family on a state space."""

    def __init__(self, drift=0.0, diffusion=0.0, jumps: JumpFamily = NoJumps(),
                 state_space: Optional[StateSpace] = None, name: Optional[str] = None):
        self.state_space = state_space or StateSpace(1)
        d = self.state_space.dim
        self.dim = d
        self.drift = Field(drift, (d,), "drift")
        self.diffusion = Field(diffusion, (d, d), "diffusion")
        self.jumps = jumps
        self.name = name

    def b(self, x):
        return self.drift(x)

    def c(self, x):
        return self.diffusion(x)

    def validate(self, probe: Optional[np.ndarray] = None, bound: float = 1e12):
        """Check symmetry/PSD of ``c`` and boundedness of ``b``, ``c`` on a probe grid."""
        if probe is None:
            probe = self.state_space.probe_grid(256)
        probe = probe[self.state_space.contains(probe)]
        b, c = self.b(probe), self.c(probe)
        if not np.all(np.isfinite(b)) or np.max(np.abs(b), initial=0.0) > bound:
            raise NumericError("drift is unbounded on the probe grid")
        if not np.all(np.isfinite(c)) or np.max(np.abs(c), initial=0.0) > bound:
            raise NumericError("diffusion is unbounded on the probe grid")
        if not np.allclose(c, np.swapaxes(c, -1, -2), atol=1e-12):
            raise NumericError("diffusion matrix is not symmetric")
        eig = np.linalg.eigvalsh(c)
        scale = max(1.0, float(np.max(np.abs(c), initial=0.0)))
        if np.min(eig, initial=0.0) < -1e-10 * scale:
            raise NumericError("diffusion matrix is not positive semidefinite")
        return self

    def describe(self) -> dict:
        out = {"name": self.name, "dim": self.dim,
               "drift": repr(self.drift), "diffusion": repr(self.diffusion),
               "jumps": self.jumps.describe()}
        if self.state_space.is_box:
            out["box"] = [list(self.state_space.lower), list(self.state_space.upper)]
        return out


class Symbol:
    """An evaluable symbol ``q(x, u)``, closed form or derived from a triplet.

    Call it with states and frequencies; in 1-d plain arrays are batches of
    scalars, in higher dimension the last axis has length ``d``.
    """

    def __init__(self, fn: Callable, dim: int = 1, state_space: Optional[StateSpace] = None,
                 triplet: Optional[MarkovTriplet] = None, name: Optional[str] = None):
        self._fn = fn
        self.dim = dim
        self.state_space = state_space or StateSpace(dim)
        self.triplet = triplet
        self.name = name

    @classmethod
    def closed_form(cls, fn, dim=1, state_space=None, name=None):
        """Wrap ``fn(x, u)`` taking aligned ``(n, d)`` arrays and returning ``(n,)``."""
        return cls(fn, dim, state_space, None, name)

    @classmethod
    def from_triplet(cls, triplet: MarkovTriplet):
        def q(x, u):
            b, c = triplet.b(x), triplet.c(x)
            out = 1j * np.sum(u * b, axis=-1)
            out = out - 0.5 * np.einsum("ni,nij,nj->n", u, c, u)
            return out + triplet.jumps.symbol_term(x, u)

        return cls(q, triplet.dim, triplet.state_space, triplet, triplet.name)

    def evaluate(self, x, u):
        """Raw vectorised evaluation on aligned ``(n, d)`` arrays."""
        out = np.asarray(self._fn(x, u), dtype=complex)
        out = np.broadcast_to(out, (x.shape[0],)).copy()
        out[np.all(u == 0.0, axis=-1)] = 0.0
        return out

    def __call__(self, x, u):
        xs, us = as_states(x, self.dim), as_states(u, self.dim)
        batch = np.broadcast_shapes(xs.shape[:-1], us.shape[:-1])
        xs = np.broadcast_to(xs, batch + (self.dim,)).reshape(-1, self.dim)
        us = np.broadcast_to(us, batch + (self.dim,)).reshape(-1, self.dim)
        out = self.evaluate(xs, us).reshape(batch)
        return out[()] if batch == () else out

    def __repr__(self):
        return f"Symbol({self.name or '<closed form>'}, d={self.dim})"


def eval_symbol(spec: Symbol, x, u) -> complex:
    """q(x, u) for a single state ``x`` and frequency ``u``."""
    xs = as_states(x, spec.dim).reshape(-1, spec.dim)
    if xs.shape[0] != 1:
        raise ValueError("eval_symbol takes a single state; call the symbol for batches")
    if not spec.state_space.contains(xs)[0]:
        raise DomainError(f"state {np.ravel(x).tolist()} lies outside the state space")
    return complex(np.ravel(spec(xs[0] if spec.dim > 1 else xs[0, 0], u))[0])


# ---------------------------------------------------------------------------
# Regularity functionals
# ---------------------------------------------------------------------------


def _frequency_grid(dim: int, n_eps: int) -> np.ndarray:
    """Points of the closed unit ball; ``|q(x,-u)| = |q(x,u)|`` so half suffices."""
    radii = np.linspace(0.0, 1.0, n_eps)
    if dim == 1:
        return radii[:, None]
    if dim == 2:
        ang = np.linspace(0.0, np.pi, n_eps, endpoint=False)
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    else:
        # Fibonacci points on the upper half sphere
        k = np.arange(2 * n_eps) + 0.5
        z = 1.0 - k / (2 * n_eps)
        phi = np.pi * (1.0 + 5**0.5) * k
        r = np.sqrt(1.0 - z**2)
        dirs = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)
    return (radii[:, None, None] * dirs[None, :, :]).reshape(-1, dim)


def _ball_grid(x: np.ndarray, radius: float, n_y: int) -> np.ndarray:
    d = x.shape[0]
    per_axis = max(3, int(round(n_y ** (1.0 / d))))
    axis = np.linspace(-radius, radius, per_axis)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    offs = np.stack([m.ravel() for m in mesh], axis=-1)
    offs = offs[np.linalg.norm(offs, axis=-1) <= radius * (1 + 1e-12)]
    return x[None, :] + offs


def _sup_abs(spec: Symbol, ys: np.ndarray, freqs: np.ndarray) -> float:
    xs = np.repeat(ys, freqs.shape[0], axis=0)
    us = np.tile(freqs, (ys.shape[0], 1))
    return float(np.max(np.abs(spec.evaluate(xs, us)), initial=0.0))


def h_local(spec: Symbol, x, R: float, n_eps: int = 64, n_y: int = 128) -> float:
    """``sup_{|y-x|<=2R} sup_{|eps|<=1} |q(y, eps/R)|`` on deterministic grids.

    The grid supremum never exceeds the true one.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    x = as_states(x, spec.dim).reshape(spec.dim)
    ys = _ball_grid(x, 2.0 * R, n_y)
    ys = ys[spec.state_space.contains(ys)]
    if ys.shape[0] == 0:
        raise DomainError(f"ball of radius {2 * R} around {x.tolist()} misses the state space")
    return _sup_abs(spec, ys, _frequency_grid(spec.dim, n_eps) / R)


def h_global(spec: Symbol, R, probe: Optional[np.ndarray] = None, n_eps: int = 64, n_y: int = 128):
    """``sup_y sup_{|eps|<=1} |q(y, eps/R)|`` with ``y`` over a probe grid of the state space.

    Points outside a box state space are absorbed and contribute nothing.
    For an array of radii the result is made nonincreasing in ``R`` by a
    running maximum from the largest radius down; since the exact ``H`` is
    nonincreasing this keeps every value a lower bound.
    """
    R_arr = np.atleast_1d(np.asarray(R, dtype=float))
    if np.any(R_arr <= 0):
        raise ValueError("R must be positive")
    if probe is None:
        probe = spec.state_space.probe_grid(n_y)
    probe = np.asarray(probe, dtype=float).reshape(-1, spec.dim)
    probe = probe[spec.state_space.contains(probe)]
    freqs = _frequency_grid(spec.dim, n_eps)
    vals = np.array([_sup_abs(spec, probe, freqs / r) for r in R_arr])
    order = np.argsort(-R_arr, kind="stable")
    vals[order] = np.maximum.accumulate(vals[order])
    return float(vals[0]) if np.ndim(R) == 0 else vals


@dataclass(frozen=True)
class IndexEstimate:
    beta_infinity: float
    r_grid: np.ndarray
    h_values: np.ndarray
    fit_slope: float
    fit_residual: float
    degenerate: bool = False


DEFAULT_R_GRID = np.logspace(0.0, -4.0, 17)


def estimate_uniform_index(spec: Symbol, r_grid=None, probe=None, n_eps: int = 64, n_y: int = 128) -> IndexEstimate:
    """Least-squares slope of ``log H(R)`` against ``log(1/R)`` on the finest half of ``r_grid``.

    A numerical surrogate for the limsup definition of the uniform index; the
    RMS residual of the fit is reported so poor fits can be rejected.
    """
    r = np.asarray(DEFAULT_R_GRID if r_grid is None else r_grid, dtype=float)
    if r.ndim != 1 or r.size < 4:
        raise ValueError("r_grid needs at least 4 points")
    if np.any(r <= 0) or np.any(np.diff(r) >= 0):
        raise ValueError("r_grid must be positive and strictly decreasing")
    if np.log10(r[0] / r[-1]) < 2.0 - 1e-12:
        raise ValueError("r_grid must span at least two decades")
    h = np.asarray(h_global(spec, r, probe=probe, n_eps=n_eps, n_y=n_y))
    fine = slice(r.size // 2, None)
    rr, hh = r[fine], h[fine]
    keep = hh > 0
    if keep.sum() < 2:
        return IndexEstimate(0.0, r, h, 0.0, 0.0, degenerate=True)
    X, Y = np.log(1.0 / rr[keep]), np.log(hh[keep])
    slope, intercept = np.polyfit(X, Y, 1)
    resid = float(np.sqrt(np.mean((Y - (slope * X + intercept)) ** 2)))
    return IndexEstimate(float(np.clip(slope, 0.0, 2.0)), r, h, float(slope), resid)


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

_PRESET = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


def triplet_preset(name: str, dim: int = 1) -> MarkovTriplet:
    """Named processes: ``brownian``, ``cauchy``, ``stable(a)``, ``drift(b)``,
    ``cpp(rate, jump)`` and ``zero``.

    ``cpp`` is an uncompensated compound Poisson process, i.e. its symbol is
    ``rate * (exp(i u jump) - 1)``.
    """
    m = _PRESET.match(name)
    if not m:
        raise ValueError(f"cannot parse preset {name!r}")
    key, argtext = m.group(1), m.group(2)
    try:
        args = [float(a) for a in argtext.split(",")] if argtext else []
    except ValueError:
        raise ValueError(f"non-numeric preset arguments in {name!r}") from None
    space = StateSpace(dim)

    def need(k):
        if len(args) != k:
            raise ValueError(f"preset {key!r} takes {k} argument(s), got {len(args)}")

    if key == "zero":
        need(0)
        return MarkovTriplet(state_space=space, name=name)
    if key == "brownian":
        need(0)
        return MarkovTriplet(diffusion=np.eye(dim), state_space=space, name=name)
    if key == "cauchy":
        need(0)
        return MarkovTriplet(jumps=StableLike(1.0), state_space=space, name=name)
    if key == "stable":
        need(1)
        a = args[0]
        if not 0.0 < a <= 2.0:
            raise ValueError("stable index must lie in (0, 2]")
        if a == 2.0:
            return MarkovTriplet(diffusion=2.0 * np.eye(dim), state_space=space, name=name)
        return MarkovTriplet(jumps=StableLike(a), state_space=space, name=name)
    if key == "drift":
        need(1)
        return MarkovTriplet(drift=args[0] * np.ones(dim), state_space=space, name=name)
    if key == "cpp":
        need(2)
        rate, jump = args
        if rate < 0:
            raise ValueError("cpp rate must be nonnegative")
        size = jump * np.ones(dim) / math.sqrt(dim)
        return MarkovTriplet(drift=rate * chi(size), jumps=CompoundPoisson(rate, PointMass(size, dim)),
                             state_space=space, name=name)
    raise ValueError(f"unknown preset {key!r}")


def symbol_preset(name: str, dim: int = 1) -> Symbol:
    return Symbol.from_triplet(triplet_preset(name, dim))
