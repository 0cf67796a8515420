"""Pathwise solution of the time change equation ``Z(t) = X(int_0^t g(Z(s)) ds)``.

For a frozen path the equation reduces to the IVP with profile
``Y(t) = g(X(t))``: if ``alpha`` solves ``alpha(t) = int_0^t Y(alpha(s)) ds``
then ``Z = X o alpha`` solves the time change equation, and conversely. The
canonical solution returned is the minimal one; the maximal one is reported
alongside so non-uniqueness stays visible.

The sufficient conditions for uniqueness are checked on grids and reported,
never enforced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import RangeError
from .ivp import IvpSolution, TimeProfile, certify_divergence, residual, solve_ivp_extremal
from .simulate import Ensemble, PathStack, SamplePath, grid_index, running_sup_increments
from .symbol import StateSpace, as_states

ZERO_THRESHOLD = 1e-12


class GFunction:
    """A bounded nonnegative speed function ``g`` on the state space.

    ``evaluator`` maps states ``(n, d)`` to ``(n,)``. ``bound`` defaults to the
    maximum over the probe grid. ``growth_exponent`` is the declared power
    ``lambda`` in ``g(y) <= C_g |y - z|**lambda`` near each zero ``z``.
    """

    def __init__(self, evaluator: Callable, bound: Optional[float] = None, declared_zeros=(),
                 growth_exponent: Optional[float] = None, growth_constant: Optional[float] = None,
                 dim: int = 1, name: str = "g", probe=None):
        self.evaluator = evaluator
        self.dim = dim
        self.name = name
        self.declared_zeros = tuple(np.atleast_1d(np.asarray(z, dtype=float)) for z in declared_zeros)
        self.growth_exponent = growth_exponent
        self.growth_constant = growth_constant
        self.probe = StateSpace(dim).probe_grid(4001 if dim == 1 else 4096) if probe is None else as_states(probe, dim)
        vals = self.evaluate(self.probe)
        if bound is None:
            bound = float(np.max(vals))
        self.bound = float(bound)
        if not self.bound > 0:
            raise ValueError("g must be positive somewhere on the probe grid")
        self.validate(vals)

    @classmethod
    def constant(cls, c: float, dim: int = 1):
        return cls(lambda x: np.full(x.shape[0], float(c)), bound=float(c), dim=dim, name=repr(float(c)))

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        out = np.asarray(self.evaluator(x), dtype=float)
        return np.broadcast_to(out, (x.shape[0],)).copy() if out.ndim == 0 else out.reshape(x.shape[0])

    def __call__(self, x):
        xs = as_states(x, self.dim)
        batch = xs.shape[:-1]
        out = self.evaluate(xs.reshape(-1, self.dim)).reshape(batch)
        return out[()] if batch == () else out

    def validate(self, vals=None):
        vals = self.evaluate(self.probe) if vals is None else vals
        if np.any(vals < 0):
            i = int(np.argmin(vals))
            raise ValueError(f"g is negative at {self.probe[i].tolist()}: {vals[i]}")
        if np.any(vals > self.bound * (1 + 1e-12)):
            raise ValueError(f"g exceeds its bound {self.bound} on the probe grid")
        for z in self.declared_zeros:
            gz = float(self(z if self.dim > 1 else z[0]))
            if gz > ZERO_THRESHOLD:
                raise ValueError(f"declared zero {z.tolist()} has g = {gz}")

    def __repr__(self):
        return f"GFunction({self.name}, bound={self.bound})"


# ---------------------------------------------------------------------------
# Condition checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegularityVerdict:
    passed: bool
    witness: Optional[tuple] = None


def check_regular_at_zero(g: GFunction, probe=None, levels: int = 40, n_local: int = 9) -> RegularityVerdict:
    """Discrete regularity at zero.

    A probe ``x`` with ``g(x) > 0`` passes when, for some radius in the ladder
    ``h * 2**-m`` (``h`` the probe spacing), every local sample within that
    radius has ``g > g(x) / 2``. The first failing probe is the witness.
    """
    xs = g.probe if probe is None else as_states(probe, g.dim).reshape(-1, g.dim)
    gx = g.evaluate(xs)
    active = gx > ZERO_THRESHOLD
    xs, gx = xs[active], gx[active]
    if xs.shape[0] == 0:
        return RegularityVerdict(True)
    if xs.shape[0] > 1:
        spread = np.ptp(xs, axis=0)
        h = float(np.max(spread)) / max(round(xs.shape[0] ** (1.0 / g.dim)) - 1, 1)
    else:
        h = 1.0
    if g.dim == 1:
        dirs = np.linspace(-1.0, 1.0, n_local)[:, None]
    else:
        rng = np.random.default_rng(0)
        d = rng.standard_normal((n_local * g.dim, g.dim))
        dirs = d / np.linalg.norm(d, axis=1, keepdims=True) * rng.uniform(0, 1, (d.shape[0], 1))
    ok = np.zeros(xs.shape[0], dtype=bool)
    for m in range(levels):
        todo = ~ok
        if not todo.any():
            break
        r = h * 2.0 ** (-m)
        pts = xs[todo][:, None, :] + r * dirs[None, :, :]
        vals = g.evaluate(pts.reshape(-1, g.dim)).reshape(pts.shape[:2])
        ok[np.flatnonzero(todo)[np.min(vals, axis=1) > gx[todo] / 2]] = True
    if ok.all():
        return RegularityVerdict(True)
    bad = xs[np.flatnonzero(~ok)[0]]
    return RegularityVerdict(False, tuple(float(v) for v in bad))


@dataclass(frozen=True)
class GrowthVerdict:
    passed: bool
    exponent: float  # declared lambda (or the fitted one when none is declared)
    fitted_exponent: float
    growth_constant: float
    index_gap: float
    degenerate: bool = False
    vacuous: bool = False


def check_growth_at_zeros(g: GFunction, beta_infinity: float, radii=None, tol: float = 0.05) -> GrowthVerdict:
    """Fit ``log max_{|y - z| = r} g(y)`` against ``log r`` on shells around each declared zero.

    Passes iff the smallest fitted slope is ``>= lambda - tol`` and
    ``lambda > beta_infinity``. Shells where ``g`` vanishes identically give a
    degenerate (passing) fit.
    """
    lam = g.growth_exponent
    if not g.declared_zeros:
        # no zeros: the growth condition constrains nothing
        lam_v = math.nan if lam is None else lam
        return GrowthVerdict(True, lam_v, math.nan, math.nan, math.inf, vacuous=True)
    radii = np.logspace(-4, -1, 13) if radii is None else np.asarray(radii, dtype=float)
    if g.dim == 1:
        dirs = np.array([[-1.0], [1.0]])
    else:
        rng = np.random.default_rng(0)
        dirs = rng.standard_normal((64, g.dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    slopes, consts = [], []
    for z in g.declared_zeros:
        pts = z[None, None, :] + radii[:, None, None] * dirs[None, :, :]
        sup = np.max(g.evaluate(pts.reshape(-1, g.dim)).reshape(pts.shape[:2]), axis=1)
        pos = sup > ZERO_THRESHOLD
        if pos.sum() < 2:
            continue
        slope = float(np.polyfit(np.log(radii[pos]), np.log(sup[pos]), 1)[0])
        slopes.append(slope)
        consts.append((radii[pos], sup[pos]))
    if not slopes:
        # g vanishes on every shell: the zeros sit in an absorbing region
        gap = math.inf if lam is None else lam - beta_infinity
        return GrowthVerdict(True, math.nan if lam is None else lam, math.nan, 0.0, gap, degenerate=True)
    fitted = min(slopes)
    lam_v = fitted if lam is None else float(lam)
    c_g = max(float(np.max(s / r ** lam_v)) for r, s in consts)
    gap = lam_v - beta_infinity
    return GrowthVerdict(bool(fitted >= lam_v - tol and gap > 0), lam_v, fitted, c_g, gap)


@dataclass(frozen=True)
class HolderVerdict:
    passed: bool
    C: float = 0.0
    delta: float = 0.0
    tau0: float = math.inf
    slope: float = math.nan
    vacuous: bool = False
    inconclusive: bool = False


def first_zero_time(path: SamplePath, g: GFunction) -> float:
    """First grid time with ``g(X(t)) <= ZERO_THRESHOLD``; ``inf`` if none."""
    vals = g.evaluate(path.values)
    hit = np.flatnonzero(vals <= ZERO_THRESHOLD)
    return float(path.times[hit[0]]) if hit.size else math.inf


def _holder_from_running(run: np.ndarray, times: np.ndarray, i0: int, lam: float) -> HolderVerdict:
    """Verdict from one row of running sup increments started at index ``i0``."""
    n_after = times.size - 1 - i0
    levels = 2 ** np.arange(int(math.floor(math.log2(n_after))) + 1) if n_after >= 1 else np.array([], int)
    tau0 = float(times[i0])
    if levels.size < 3:
        return HolderVerdict(False, tau0=tau0, inconclusive=True)
    h = times[i0 + levels] - tau0
    r = run[i0 + levels] / h ** (1.0 / lam)
    pos = r > 0
    if pos.sum() < 2:
        return HolderVerdict(True, float(np.max(r)), float(h[-1]), tau0, 0.0)
    slope = float(np.polyfit(np.log(h[pos]), np.log(r[pos]), 1)[0])
    return HolderVerdict(bool(np.isfinite(r).all() and slope >= 0.0), float(np.max(r)), float(h[-1]), tau0, slope)


def check_holder_after_tau(path: SamplePath, g: GFunction, lam: float) -> HolderVerdict:
    """Growth of ``sup_{s <= h} |X(tau0 + s) - X(tau0)| / h**(1/lam)`` over dyadic ``h``.

    Passes iff the log-log regression slope over the dyadic levels is
    nonnegative, i.e. the ratio does not grow toward small ``h``. ``C`` is the
    largest ratio, ``delta`` the largest ``h``.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    tau0 = first_zero_time(path, g)
    if not math.isfinite(tau0):
        return HolderVerdict(True, vacuous=True)
    i0 = int(grid_index(path.times, tau0))
    run = running_sup_increments(path.values[None], i0)[0]
    return _holder_from_running(run, path.times, i0, lam)


@dataclass(frozen=True)
class DivergenceVerdict:
    certified: bool
    exponent: float = math.nan
    tau0: float = math.inf
    conclusive: bool = True


def divergence_at_tau0(path: SamplePath, g: GFunction) -> DivergenceVerdict:
    """Power-law certificate that ``int_{tau0}^{tau0 + eps} ds / g(X(s)) = inf``."""
    tau0 = first_zero_time(path, g)
    if not math.isfinite(tau0):
        return DivergenceVerdict(False, conclusive=False)
    i0 = int(grid_index(path.times, tau0))
    if i0 >= path.times.size - 1:
        return DivergenceVerdict(False, tau0=tau0, conclusive=False)
    prof = g.evaluate(path.values[i0:])
    prof[0] = 0.0
    Y = TimeProfile(path.times[i0:] - path.times[i0], prof, sup_bound=max(g.bound, float(prof.max())))
    fit = certify_divergence(Y, 0, "right")
    return DivergenceVerdict(bool(fit.divergent), fit.exponent, tau0, fit.conclusive or fit.plateau)


@dataclass(frozen=True, eq=False)
class ConditionReport:
    regular_at_zero: RegularityVerdict
    growth: GrowthVerdict
    holder: tuple  # HolderVerdict per path
    divergence: tuple  # DivergenceVerdict per path
    beta_infinity: float = math.nan

    @property
    def index_gap(self) -> float:
        return self.growth.index_gap

    @property
    def theorem_applies(self) -> bool:
        return bool(self.regular_at_zero.passed and self.growth.passed and self.index_gap > 0)

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return str(v)
            return v

        def flat(obj):
            return {k: clean(v) for k, v in obj.__dict__.items()}

        return {
            "theorem_applies": self.theorem_applies,
            "beta_infinity": clean(self.beta_infinity),
            "index_gap": clean(self.index_gap),
            "regular_at_zero": {"passed": self.regular_at_zero.passed,
                                "witness": list(self.regular_at_zero.witness) if self.regular_at_zero.witness else None},
            "growth_A1": flat(self.growth),
            "holder_A2": [dict(path_id=i, **flat(h)) for i, h in enumerate(self.holder)],
            "divergence_at_tau0": [dict(path_id=i, **flat(d)) for i, d in enumerate(self.divergence)],
        }


@dataclass(frozen=True, eq=False)
class TceSolution:
    z_path: SamplePath
    alpha: np.ndarray  # minimal time change
    alpha_max: np.ndarray
    unique: bool
    report: Optional[ConditionReport] = None
    ivp: Optional[IvpSolution] = None
    path_id: int = 0

    @property
    def times(self) -> np.ndarray:
        return self.z_path.times


def solve_path(path: SamplePath, g: GFunction, t_grid: np.ndarray, path_id: int = 0) -> TceSolution:
    """Minimal and maximal time changes for one frozen path."""
    Y = TimeProfile(path.times, g.evaluate(path.values), sup_bound=g.bound)
    sol = solve_ivp_extremal(Y, t_grid)
    z = SamplePath(t_grid, path.at(sol.alpha1), path.seed)
    return TceSolution(z, sol.alpha1, sol.alpha2, sol.unique, None, sol, path_id)


def solve_tce(ensemble: Ensemble, g: GFunction, z_horizon: Optional[float] = None,
              beta_infinity: Optional[float] = None, holder_exponent: Optional[float] = None) -> list:
    """Solve the time change equation on every path of ``ensemble``.

    The requested ``z_horizon`` must satisfy ``bound(g) * z_horizon <= horizon``
    (the time change never runs faster than ``bound(g)``); the default is the
    largest admissible value capped at the ensemble horizon. ``beta_infinity``
    (default: estimated from the ensemble's triplet) feeds the growth check;
    ``holder_exponent`` (default: the declared growth exponent) is used for
    the per-path Holder check after ``tau0``.
    """
    T = ensemble.horizon
    if z_horizon is None:
        z_horizon = min(T, T / g.bound)
    if not z_horizon > 0:
        raise ValueError("z_horizon must be positive")
    if g.bound * z_horizon > T * (1 + 1e-12):
        raise RangeError(f"time budget violated: bound(g) * z_horizon = {g.bound * z_horizon} > horizon {T}")
    times = ensemble.times
    t_grid = times[: int(grid_index(times, z_horizon)) + 1]

    if beta_infinity is None:
        from .symbol import Symbol, estimate_uniform_index

        beta_infinity = estimate_uniform_index(Symbol.from_triplet(ensemble.triplet)).beta_infinity
    lam = holder_exponent if holder_exponent is not None else g.growth_exponent

    sols = [solve_path(ensemble[i], g, t_grid, i) for i in range(len(ensemble))]

    holder, divergence = _path_checks(ensemble, g, lam)
    report = ConditionReport(check_regular_at_zero(g), check_growth_at_zeros(g, beta_infinity),
                             holder, divergence, float(beta_infinity))
    return [TceSolution(s.z_path, s.alpha, s.alpha_max, s.unique, report, s.ivp, s.path_id) for s in sols]


def _path_checks(ensemble: Ensemble, g: GFunction, lam: Optional[float]):
    n = len(ensemble)
    holder = [HolderVerdict(True, vacuous=True)] * n
    divergence = [DivergenceVerdict(False, conclusive=False)] * n
    gv = g.evaluate(ensemble.values.reshape(-1, ensemble.dim)).reshape(ensemble.values.shape[:2])
    hit = gv <= ZERO_THRESHOLD
    has = np.flatnonzero(hit.any(axis=1))
    for i in has:
        path = ensemble[int(i)]
        divergence[i] = divergence_at_tau0(path, g)
        if lam is not None:
            holder[i] = check_holder_after_tau(path, g, lam)
        else:
            holder[i] = HolderVerdict(False, tau0=divergence[i].tau0, inconclusive=True)
    return tuple(holder), tuple(divergence)


def time_changed_paths(solutions: Sequence[TceSolution]) -> PathStack:
    """Stack the ``Z`` paths of a solution list."""
    return PathStack(solutions[0].times, np.stack([s.z_path.values for s in solutions]))


def check_equation(solution: TceSolution, g: GFunction) -> float:
    """``sup_t |alpha(t) - int_0^t g(Z(s)) ds|`` with left-point quadrature on the ``Z`` grid."""
    t = solution.times
    gz = g.evaluate(solution.z_path.values)
    integral = np.concatenate([[0.0], np.cumsum(gz[:-1] * np.diff(t))])
    return float(np.max(np.abs(solution.alpha - integral)))


def path_residual(path: SamplePath, g: GFunction, solution: TceSolution, which: str = "min") -> float:
    """IVP residual of the minimal (or maximal) time change against ``Y = g(X)``."""
    Y = TimeProfile(path.times, g.evaluate(path.values), sup_bound=g.bound)
    a = solution.alpha if which == "min" else solution.alpha_max
    return residual(Y, a, solution.times)
