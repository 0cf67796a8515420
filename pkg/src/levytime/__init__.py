"""Simulation of Levy-type processes and pathwise random time changes.

Modules:

* ``symbol``   Markov triplets, symbols, ``H(x, R)``, ``H(R)`` and the uniform index
* ``simulate`` seeded Euler-type path simulation
* ``ivp``      minimal and maximal solutions of ``y(t) = int_0^t Y(y(s)) ds``
* ``tce``      pathwise time change equation and its uniqueness conditions
* ``verify``   Monte Carlo checks on ensembles
* ``cli``      config-driven runner
"""

__version__ = "0.1.0"

from .errors import (DomainError, LevyTimeError, NumericError, ParseError, RangeError, SimulationError,
                     StatisticsError, ValidationError)
from .expr import parse_g, parse_profile
from .ivp import (IvpSolution, TimeProfile, blowup_time, first_zero, integral_along, integrate_reciprocal, residual,
                  solve_ivp_extremal)
from .simulate import (Ensemble, PathStack, SamplePath, SimConfig, derive_seed, path_sup_increment,
                       simulate_ensemble, simulate_path)
from .symbol import (MarkovTriplet, StateSpace, Symbol, estimate_uniform_index, eval_symbol, h_global, h_local,
                     symbol_preset, triplet_preset)
from .tce import (ConditionReport, GFunction, TceSolution, check_growth_at_zeros, check_holder_after_tau,
                  check_regular_at_zero, divergence_at_tau0, solve_tce)
from .verify import (check_time_changed_symbol, holder_index_check, martingale_defect, maximal_inequality_check,
                     occupation_divergence, small_time_symbol)
