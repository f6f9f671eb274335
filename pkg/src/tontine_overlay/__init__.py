"""Optimal tontine-overlay decumulation: DP solver, simulator, bootstrap."""

from .market import ModelParams, sample_interval, characteristic_exponent
from .mortality import MortalityTable, gain_rate, group_gain
from .scenario import Scenario, default_mortality_table
from .policy import ControlPolicy
from .solver import SolverGrid, solve_policy
from .objective import es_from_samples, rockafellar_value, optimize_wstar, sweep_kappa
from .simulate import simulate_policy, simulate_constant

__version__ = "0.1.0"
