"""Critical points, gradient-flow trajectories and a-priori monitors."""

from .critical import CriticalPoint, find_critical_points, seed_grid
from .morse import MorseCount, MorseSmaleError, morse_trajectories, separable_critical_points
from .bvp import TrajectorySolution, connect_orbit_bvp, decay_rate, adiabatic_experiment
from .monitors import monitor_apriori, heinz_monitor
from .slice import sphere_slice_check, cylinder_ball_check

__all__ = [
    "CriticalPoint",
    "find_critical_points",
    "seed_grid",
    "MorseCount",
    "MorseSmaleError",
    "morse_trajectories",
    "separable_critical_points",
    "TrajectorySolution",
    "connect_orbit_bvp",
    "decay_rate",
    "adiabatic_experiment",
    "monitor_apriori",
    "heinz_monitor",
    "sphere_slice_check",
    "cylinder_ball_check",
]
