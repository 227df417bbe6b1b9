from .brute_force import ResourceCapExceeded, brute_force, brute_force_rho
from .single_bath import SingleBathEngine, evolve_single_bath, o_pm_operator
from .trajectory import Trajectory, atomic_write
from .two_bath import TwoBathEngine, evolve_two_bath

__all__ = [
    "ResourceCapExceeded", "brute_force", "brute_force_rho", "SingleBathEngine", "evolve_single_bath",
    "o_pm_operator", "Trajectory", "atomic_write", "TwoBathEngine", "evolve_two_bath",
]
