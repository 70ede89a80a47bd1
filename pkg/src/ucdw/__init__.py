"""Dantzig-Wolfe column generation for unit commitment, with learned dual warmstarts."""

from .colgen import ColGenConfig, ColGenResult, compute_lower_bound, run_column_generation
from .lp_core import build_uc_model, solve_extensive_uc, solve_lp, solve_milp
from .pricing import DualPoint, solve_all_pricing, solve_pricing
from .uc_model import GeneratorSpec, Schedule, UcInstance, UcSolution, generate_demand, generate_fleet, make_instances

__version__ = "0.1.0"

__all__ = [
    "ColGenConfig", "ColGenResult", "DualPoint", "GeneratorSpec", "Schedule", "UcInstance", "UcSolution",
    "build_uc_model", "compute_lower_bound", "generate_demand", "generate_fleet", "make_instances",
    "run_column_generation", "solve_all_pricing", "solve_extensive_uc", "solve_lp", "solve_milp", "solve_pricing",
]
