from .market import (
    Kernel,
    PriorSet,
    ScenarioTree,
    build_tree,
    delta_s,
    load_market,
    reachable_paths,
    read_market,
)
from .utility import AECertificate, MonotoneUtility, PiecewiseUtility, load_utility, read_utility
from .checks import AECheck, NegativityCheck, TypeACheck
from .structure import alpha_qna, check_h_membership, find_h_kernel
from .one_period import (
    OnePeriodProblem,
    cl_psi,
    k_bounds,
    maximize_cl_psi,
    one_period_constants,
    psi,
    psi_p,
    sup_psi,
)
from .dp import (
    DynamicProgram,
    Policy,
    SolverSettings,
    audit,
    c_recursion,
    gap_bound,
    kernel_value,
    lower_value,
    robust_value,
    synthesize_strategy,
    u_cl_value,
)

from .base import load

__version__ = "0.1.0"
