"""Joint power allocation and user grouping for downlink cell-free massive MIMO."""

from .scenario import (
    InvalidInput,
    QosTargets,
    RadioConfig,
    Scenario,
    generate_scenario,
    noise_power_w,
    path_loss_db,
    sample_qos,
)
from .channel import Grouping, estimation_variance, pilot_length
from .beamform import MRT, ZF, BeamformStats, gamma_targets, mrt_stats, sinr, zf_stats
from .primal import PowerAllocation, PrimalOutcome, lagrangian, lagrangian_infeasible, solve_power
from .master import EBSA, GFSA, Cut, LoopGraph, build_graph, ebsa, gbma, gfsa
from .gbd import GbdConfig, GbdTrace, JointSolution, gpga, solve_fixed_grouping
from .baselines import (
    brute_force_joint,
    gale_shapley_grouping,
    metrics,
    no_grouping_solution,
    random_grouping,
)

__version__ = "0.1.0"
