"""Subproblem updates and the alternating-optimization driver."""
from .ao import AoRecord, AoTrace, initialize_feasible, run_algorithm
from .beamformers import (assemble_transmit_sdp, dc_transmit_step, power_allocation, sca_recovery_f,
                          update_b_imperfect, update_b_perfect)
from .common import DesignContext, constraint_values, is_feasible, make_context, violations
from .phase import (CurvatureBound, PhaseProblemAssembly, assemble_phase_problem, curvature_xi,
                    phase_gradient, sca_phase_shifts)
