"""RIS-aided over-the-air federated learning: channel models, metrics,
convex subproblem solvers, alternating beamforming/phase optimization and
a symbol-level learning simulator."""
from .airflsim import (ModelVector, OptimizedProvider, PreprocessState, SicOutcome, aircomp_round, ideal_provider,
                       postprocess, preprocess, run_federated)
from .channel import (ChannelEstimate, ChannelRealization, ErrorModel, calibrate_error_model, effective_channel,
                      sample_channels, sample_estimate)
from .config import (IMPERFECT, PERFECT, PROFILES, SystemConfig, SystemGeometry, db_to_linear, desk_config,
                     linear_to_db, sample_geometry, table2_config)
from .convex import BlockSdpProblem, QcqpProblem, SolverReport, solve_block_sdp, solve_qcqp
from .errors import (DegenerateInputError, InfeasibleInstanceError, InvalidInputError, SubproblemInfeasibleError,
                     UnsupportedRegimeError)
from .metrics import (BeamformerState, interference_matrix, mse_imperfect, mse_perfect, order_devices, power_gaps,
                      sinr_imperfect, sinr_perfect)
from .optimizer import (AoTrace, PhaseProblemAssembly, assemble_phase_problem, assemble_transmit_sdp,
                        dc_transmit_step, initialize_feasible, curvature_xi, phase_gradient, run_algorithm,
                        sca_phase_shifts, sca_recovery_f, update_b_imperfect, update_b_perfect)

__version__ = "0.1.0"
