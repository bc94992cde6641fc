"""Dense solvers for the convex subproblems."""
from .qcqp import MIN_BETA, MIN_Q0, QcqpProblem, Quadratic, solve_qcqp
from .report import INFEASIBLE, ITERATION_LIMIT, OPTIMAL, SolverReport
from .sdp import EMBEDDING, BlockSdpProblem, SdpInequality, solve_block_sdp
