"""What channel-estimation error does to the SIC design.

For a few seeds, designs on the estimate as if it were exact (naive) and
audits the result with the average SINR that accounts for the error
statistics, then tries the robust design directly.
Usage: python demos/imperfect_csi.py [iota]
"""
import sys

import numpy as np

from ris_airfl import IMPERFECT, PERFECT, desk_config, sample_channels, sample_geometry
from ris_airfl.channel import calibrate_error_model, sample_estimate
from ris_airfl.errors import InfeasibleInstanceError
from ris_airfl.metrics import order_devices
from ris_airfl.optimizer import constraint_values, initialize_feasible, make_context, run_algorithm


def audit(state, est, cfg, regime):
    ctx = make_context(est, cfg, regime)
    order = order_devices(ctx.H(state.v))
    return constraint_values(state.permuted(order), ctx.permuted(order))


def main(iota=0.1):
    cfg = desk_config(T0=5)
    for seed in range(4):
        truth = sample_channels(sample_geometry(cfg.K, seed), cfg, seed)
        est = sample_estimate(truth, calibrate_error_model(truth, iota), seed)
        line = f"seed {seed}:"
        try:
            s, _ = run_algorithm(initialize_feasible(est, cfg, PERFECT, seed), est, cfg, PERFECT)
            sinr = audit(s, est, cfg, IMPERFECT)["sinr"]
            line += f" naive design, average SINR {np.round(sinr, 2)} vs target {cfg.gamma_min:.1f};"
        except InfeasibleInstanceError:
            line += " naive design infeasible;"
        try:
            s, _ = run_algorithm(initialize_feasible(est, cfg, IMPERFECT, seed), est, cfg, IMPERFECT)
            line += f" robust MSE {audit(s, est, cfg, IMPERFECT)['mse']:.4g}"
        except InfeasibleInstanceError as exc:
            line += f" robust design infeasible ({exc.diagnostic['family']})"
        print(line)


if __name__ == "__main__":
    main(float(sys.argv[1]) if len(sys.argv) > 1 else 0.1)
