"""Alternating optimization over b, {a_k}, f and v, plus a feasibility-seeking
initializer."""
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import InfeasibleInstanceError, SubproblemInfeasibleError
from ..metrics import BeamformerState, order_devices
from .beamformers import dc_transmit_step, f_norm_cap, power_allocation, sca_recovery_f, update_b
from .common import blocking_family, constraint_values, is_feasible, make_context, violations
from .phase import sca_phase_shifts


@dataclass
class AoRecord:
    iteration: int
    mse: float
    min_sinr: float
    min_gap: float
    wall_time: float
    reports: dict = field(default_factory=dict)
    dc_residuals: list = field(default_factory=list)


@dataclass
class AoTrace:
    records: list = field(default_factory=list)
    order: list = None
    initial_mse: float = float("nan")
    status: str = "not-run"
    failure: str = ""
    order_consistent: bool = True

    @property
    def objective(self):
        return np.array([r.mse for r in self.records])

    @property
    def iterations(self):
        return len(self.records)

    def to_dict(self):
        return {
            "status": self.status,
            "failure": self.failure,
            "order": self.order,
            "order_consistent": self.order_consistent,
            "initial_mse": self.initial_mse,
            "records": [
                {"iteration": r.iteration, "mse": r.mse, "min_sinr": r.min_sinr, "min_gap": r.min_gap,
                 "wall_time": r.wall_time,
                 "subproblems": {k: [rep.to_dict() for rep in v] for k, v in r.reports.items()}}
                for r in self.records
            ],
        }


def _unpermute(state, order):
    inv = np.argsort(order)
    return state.permuted(inv)


def _ao_cycle(s, ctx, config, regime):
    """One b -> a -> f -> v pass in SIC order. Returns (state, reports, dc residuals)."""
    reports = {}
    s = s.copy(b=update_b(s, ctx))
    a, res, reps = dc_transmit_step(s, ctx, config, regime)
    reports["a"] = reps
    s = s.copy(a=a)
    s = s.copy(b=update_b(s, ctx))
    f, reps = sca_recovery_f(s, ctx, config, regime)
    reports["f"] = reps
    s = s.copy(f=f)
    v, reps = sca_phase_shifts(s, ctx, config, regime)
    reports["v"] = reps
    s = s.copy(v=v)
    s = s.copy(b=update_b(s, ctx))
    return s, reports, res


def run_algorithm(state0: BeamformerState, source, config, regime, tol_mode="relative"):
    """Alternating optimization (perfect or robust design).

    The SIC order is fixed from the design channels at state0.v; phase
    updates keep it valid. Stops after T0 cycles or when the MSE change
    is <= eps0 (relative to the current MSE when ``tol_mode`` is
    ``"relative"``, absolute otherwise). A failing subproblem ends the run
    with the best state so far and the reason in ``trace.failure``.
    """
    ctx0 = make_context(source, config, regime)
    trace = AoTrace()
    order = order_devices(ctx0.H(state0.v))
    trace.order = order.tolist()
    ctx = ctx0.permuted(order)
    s = state0.permuted(order)
    trace.initial_mse = constraint_values(s, ctx)["mse"]
    if config.T0 == 0:
        trace.status = "unchanged"
        return state0.copy(), trace
    if not is_feasible(s, ctx):
        trace.failure = "initial state violates constraints: %s[%d]" % blocking_family(s, ctx)[:2]
    prev = trace.initial_mse
    best = s
    trace.status = "max-iterations"
    for t in range(config.T0):
        t0 = time.perf_counter()
        try:
            s_new, reps, res = _ao_cycle(s, ctx, config, regime)
        except SubproblemInfeasibleError as exc:
            trace.status = "failed"
            trace.failure = str(exc)
            break
        vals = constraint_values(s_new, ctx)
        rec = AoRecord(t + 1, vals["mse"], float(np.min(vals["sinr"])),
                       float(np.min(vals["gaps"])) if vals["gaps"].size else float("inf"),
                       time.perf_counter() - t0, reps, res)
        trace.records.append(rec)
        s = s_new
        if vals["mse"] <= constraint_values(best, ctx)["mse"] and is_feasible(s, ctx):
            best = s
        change = abs(prev - vals["mse"])
        scale = max(abs(vals["mse"]), 1e-300) if tol_mode == "relative" else 1.0
        prev = vals["mse"]
        if change <= config.eps0 * scale:
            trace.status = "converged"
            break
    final = best if is_feasible(best, ctx) else s
    trace.order_consistent = bool(np.array_equal(order_devices(ctx.H(final.v)), np.arange(config.K)))
    return _unpermute(final.wrapped(), order), trace


# initialization ----------------------------------------------------------------

def _align_phases(ctx, k, v, iters=15):
    """Coherently align the reflected path of device k with its direct path."""
    ch = ctx.channels
    for _ in range(iters):
        Hk = ctx.H(v)[k]
        U, S, Vh = np.linalg.svd(Hk)
        fu, au = U[:, 0], Vh[0].conj()
        cd = np.vdot(fu, ch.h_direct[k] @ au)
        t = np.conj(ch.g @ fu) * (ch.h_ris[k] @ au)
        v = np.mod(np.angle(cd) - np.angle(t), 2 * np.pi)
    return v, float(np.linalg.norm(ctx.H(v)[k], 2) ** 2)


def _start_phases(ctx, rng):
    cfg = ctx.config
    v0 = rng.uniform(0, 2 * np.pi, cfg.M)
    if cfg.M == 0:
        return v0
    best_v, best_gain = v0, -1.0
    for k in range(cfg.K):
        v, gain = _align_phases(ctx, k, v0.copy())
        first = order_devices(ctx.H(v))[0] == k
        if first and gain > best_gain:
            best_v, best_gain = v, gain
    return best_v


def _restore(s, ctx, config, regime, cycles):
    for _ in range(cycles):
        if is_feasible(s, ctx):
            return s
        f, _ = sca_recovery_f(s, ctx, config, regime)
        s = s.copy(f=f)
        s = s.copy(a=power_allocation(s, ctx))
        if config.M:
            v, _ = sca_phase_shifts(s, ctx, config, regime, restore=True)
            s = s.copy(v=v)
        s = s.copy(b=update_b(s, ctx))
    return s


def initialize_feasible(source, config, regime, seed, cycles=8, homotopy_steps=10, max_halvings=30):
    """Feasible starting state for run_algorithm.

    Random phases are first refined by aligning the reflected path of the
    most promising device; f starts as that device's dominant receive
    direction and the a_k along matched filters with LP-chosen powers.
    Repair cycles (f SCA, power LP, min-max phase SCA) follow. If the
    targets are still missed, gamma_min and p_gap are halved until the
    state is feasible and then restored in ``homotopy_steps`` geometric
    steps, each followed by repair cycles and one AO cycle.
    """
    ctx0 = make_context(source, config, regime)
    rng = np.random.default_rng(seed)
    v = _start_phases(ctx0, rng)
    order = order_devices(ctx0.H(v))
    ctx = ctx0.permuted(order)
    H = ctx.H(v)
    U, _, _ = np.linalg.svd(H[0])
    f = U[:, 0] * np.sqrt(f_norm_cap(np.zeros(config.Nr), ctx) / (1 + 1e-3))
    Vh = [np.linalg.svd(H[k])[2][0].conj() for k in range(config.K)]
    a = np.sqrt(config.p_max) * np.array(Vh)
    s = BeamformerState(np.zeros(config.Nr), f, a, v)
    s = s.copy(a=power_allocation(s, ctx))
    s = s.copy(b=update_b(s, ctx))
    s = _restore(s, ctx, config, regime, cycles)
    if is_feasible(s, ctx):
        return _unpermute(s.wrapped(), order)

    scale, halvings = 1.0, 0
    while halvings < max_halvings:
        scale *= 0.5
        halvings += 1
        relaxed = ctx.with_targets(ctx.gamma * scale, ctx.p_gap * scale)
        s = _restore(s, relaxed, config, regime, 2)
        if is_feasible(s, relaxed):
            break
    else:
        fam = blocking_family(s, ctx)
        raise InfeasibleInstanceError(
            f"no feasible start even with targets relaxed by 2^-{max_halvings}",
            {"family": fam[0], "index": fam[1], "shortfall": fam[2], "relaxation": scale})

    step_cfg = config.replace(T0=1)
    for i in range(1, homotopy_steps + 1):
        sc = scale ** (1 - i / homotopy_steps)
        cur = ctx.with_targets(ctx.gamma * sc, ctx.p_gap * sc)
        s = _restore(s, cur, config, regime, cycles)
        if not is_feasible(s, cur):
            break
        try:
            s2, _, _ = _ao_cycle(s, cur, step_cfg, regime)
            if is_feasible(s2, cur):
                s = s2
        except SubproblemInfeasibleError:
            pass
    if not is_feasible(s, ctx):
        fam = blocking_family(s, ctx)
        v = violations(s, ctx)
        raise InfeasibleInstanceError(
            f"infeasible instance: {fam[0]}[{fam[1]}] short by {fam[2]:.3g} (relative)",
            {"family": fam[0], "index": int(order[fam[1]]) if fam[0] != "power" else fam[1],
             "shortfall": fam[2], "relaxation_reached": scale,
             "sinr_shortfall": v["sinr"].tolist(), "gap_shortfall": v["gap"].tolist()})
    return _unpermute(s.wrapped(), order)
