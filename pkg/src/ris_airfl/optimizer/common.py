"""Shared plumbing: which channels a design sees, and constraint audits."""
from dataclasses import dataclass

import numpy as np

from ..channel import ChannelEstimate, ChannelRealization, effective_channel
from ..config import IMPERFECT, PERFECT, SystemConfig
from ..errors import InvalidInputError
from ..metrics import BeamformerState, interference_matrices, power_gaps, received_gains


@dataclass
class DesignContext:
    """Channels and limits seen by one design run.

    ``channels`` are the true channels under perfect CSI and the estimated
    ones under imperfect CSI; ``estimate`` is set only in the imperfect
    regime and supplies the J_k terms. ``gamma`` and ``p_gap`` default to
    the config values but may be relaxed during initialization.
    """

    channels: ChannelRealization
    config: SystemConfig
    regime: str
    estimate: ChannelEstimate = None
    gamma: float = None
    p_gap: float = None

    def __post_init__(self):
        if self.regime not in (PERFECT, IMPERFECT):
            raise InvalidInputError(f"unknown regime {self.regime!r}")
        self.channels.check(self.config)
        if self.gamma is None:
            self.gamma = self.config.gamma_min
        if self.p_gap is None:
            self.p_gap = self.config.gap_for(self.regime)

    @property
    def robust(self):
        return self.regime == IMPERFECT

    @property
    def sigma2(self):
        return self.config.sigma2_n

    def H(self, v):
        return effective_channel(self.channels, v)

    def J(self, a):
        if not self.robust:
            K, Nr = self.config.K, self.config.Nr
            return np.zeros((K, Nr, Nr), complex)
        return interference_matrices(a, self.estimate)

    def permuted(self, order):
        est = self.estimate.permuted(order) if self.estimate is not None else None
        return DesignContext(self.channels.permuted(order), self.config, self.regime, est,
                             self.gamma, self.p_gap)

    def with_targets(self, gamma, p_gap):
        return DesignContext(self.channels, self.config, self.regime, self.estimate, gamma, p_gap)


def make_context(source, config, regime, gamma=None, p_gap=None):
    """Build a DesignContext from a ChannelRealization or a ChannelEstimate.

    Under perfect CSI an estimate is used as if it were exact (the naive
    design); under imperfect CSI a bare realization means zero error.
    """
    if isinstance(source, DesignContext):
        return source
    if isinstance(source, ChannelEstimate):
        if regime == PERFECT:
            return DesignContext(source.est, config, regime, None, gamma, p_gap)
        return DesignContext(source.est, config, regime, source, gamma, p_gap)
    if isinstance(source, ChannelRealization):
        est = ChannelEstimate.exact(source) if regime == IMPERFECT else None
        return DesignContext(source, config, regime, est, gamma, p_gap)
    raise InvalidInputError(f"expected channels or an estimate, got {type(source).__name__}")


def constraint_values(state: BeamformerState, ctx: DesignContext):
    """SINR (regime metric), power gaps, powers and MSE of a state in SIC order."""
    H = ctx.H(state.v)
    a, b, f = state.a, state.b, state.f
    J = ctx.J(a)
    pb = np.abs(received_gains(b, a, H) - 1) ** 2
    mse = float(pb.sum() + ctx.sigma2 * np.vdot(b, b).real + np.einsum("r,krs,s->", b.conj(), J, b).real)
    p = np.abs(received_gains(f, a, H)) ** 2
    tail = np.concatenate([np.cumsum(p[::-1])[::-1][1:], [0.0]])
    noise = ctx.sigma2 * np.vdot(f, f).real + float(np.einsum("r,krs,s->", f.conj(), J, f).real)
    with np.errstate(divide="ignore", invalid="ignore"):
        sinr = p / (tail + noise)
    return {
        "mse": mse,
        "sinr": sinr,
        "gaps": power_gaps(f, a, H),
        "powers": state.transmit_powers(),
        "received": p,
    }


def violations(state, ctx, rel=1e-6):
    """Relative shortfalls per constraint family (all <= 0 means feasible)."""
    vals = constraint_values(state, ctx)
    sinr_short = 1.0 - vals["sinr"] / ctx.gamma
    gap_short = 1.0 - vals["gaps"] / ctx.p_gap if ctx.config.K > 1 else np.zeros(0)
    power_over = vals["powers"] / ctx.config.p_max - 1.0
    return {"sinr": sinr_short, "gap": gap_short, "power": power_over,
            "feasible": bool(np.all(sinr_short <= rel) and np.all(gap_short <= rel)
                             and np.all(power_over <= 1e-9))}


def is_feasible(state, ctx, rel=1e-6):
    return violations(state, ctx, rel)["feasible"]


def blocking_family(state, ctx):
    """Name and index of the most violated constraint."""
    v = violations(state, ctx)
    worst = ("sinr", int(np.argmax(v["sinr"])), float(np.max(v["sinr"])))
    if v["gap"].size and np.max(v["gap"]) > worst[2]:
        worst = ("gap", int(np.argmax(v["gap"])), float(np.max(v["gap"])))
    if np.max(v["power"]) > worst[2]:
        worst = ("power", int(np.argmax(v["power"])), float(np.max(v["power"])))
    return worst
