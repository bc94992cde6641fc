"""MSE, SINR and power-gap evaluations under perfect and imperfect CSI.

All functions assume the devices are already in SIC order (index 0 is
decoded first). Transmit beamformers are stacked as ``a`` of shape (K, Nt),
effective channels as ``H`` of shape (K, Nr, Nt).
"""
from dataclasses import dataclass

import numpy as np

from .channel import ChannelEstimate, effective_channel
from .errors import DegenerateInputError, InvalidInputError


@dataclass
class BeamformerState:
    b: np.ndarray
    f: np.ndarray
    a: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=complex).reshape(-1)
        self.f = np.asarray(self.f, dtype=complex).reshape(-1)
        self.a = np.atleast_2d(np.asarray(self.a, dtype=complex))
        self.v = np.asarray(self.v, dtype=float).reshape(-1)
        if self.b.shape != self.f.shape:
            raise InvalidInputError("b and f must have the same length Nr")
        for name in ("b", "f", "a", "v"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidInputError(f"{name} must be finite")

    @property
    def K(self):
        return self.a.shape[0]

    def copy(self, **changes):
        fields = dict(b=self.b.copy(), f=self.f.copy(), a=self.a.copy(), v=self.v.copy())
        fields.update(changes)
        return BeamformerState(**fields)

    def permuted(self, order):
        return self.copy(a=self.a[np.asarray(order, dtype=int)])

    def wrapped(self):
        return self.copy(v=np.mod(self.v, 2 * np.pi))

    def transmit_powers(self):
        return np.sum(np.abs(self.a) ** 2, axis=1)

    def to_dict(self):
        return {
            "b": [[z.real, z.imag] for z in self.b],
            "f": [[z.real, z.imag] for z in self.f],
            "a": [[[z.real, z.imag] for z in row] for row in self.a],
            "v": self.v.tolist(),
        }


def _check(vec, a, H):
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    H = np.asarray(H, dtype=complex)
    vec = np.asarray(vec, dtype=complex).reshape(-1)
    if H.ndim != 3 or a.shape != (H.shape[0], H.shape[2]) or vec.size != H.shape[1]:
        raise InvalidInputError(f"inconsistent shapes: beamformer {vec.shape}, a {a.shape}, H {H.shape}")
    return vec, a, H


def received_gains(vec, a, H):
    """c_k = vec^H H_k a_k for each device."""
    vec, a, H = _check(vec, a, H)
    return np.einsum("r,krt,kt->k", vec.conj(), H, a)


def mse_perfect(b, a, H, sigma2_n):
    """sum_k |b^H H_k a_k - 1|^2 + sigma2 ||b||^2."""
    c = received_gains(b, a, H)
    return float(np.sum(np.abs(c - 1) ** 2) + sigma2_n * np.vdot(b, b).real)


def _sinr_terms(f, a, H, k):
    p = np.abs(received_gains(f, a, H)) ** 2
    K = p.size
    if not 0 <= k < K:
        raise InvalidInputError(f"device index {k} out of range for K={K}")
    return p[k], float(np.sum(p[k + 1:]))


def sinr_perfect(f, a, H, sigma2_n, k):
    """SINR of device k after cancelling devices 0..k-1."""
    num, interf = _sinr_terms(f, a, H, k)
    den = interf + sigma2_n * np.vdot(f, f).real
    if den <= 0:
        if num == 0 and sigma2_n > 0:
            return 0.0
        if num == 0:
            raise DegenerateInputError("SINR undefined: zero signal and zero interference-plus-noise")
        raise DegenerateInputError("SINR undefined: zero interference-plus-noise power")
    return float(num / den)


def power_gaps(f, a, H):
    """|f^H H_k a_k|^2 - sum_{k'>k} |f^H H_k' a_k'|^2 for k = 0..K-2."""
    p = np.abs(received_gains(f, a, H)) ** 2
    tail = np.cumsum(p[::-1])[::-1]
    return p[:-1] - tail[1:]


def interference_matrix(a_k, estimate: ChannelEstimate, k):
    """J_k: covariance of the error term Delta H_k a_k (expectation over errors)."""
    est, em = estimate.est, estimate.error_model
    a_k = np.asarray(a_k, dtype=complex).reshape(-1)
    if a_k.size != est.Nt:
        raise InvalidInputError(f"a_k has {a_k.size} entries, expected Nt={est.Nt}")
    na2 = np.vdot(a_k, a_k).real
    hr_a = est.h_ris[k] @ a_k
    scal = em.sigma2_d[k] * na2 + em.sigma2_g * np.vdot(hr_a, hr_a).real \
        + est.M * em.sigma2_r[k] * em.sigma2_g * na2
    J = scal * np.eye(est.Nr, dtype=complex)
    if est.M:
        J = J + em.sigma2_r[k] * na2 * (est.g.conj().T @ est.g)
    return J


def interference_matrices(a, estimate: ChannelEstimate):
    a = np.atleast_2d(a)
    return np.stack([interference_matrix(a[k], estimate, k) for k in range(estimate.K)])


def mse_imperfect(b, a, estimate: ChannelEstimate, sigma2_n, v):
    """Average MSE over estimation errors given the hatted channels at phases v."""
    Hh = effective_channel(estimate.est, v)
    J = interference_matrices(a, estimate)
    b = np.asarray(b, dtype=complex)
    return mse_perfect(b, a, Hh, sigma2_n) + float(np.einsum("r,krs,s->", b.conj(), J, b).real)


def sinr_imperfect(f, a, estimate: ChannelEstimate, sigma2_n, k, v):
    """Average SINR: the denominator adds sum over all k' of f^H J_k' f."""
    Hh = effective_channel(estimate.est, v)
    num, interf = _sinr_terms(f, a, Hh, k)
    J = interference_matrices(a, estimate)
    f = np.asarray(f, dtype=complex)
    den = interf + float(np.einsum("r,krs,s->", f.conj(), J, f).real) + sigma2_n * np.vdot(f, f).real
    if den <= 0:
        if num == 0 and sigma2_n > 0:
            return 0.0
        raise DegenerateInputError("SINR undefined: zero interference-plus-noise power")
    return float(num / den)


def sinr_imperfect_denominator(f, a, estimate, sigma2_n, k, v):
    Hh = effective_channel(estimate.est, v)
    _, interf = _sinr_terms(f, a, Hh, k)
    J = interference_matrices(a, estimate)
    f = np.asarray(f, dtype=complex)
    return interf + float(np.einsum("r,krs,s->", f.conj(), J, f).real) + sigma2_n * np.vdot(f, f).real


def order_devices(channels):
    """0-based permutation sorting ||H_k||_F^2 descending, ties by index."""
    H = np.asarray(channels)
    norms = np.sum(np.abs(H.reshape(H.shape[0], -1)) ** 2, axis=1)
    return np.argsort(-norms, kind="stable")


def state_metrics(state: BeamformerState, channels, sigma2_n, estimate=None):
    """Summary dict (MSE, SINRs, gaps) in the regime implied by ``estimate``.

    ``channels`` is the ChannelRealization used for perfect CSI; when
    ``estimate`` is given the robust (averaged) metrics are used instead.
    """
    K = state.K
    if estimate is None:
        H = effective_channel(channels, state.v)
        mse = mse_perfect(state.b, state.a, H, sigma2_n)
        sinr = [sinr_perfect(state.f, state.a, H, sigma2_n, k) for k in range(K)]
        gaps = power_gaps(state.f, state.a, H)
    else:
        H = effective_channel(estimate.est, state.v)
        mse = mse_imperfect(state.b, state.a, estimate, sigma2_n, state.v)
        sinr = [sinr_imperfect(state.f, state.a, estimate, sigma2_n, k, state.v) for k in range(K)]
        gaps = power_gaps(state.f, state.a, H)
    return {
        "mse": mse,
        "sinr": np.asarray(sinr),
        "gaps": np.asarray(gaps),
        "min_sinr": float(np.min(sinr)),
        "min_gap": float(np.min(gaps)) if len(gaps) else float("inf"),
        "powers": state.transmit_powers(),
    }
