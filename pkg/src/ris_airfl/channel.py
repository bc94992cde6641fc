"""Channel realizations, effective channels and imperfect-CSI estimates.

Shapes (device axis first):

    h_direct  (K, Nr, Nt)   device -> BS
    h_ris     (K, M, Nt)    device -> RIS
    g         (M, Nr)       so that G^H (Nr x M) maps RIS -> BS

The effective channel is H_k = H_dk + G^H diag(e^{jv}) H_rk.
"""
from dataclasses import dataclass, field

import numpy as np

from .config import SystemConfig, SystemGeometry
from .errors import InvalidInputError, UnsupportedRegimeError


def _finite(x):
    return bool(np.all(np.isfinite(x)))


@dataclass
class ChannelRealization:
    h_direct: np.ndarray
    h_ris: np.ndarray
    g: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.h_direct = np.asarray(self.h_direct, dtype=complex)
        self.h_ris = np.asarray(self.h_ris, dtype=complex)
        self.g = np.asarray(self.g, dtype=complex)
        if self.h_direct.ndim != 3 or self.h_ris.ndim != 3 or self.g.ndim != 2:
            raise InvalidInputError("expected h_direct (K,Nr,Nt), h_ris (K,M,Nt), g (M,Nr)")
        K, Nr, Nt = self.h_direct.shape
        if self.h_ris.shape[0] != K or self.h_ris.shape[2] != Nt:
            raise InvalidInputError(f"h_ris shape {self.h_ris.shape} inconsistent with h_direct {self.h_direct.shape}")
        if self.g.shape != (self.h_ris.shape[1], Nr):
            raise InvalidInputError(f"g shape {self.g.shape} != (M, Nr) = {(self.h_ris.shape[1], Nr)}")
        if not (_finite(self.h_direct) and _finite(self.h_ris) and _finite(self.g)):
            raise InvalidInputError("channel entries must be finite")

    @property
    def K(self):
        return self.h_direct.shape[0]

    @property
    def Nr(self):
        return self.h_direct.shape[1]

    @property
    def Nt(self):
        return self.h_direct.shape[2]

    @property
    def M(self):
        return self.g.shape[0]

    def check(self, config: SystemConfig):
        want = (config.K, config.Nr, config.Nt, config.M)
        if (self.K, self.Nr, self.Nt, self.M) != want:
            raise InvalidInputError(f"channel dims (K,Nr,Nt,M)={(self.K, self.Nr, self.Nt, self.M)} != config {want}")

    def permuted(self, order):
        order = np.asarray(order, dtype=int)
        return ChannelRealization(self.h_direct[order], self.h_ris[order], self.g, dict(self.meta))

    def scaled(self, c):
        return ChannelRealization(c * self.h_direct, c * self.h_ris, c * self.g, dict(self.meta))

    def __add__(self, other):
        return ChannelRealization(self.h_direct + other.h_direct, self.h_ris + other.h_ris,
                                  self.g + other.g, dict(self.meta))

    def __sub__(self, other):
        return ChannelRealization(self.h_direct - other.h_direct, self.h_ris - other.h_ris,
                                  self.g - other.g, dict(self.meta))


@dataclass
class ErrorModel:
    """Per-entry estimation-error variances of the three link classes."""

    sigma2_d: np.ndarray
    sigma2_r: np.ndarray
    sigma2_g: float

    def __post_init__(self):
        self.sigma2_d = np.asarray(self.sigma2_d, dtype=float).reshape(-1)
        self.sigma2_r = np.asarray(self.sigma2_r, dtype=float).reshape(-1)
        self.sigma2_g = float(self.sigma2_g)
        if self.sigma2_d.shape != self.sigma2_r.shape:
            raise InvalidInputError("sigma2_d and sigma2_r must both have K entries")
        allv = np.concatenate([self.sigma2_d, self.sigma2_r, [self.sigma2_g]])
        if not _finite(allv) or np.any(allv < 0):
            raise InvalidInputError("error variances must be finite and >= 0")

    @classmethod
    def zero(cls, K):
        return cls(np.zeros(K), np.zeros(K), 0.0)

    @property
    def K(self):
        return self.sigma2_d.size

    def is_zero(self):
        return not (np.any(self.sigma2_d) or np.any(self.sigma2_r) or self.sigma2_g)

    def permuted(self, order):
        order = np.asarray(order, dtype=int)
        return ErrorModel(self.sigma2_d[order], self.sigma2_r[order], self.sigma2_g)


@dataclass
class ChannelEstimate:
    """Estimated channels plus the sampled errors (errors are for oracles only)."""

    est: ChannelRealization
    errors: ChannelRealization
    error_model: ErrorModel

    def __post_init__(self):
        if self.error_model.K != self.est.K:
            raise InvalidInputError("error model device count does not match the estimate")

    @property
    def truth(self):
        return self.est + self.errors

    @property
    def K(self):
        return self.est.K

    def permuted(self, order):
        return ChannelEstimate(self.est.permuted(order), self.errors.permuted(order),
                               self.error_model.permuted(order))

    @classmethod
    def exact(cls, truth: ChannelRealization):
        zeros = ChannelRealization(np.zeros_like(truth.h_direct), np.zeros_like(truth.h_ris),
                                   np.zeros_like(truth.g))
        return cls(truth, zeros, ErrorModel.zero(truth.K))


def pathloss(distance, nu, c0=1.0):
    """Large-scale gain c0 * d^-nu with reference distance 1 m."""
    return c0 * np.asarray(distance, dtype=float) ** (-nu)


def _steering(n, cos_angle):
    # half-wavelength ULA along the x axis
    return np.exp(1j * np.pi * np.arange(n) * cos_angle)


def los_matrix(n_rx, n_tx, tx_pos, rx_pos):
    """Rank-one unit-modulus LoS response for a tx -> rx link."""
    d = np.asarray(rx_pos, float) - np.asarray(tx_pos, float)
    u = d / np.linalg.norm(d)
    return np.outer(_steering(n_rx, -u[0]), _steering(n_tx, u[0]).conj())


def _rician(rng, n_rx, n_tx, gain, kappa, tx_pos, rx_pos):
    nlos = (rng.standard_normal((n_rx, n_tx)) + 1j * rng.standard_normal((n_rx, n_tx))) / np.sqrt(2.0)
    if kappa > 0:
        los = los_matrix(n_rx, n_tx, tx_pos, rx_pos)
        small = np.sqrt(kappa / (kappa + 1.0)) * los + np.sqrt(1.0 / (kappa + 1.0)) * nlos
    else:
        small = nlos
    return np.sqrt(gain) * small


def sample_channels(geometry: SystemGeometry, config: SystemConfig, seed) -> ChannelRealization:
    """Draw one Rician realization of every link for the given geometry."""
    geometry.validate()
    if geometry.K != config.K:
        raise InvalidInputError(f"geometry has {geometry.K} devices, config K={config.K}")
    rng = np.random.default_rng(seed)
    K, Nt, Nr, M = config.K, config.Nt, config.Nr, config.M
    bs, ris = geometry.bs_position, geometry.ris_position
    hd = np.empty((K, Nr, Nt), complex)
    hr = np.empty((K, M, Nt), complex)
    for k in range(K):
        dev = geometry.device_positions[k]
        L_db = pathloss(np.linalg.norm(bs - dev), geometry.nu_db, geometry.c0)
        L_dr = pathloss(np.linalg.norm(ris - dev), geometry.nu_dr, geometry.c0)
        hd[k] = _rician(rng, Nr, Nt, L_db, geometry.rician_db, dev, bs)
        hr[k] = _rician(rng, M, Nt, L_dr, geometry.rician_dr, dev, ris)
    L_rb = pathloss(np.linalg.norm(bs - ris), geometry.nu_rb, geometry.c0)
    # g is stored as M x Nr so that g^H is the RIS -> BS response
    g = _rician(rng, Nr, M, L_rb, geometry.rician_rb, ris, bs).conj().T
    return ChannelRealization(hd, hr, g, meta={"seed": int(seed)})


def effective_channel(realization: ChannelRealization, phases) -> np.ndarray:
    """H_k = H_dk + G^H diag(e^{jv}) H_rk for every k, shape (K, Nr, Nt)."""
    v = np.asarray(phases, dtype=float).reshape(-1)
    if v.size != realization.M:
        raise InvalidInputError(f"phase vector has {v.size} entries, expected M={realization.M}")
    if not _finite(v):
        raise InvalidInputError("phases must be finite")
    theta = np.exp(1j * v)
    gh_theta = realization.g.conj().T * theta[None, :]
    return realization.h_direct + np.einsum("rm,kmt->krt", gh_theta, realization.h_ris)


def _cgauss(rng, shape, var):
    return np.sqrt(var / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_estimate(truth: ChannelRealization, model: ErrorModel, seed) -> ChannelEstimate:
    """Draw estimation errors and return est = truth - errors."""
    if model.K != truth.K:
        raise InvalidInputError("error model device count does not match the channels")
    rng = np.random.default_rng(seed)
    K = truth.K
    ed = np.stack([_cgauss(rng, truth.h_direct.shape[1:], model.sigma2_d[k]) for k in range(K)])
    er = np.stack([_cgauss(rng, truth.h_ris.shape[1:], model.sigma2_r[k]) for k in range(K)])
    eg = _cgauss(rng, truth.g.shape, model.sigma2_g)
    errors = ChannelRealization(ed, er, eg)
    return ChannelEstimate(truth - errors, errors, model)


def _mean_power(x):
    return float(np.mean(np.abs(x) ** 2)) if x.size else 0.0


def calibrate_error_model(truth: ChannelRealization, target_nmse) -> ErrorModel:
    """Variances giving NMSE = target_nmse on every link class.

    With est = truth - err and independent err, E|est|^2 = P + s, so the
    NMSE is s / (P + s); s = P * nmse / (1 - nmse) per link.
    """
    iota = float(target_nmse)
    if not np.isfinite(iota) or iota < 0:
        raise InvalidInputError("target NMSE must be finite and >= 0")
    if iota >= 1:
        raise UnsupportedRegimeError("target NMSE must be < 1")
    s = iota / (1.0 - iota)
    sd = np.array([s * _mean_power(truth.h_direct[k]) for k in range(truth.K)])
    sr = np.array([s * _mean_power(truth.h_ris[k]) for k in range(truth.K)])
    return ErrorModel(sd, sr, s * _mean_power(truth.g))
