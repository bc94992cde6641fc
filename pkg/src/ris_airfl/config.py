"""System parameters, geometry, unit conversion and the shipped profiles."""
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import InvalidInputError

PERFECT = "perfect"
IMPERFECT = "imperfect"
REGIMES = (PERFECT, IMPERFECT)


def db_to_linear(x_db):
    """10^(x/10). Used for dB and dBm alike (dBm maps to milliwatts)."""
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0) if np.ndim(x_db) else 10.0 ** (float(x_db) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.maximum(x, 1e-300))


@dataclass
class SystemConfig:
    """Dimensions, limits and iteration budgets (all powers linear, mW).

    ``p_gap`` is the minimum SIC power gap under perfect CSI and
    ``p_gap_imperfect`` the one used by the robust design.
    """

    K: int = 3
    Nt: int = 2
    Nr: int = 8
    M: int = 16
    p_max: float = 1000.0
    gamma_min: float = 413.9
    p_gap: float = 10.0
    p_gap_imperfect: float = 50.1
    sigma2_n: float = 1e-8
    alpha: float = 1.0
    T0: int = 30
    T1: int = 30
    T2: int = 20
    T3: int = 20
    eps0: float = 1e-4
    eps1: float = 1e-6
    eps2: float = 1e-5
    eps3: float = 1e-5
    # ||f||^2 is capped at f_norm_margin * p_gap / (gamma_min * sigma2_n); see optimizer.beamformers
    f_norm_margin: float = 10.0
    feas_tol: float = 1e-7
    opt_tol: float = 1e-6

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("K", "Nt", "Nr"):
            if int(getattr(self, name)) < 1:
                raise InvalidInputError(f"{name} must be >= 1")
        if int(self.M) < 0:
            raise InvalidInputError("M must be >= 0")
        for name in ("p_max", "gamma_min", "p_gap", "p_gap_imperfect", "sigma2_n", "alpha",
                     "eps0", "eps1", "eps2", "eps3", "f_norm_margin", "feas_tol", "opt_tol"):
            val = float(getattr(self, name))
            if not np.isfinite(val) or val <= 0:
                raise InvalidInputError(f"{name} must be finite and > 0, got {val}")
        for name in ("T0", "T1", "T2", "T3"):
            if int(getattr(self, name)) < 0:
                raise InvalidInputError(f"{name} must be >= 0")

    def gap_for(self, regime):
        if regime == PERFECT:
            return self.p_gap
        if regime == IMPERFECT:
            return self.p_gap_imperfect
        raise InvalidInputError(f"unknown regime {regime!r}")

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class SystemGeometry:
    """Node positions (m) and large-scale fading parameters.

    ``rician_db = 0`` gives Rayleigh fading on the device-BS links.
    """

    bs_position: np.ndarray
    ris_position: np.ndarray
    device_positions: np.ndarray
    c0: float = 1.0
    nu_db: float = 3.2
    nu_dr: float = 2.6
    nu_rb: float = 2.2
    rician_db: float = 2.0
    rician_dr: float = 10.0
    rician_rb: float = 10.0

    def __post_init__(self):
        self.bs_position = np.asarray(self.bs_position, dtype=float).reshape(3)
        self.ris_position = np.asarray(self.ris_position, dtype=float).reshape(3)
        self.device_positions = np.asarray(self.device_positions, dtype=float).reshape(-1, 3)
        self.validate()

    @property
    def K(self):
        return self.device_positions.shape[0]

    def validate(self):
        for arr in (self.bs_position, self.ris_position, self.device_positions):
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError("positions must be finite")
        for name in ("nu_db", "nu_dr", "nu_rb"):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0:
                raise InvalidInputError(f"{name} must be > 0")
        for name in ("rician_db", "rician_dr", "rician_rb"):
            val = getattr(self, name)
            if not np.isfinite(val) or val < 0:
                raise InvalidInputError(f"{name} must be >= 0")
        if not np.isfinite(self.c0) or self.c0 <= 0:
            raise InvalidInputError("c0 must be > 0")


TABLE2_DB = {
    "gamma_min_db": 26.17,
    "p_max_dbm": 30.0,
    "p_gap_dbm": 10.0,
    "p_gap_imperfect_dbm": 17.0,
    "sigma2_n_dbm": -80.0,
    "c0_db": 0.0,
    "nmse": 0.1,
}


def table2_config(**overrides):
    """K=3, Nt=2, Nr=16, M=40 with the dB values converted once."""
    base = dict(
        K=3, Nt=2, Nr=16, M=40,
        p_max=db_to_linear(TABLE2_DB["p_max_dbm"]),
        gamma_min=db_to_linear(TABLE2_DB["gamma_min_db"]),
        p_gap=db_to_linear(TABLE2_DB["p_gap_dbm"]),
        p_gap_imperfect=db_to_linear(TABLE2_DB["p_gap_imperfect_dbm"]),
        sigma2_n=db_to_linear(TABLE2_DB["sigma2_n_dbm"]),
        alpha=1.0,
    )
    base.update(overrides)
    return SystemConfig(**base)


def desk_config(**overrides):
    """Reference-profile limits at desk size: K=3, Nt=2, Nr=8, M=16."""
    base = dict(Nr=8, M=16)
    base.update(overrides)
    return table2_config(**base)


PROFILES = {"desk": desk_config, "table2": table2_config}


def sample_geometry(K, seed, scenario="rician", area=100.0, **overrides):
    """Devices uniform on the ``area`` x ``area`` square at height 0.

    ``scenario`` is ``"rician"`` (device-BS Rician factor 2) or ``"rayleigh"``
    (blocked LoS, factor 0).
    """
    if scenario not in ("rician", "rayleigh"):
        raise InvalidInputError(f"unknown fading scenario {scenario!r}")
    rng = np.random.default_rng(seed)
    xy = rng.uniform(0.0, area, size=(int(K), 2))
    devices = np.column_stack([xy, np.zeros(int(K))])
    params = dict(
        bs_position=(0.0, 0.0, 25.0),
        ris_position=(20.0, 20.0, 20.0),
        device_positions=devices,
        c0=db_to_linear(TABLE2_DB["c0_db"]),
        rician_db=2.0 if scenario == "rician" else 0.0,
    )
    params.update(overrides)
    return SystemGeometry(**params)


@dataclass
class SolverDefaults:
    """Inner-solver tolerances (two orders tighter than the AO tolerances)."""

    feas_tol: float = 1e-7
    opt_tol: float = 1e-6
    max_iter: int = 500
    extra: dict = field(default_factory=dict)
