import numpy as np
import pytest

from ris_airfl.channel import ChannelRealization
from ris_airfl.config import SystemConfig
from ris_airfl.metrics import BeamformerState


def cn(rng, shape, var=1.0):
    return np.sqrt(var / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def unit_channels(seed, K=3, Nt=2, Nr=4, M=6):
    rng = np.random.default_rng(seed)
    return ChannelRealization(cn(rng, (K, Nr, Nt)), cn(rng, (K, M, Nt)), cn(rng, (M, Nr)) / np.sqrt(M))


def random_state(seed, K=3, Nt=2, Nr=4, M=6):
    rng = np.random.default_rng(seed + 1000)
    return BeamformerState(cn(rng, Nr), cn(rng, Nr), cn(rng, (K, Nt)), rng.uniform(0, 2 * np.pi, M))


def easy_config(K=3, Nt=2, Nr=4, M=6, **kw):
    """Unit-scale system with loose targets (always feasible in practice)."""
    base = dict(K=K, Nt=Nt, Nr=Nr, M=M, p_max=10.0, gamma_min=2.0, p_gap=0.05, p_gap_imperfect=0.05,
                sigma2_n=0.1, T0=5)
    base.update(kw)
    return SystemConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one summary line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
