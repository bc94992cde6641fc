import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ris_airfl.airflsim import (ModelVector, OptimizedProvider, aircomp_round, ideal_provider, local_update,
                                make_task, postprocess, preprocess, run_federated)
from ris_airfl.channel import ChannelRealization, effective_channel
from ris_airfl.config import PERFECT
from ris_airfl.errors import InfeasibleInstanceError, InvalidInputError
from ris_airfl.metrics import BeamformerState, mse_perfect, order_devices, sinr_perfect
from ris_airfl.optimizer import initialize_feasible, make_context
from ris_airfl.optimizer.beamformers import update_b

from conftest import easy_config, random_state, unit_channels


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), K=st.integers(1, 4), d=st.integers(1, 40))
def test_exact_aggregation_round_trip(seed, K, d):
    rng = np.random.default_rng(seed)
    models = [rng.standard_normal(d) * rng.uniform(0.1, 10) + rng.uniform(-5, 5) for _ in range(K)]
    symbols, pre = preprocess(models)
    assert symbols.shape == (K, (d + 1) // 2) and pre.padded == bool(d % 2)
    out = postprocess(symbols.sum(axis=0), pre, K).weights
    avg = np.mean(models, axis=0)
    assert np.allclose(out, avg, rtol=1e-10, atol=1e-10 * np.abs(avg).max())


def test_single_device_identity_round_trip():
    w = np.random.default_rng(0).standard_normal(201)
    symbols, pre = preprocess([ModelVector(w)])
    assert np.allclose(postprocess(symbols[0], pre, 1).weights, w, rtol=1e-10)


def test_constant_model_hits_scale_floor():
    symbols, pre = preprocess([np.full(10, 3.0)])
    assert not np.any(symbols) and pre.scales[0] == 1e-12
    assert np.allclose(postprocess(symbols[0], pre, 1).weights, 3.0)


def test_per_device_unit_variance():
    rng = np.random.default_rng(1)
    models = [rng.standard_normal(1000) * s for s in (0.5, 1.0, 3.0)]
    symbols, _ = preprocess(models, shared_scale=False)
    for s in symbols:
        assert 0.99 <= np.mean(np.abs(s) ** 2) <= 1.01
    symbols, pre = preprocess(models)
    assert np.isclose(np.mean(np.abs(symbols) ** 2), 1.0)


def test_postprocess_linearity_bound_and_mismatch():
    rng = np.random.default_rng(2)
    models = [rng.standard_normal(50) for _ in range(3)]
    symbols, pre = preprocess(models)
    eps = 1e-3 * (rng.standard_normal(25) + 1j * rng.standard_normal(25))
    err = postprocess(symbols.sum(0) + eps, pre, 3).weights - np.mean(models, axis=0)
    assert np.linalg.norm(err) <= pre.scale * np.linalg.norm(eps) / 3 + 1e-12
    with pytest.raises(InvalidInputError):
        postprocess(np.zeros(3), pre, 3)
    with pytest.raises(InvalidInputError):
        preprocess([np.zeros(3), np.zeros(4)])


def test_noiseless_single_device():
    ch = unit_channels(0, K=1)
    s = random_state(0, K=1)
    sym = np.exp(1j * np.arange(8))[None, :]
    s_b, sic = aircomp_round(sym, s, ch, 0.0, seed=0)
    H = effective_channel(ch, s.v)
    assert np.allclose(sic.symbols[0], sym[0], rtol=1e-12)
    assert np.allclose(s_b, np.vdot(s.b, H[0] @ s.a[0]) * sym[0], rtol=1e-12)
    assert sic.order.tolist() == [0] and sic.success.all()


def test_decode_order_and_permutation():
    ch = unit_channels(3)
    s = random_state(3)
    _, sic = aircomp_round(np.ones((3, 4)), s, ch, 0.1, seed=1)
    assert sorted(sic.order.tolist()) == [0, 1, 2]
    assert sic.order.tolist() == order_devices(effective_channel(ch, s.v)).tolist()


def _feasible_easy(seed):
    cfg = easy_config()
    ch = unit_channels(seed)
    s = initialize_feasible(ch, cfg, PERFECT, seed)
    return cfg, ch, s


def test_gap_violation_flags_failure():
    cfg, ch, s = _feasible_easy(0)
    H = effective_channel(ch, s.v)
    order = order_devices(H)
    _, ok = aircomp_round(np.ones((3, 4)), s, ch, cfg.sigma2_n, seed=0, gamma_min=cfg.gamma_min)
    assert ok.success.all()
    a = s.a.copy()
    a[order[-1]] *= 100.0
    bad = s.copy(a=a)
    assert order_devices(effective_channel(ch, bad.v)).tolist() == order.tolist()
    _, sic = aircomp_round(np.ones((3, 4)), bad, ch, cfg.sigma2_n, seed=0, gamma_min=cfg.gamma_min)
    assert not sic.success.all()


def test_aggregation_mse_matches_closed_form():
    cfg, ch, s = _feasible_easy(1)
    rng = np.random.default_rng(5)
    L = 10_000
    sym = (rng.standard_normal((3, L)) + 1j * rng.standard_normal((3, L))) / np.sqrt(2)
    s_b, _ = aircomp_round(sym, s, ch, cfg.sigma2_n, seed=7)
    err = np.abs(s_b - sym.sum(0)) ** 2
    closed = mse_perfect(s.b, s.a, effective_channel(ch, s.v), cfg.sigma2_n)
    assert abs(err.mean() - closed) <= 3 * err.std(ddof=1) / np.sqrt(L)


def test_noise_increases_aggregation_error():
    cfg, ch, s = _feasible_easy(2)
    rng = np.random.default_rng(0)
    sym = (rng.standard_normal((3, 4000)) + 1j * rng.standard_normal((3, 4000))) / np.sqrt(2)
    errs = []
    for s2 in (0.01, 1.0, 100.0):
        s_b, _ = aircomp_round(sym, s, ch, s2, seed=3)
        errs.append(np.mean(np.abs(s_b - sym.sum(0)) ** 2))
    assert errs[0] < errs[1] < errs[2]


def test_zero_gain_stops_decoding():
    ch = unit_channels(0)
    s = random_state(0)
    a = s.a.copy()
    H = effective_channel(ch, s.v)
    first = order_devices(H)[0]
    a[first] = 0.0
    _, sic = aircomp_round(np.ones((3, 2)), s.copy(a=a), ch, 0.1, seed=0)
    assert not sic.success.any() and np.all(np.isnan(sic.symbols))


def test_local_update_and_task():
    task = make_task(0, 3, d=20, n_samples=100)
    w = np.zeros(20)
    assert np.array_equal(local_update(w, task.X[0], task.y[0], steps=0), w)
    assert task.loss(local_update(w, task.X[0], task.y[0], steps=20)) < task.loss(w)
    assert task.K == 3


def test_ideal_federated_reaches_centralized():
    cfg = easy_config()
    trace = run_federated(0, 50, ideal_provider, cfg)
    assert len(trace.loss) == 50 and trace.mse == [0.0] * 50
    assert abs(trace.loss[-1] - trace.centralized_loss) <= 0.05 * trace.centralized_loss
    assert trace.loss[-1] < trace.initial_loss
    with pytest.raises(InvalidInputError):
        run_federated(0, 0, ideal_provider, cfg)


def test_federated_with_fixed_link_tracks_ideal():
    cfg, ch, s = _feasible_easy(3)
    ideal = run_federated(1, 10, ideal_provider, cfg)
    air = run_federated(1, 10, lambda t: (s, ch), cfg)
    assert all(m > 0 for m in air.mse)
    assert abs(air.loss[-1] - ideal.loss[-1]) <= 0.1 * ideal.loss[-1]
    assert air.to_rows()[0]["round"] == 1


def test_optimized_provider_gives_up():
    from ris_airfl.config import sample_geometry
    cfg = easy_config(gamma_min=1e9, p_max=1e-6)
    prov = OptimizedProvider(sample_geometry(3, 0), cfg, seed=0, max_attempts=2)
    with pytest.raises(InfeasibleInstanceError):
        prov(0)
