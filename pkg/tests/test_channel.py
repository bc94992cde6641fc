import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ris_airfl.channel import (ChannelEstimate, ErrorModel, _rician, calibrate_error_model, effective_channel,
                               pathloss, sample_channels, sample_estimate)
from ris_airfl.config import desk_config, sample_geometry, table2_config
from ris_airfl.errors import InvalidInputError, UnsupportedRegimeError

from conftest import unit_channels


def test_reference_distance_pathloss_is_one():
    assert pathloss(1.0, 3.2, 1.0) == 1.0


def test_rayleigh_limit_is_scaled_gaussian():
    rng = np.random.default_rng(0)
    x = _rician(rng, 400, 250, 0.3, 0.0, (0, 0, 0), (10, 0, 0))
    p = np.abs(x) ** 2
    se = p.std() / np.sqrt(p.size)
    assert abs(p.mean() - 0.3) <= 3 * se
    # circular symmetry: real and imaginary parts each carry half the power
    assert abs(np.mean(x.real ** 2) - 0.15) < 0.01


@pytest.mark.parametrize("link", ["db", "dr", "rb"])
def test_table2_link_second_moment_matches_pathloss(link):
    geo = sample_geometry(3, 0)
    kappa = {"db": geo.rician_db, "dr": geo.rician_dr, "rb": geo.rician_rb}[link]
    nu = {"db": geo.nu_db, "dr": geo.nu_dr, "rb": geo.nu_rb}[link]
    tx = geo.device_positions[0] if link != "rb" else geo.ris_position
    rx = geo.bs_position if link != "dr" else geo.ris_position
    gain = pathloss(np.linalg.norm(np.subtract(rx, tx)), nu, geo.c0)
    rng = np.random.default_rng(7)
    x = _rician(rng, 500, 200, gain, kappa, tx, rx)
    p = np.abs(x) ** 2
    assert abs(p.mean() - gain) <= 3 * p.std() / np.sqrt(p.size)


def test_sample_channels_shapes_and_determinism():
    cfg = table2_config()
    geo = sample_geometry(3, 5)
    a = sample_channels(geo, cfg, 11)
    b = sample_channels(geo, cfg, 11)
    assert a.h_direct.shape == (3, 16, 2) and a.h_ris.shape == (3, 40, 2) and a.g.shape == (40, 16)
    assert np.array_equal(a.h_direct, b.h_direct) and np.array_equal(a.g, b.g)
    c = sample_channels(geo, cfg, 12)
    assert not np.array_equal(a.h_direct, c.h_direct)


def test_non_finite_geometry_rejected():
    with pytest.raises(InvalidInputError):
        sample_geometry(3, 0, bs_position=(0, np.nan, 25))


def test_geometry_device_count_must_match():
    with pytest.raises(InvalidInputError):
        sample_channels(sample_geometry(2, 0), desk_config(), 0)


def test_no_reflection_path_gives_direct_channel():
    ch = unit_channels(0)
    ch.h_ris[:] = 0
    H = effective_channel(ch, np.random.default_rng(0).uniform(0, 6, ch.M))
    assert np.array_equal(H, ch.h_direct)


def test_zero_phases_give_plain_sum():
    ch = unit_channels(1)
    H = effective_channel(ch, np.zeros(ch.M))
    ref = np.array([ch.h_direct[k] + ch.g.conj().T @ ch.h_ris[k] for k in range(ch.K)])
    assert np.allclose(H, ref, atol=1e-13)


def test_effective_channel_shape_mismatch():
    with pytest.raises(InvalidInputError):
        effective_channel(unit_channels(0), np.zeros(3))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), shift=st.integers(-3, 3))
def test_effective_channel_periodic(seed, shift):
    ch = unit_channels(seed % 50)
    v = np.random.default_rng(seed).uniform(-10, 10, ch.M)
    a = effective_channel(ch, v)
    b = effective_channel(ch, v + 2 * np.pi * shift)
    c = effective_channel(ch, np.mod(v, 2 * np.pi))
    assert np.max(np.abs(a - b)) <= 1e-12 * (1 + np.abs(a).max())
    assert np.max(np.abs(a - c)) <= 1e-12 * (1 + np.abs(a).max())


def test_zero_error_model_is_identity():
    ch = unit_channels(2)
    est = sample_estimate(ch, ErrorModel.zero(ch.K), 3)
    assert np.array_equal(est.est.h_direct, ch.h_direct) and not np.any(est.errors.g)


def test_error_variance_moment():
    ch = unit_channels(0, K=1, Nt=100, Nr=1000, M=1)
    em = ErrorModel([0.01], [0.0], 0.0)
    est = sample_estimate(ch, em, 4)
    e = np.abs(est.errors.h_direct) ** 2
    assert abs(e.mean() - 0.01) <= 3 * e.std() / np.sqrt(e.size)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 1000))
def test_estimate_plus_error_is_truth(seed):
    ch = unit_channels(seed % 30)
    est = sample_estimate(ch, calibrate_error_model(ch, 0.2), seed)
    t = est.truth
    assert np.allclose(t.h_direct, ch.h_direct, atol=1e-14) and np.allclose(t.g, ch.g, atol=1e-14)


def test_negative_variance_rejected():
    with pytest.raises(InvalidInputError):
        ErrorModel([-0.1, 0.0], [0.0, 0.0], 0.0)


def test_calibrate_zero_and_unsupported():
    ch = unit_channels(0)
    assert calibrate_error_model(ch, 0.0).is_zero()
    with pytest.raises(UnsupportedRegimeError):
        calibrate_error_model(ch, 1.0)


def test_calibrated_nmse_matches_target():
    cfg = table2_config()
    truth = sample_channels(sample_geometry(3, 0), cfg, 0)
    em = calibrate_error_model(truth, 0.1)
    err, est = 0.0, 0.0
    for s in range(10_000):
        e = sample_estimate(truth, em, s)
        err += sum(np.sum(np.abs(x) ** 2) for x in (e.errors.h_direct, e.errors.h_ris, e.errors.g))
        est += sum(np.sum(np.abs(x) ** 2) for x in (e.est.h_direct, e.est.h_ris, e.est.g))
    assert abs(err / est - 0.1) <= 0.05 * 0.1


def test_calibration_scales_quadratically():
    ch = unit_channels(3)
    a = calibrate_error_model(ch, 0.1)
    b = calibrate_error_model(ch.scaled(2.0), 0.1)
    assert np.allclose(b.sigma2_d, 4 * a.sigma2_d) and np.allclose(b.sigma2_r, 4 * a.sigma2_r)
    assert np.isclose(b.sigma2_g, 4 * a.sigma2_g)


def test_exact_estimate_has_zero_model():
    ch = unit_channels(0)
    e = ChannelEstimate.exact(ch)
    assert e.error_model.is_zero() and np.array_equal(e.truth.h_ris, ch.h_ris)
