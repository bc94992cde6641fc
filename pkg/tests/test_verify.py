import numpy as np

from ris_airfl.verify import (CheckResult, fd_hessian, identity_errors, mc_error_aware_mse, mc_sinr_denominator, run_suite,
                              sign_flipped_interference)


def test_check_result_formatting():
    r = CheckResult("x", True, 0.5, {"a": 1})
    assert r.line().startswith("PASS") and r.to_dict() == {"name": "x", "passed": True, "margin": 0.5, "a": 1}
    assert CheckResult("y", False, -1.0).line().startswith("FAIL")


def test_fd_hessian_of_quadratic():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    H = fd_hessian(lambda v: 0.5 * v @ A @ v, np.array([0.3, -0.2]))
    assert np.allclose(H, A, atol=1e-6)


def test_identity_errors_small():
    rng = np.random.default_rng(0)
    for n in (2, 5, 8):
        assert max(identity_errors(rng, n)) <= 1e-10


def test_suite_passes():
    results = run_suite(seed=0, instances=1, n_samples=20000)
    assert results and all(r.passed for r in results), [r.line() for r in results if not r.passed]


def test_mutation_is_detected():
    assert not mc_error_aware_mse(0, 0.1, j_fn=sign_flipped_interference).passed
    assert not mc_sinr_denominator(0, 0.1, j_fn=sign_flipped_interference).passed
    assert mc_error_aware_mse(0, 0.0, n_samples=20000).passed
