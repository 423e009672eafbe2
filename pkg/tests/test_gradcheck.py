import numpy as np
import pytest

from chainforge.modeling.dpo import DpoConfig
from chainforge.modeling.gradcheck import (
    GRADIENT_TOL,
    finite_difference_gradient,
    gradient_check,
    random_instance,
    relative_error,
    run_checks,
)


def test_finite_differences_of_a_quadratic():
    x = np.array([[1.0, -2.0], [0.5, 3.0]])
    grad = finite_difference_gradient(lambda v: float(np.sum(v ** 2)), x)
    np.testing.assert_allclose(grad, 2 * x, atol=1e-8)


def test_relative_error_scale():
    assert relative_error(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert relative_error(np.array([1.0, 4.0]), np.array([1.0, 3.0])) == pytest.approx(0.25)
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0


def test_analytic_gradient_matches_central_differences():
    rng = np.random.default_rng(17)
    errors = [gradient_check(*random_instance(rng)) for _ in range(50)]
    assert max(errors) < GRADIENT_TOL


def test_random_instances_are_valid():
    rng = np.random.default_rng(3)
    for _ in range(20):
        pairs, policy, reference, beta = random_instance(rng)
        assert np.all(pairs.chosen != pairs.rejected)
        assert 0.05 <= beta <= 2.0
        pairs.check_support(policy.shape)


def test_check_report():
    report, history = run_checks(seed=13, cfg=DpoConfig())
    assert report["passed"]
    assert report["identity"]["max_abs_error"] <= 1e-12
    assert report["training"]["final_loss"] < 0.1
    assert report["training"]["improved_margin_fraction"] == 1.0
    assert list(history.columns) == ["step", "loss", "mean_margin", "grad_norm", "test_loss"]


def test_check_report_is_reproducible():
    first, _ = run_checks(seed=5, cfg=DpoConfig(steps=20))
    second, _ = run_checks(seed=5, cfg=DpoConfig(steps=20))
    assert first == second
    assert not first["training"]["passed"]
