"""Adam update behavior and Xavier initialization bounds."""

import numpy as np
import pytest

from kgaudit import autodiff as ad
from kgaudit.optim import Adam, xavier_init


def test_zero_gradient_leaves_params_unchanged():
    p = ad.tensor([1.0, -2.0], requires_grad=True)
    adam = Adam([p], lr=0.1)
    p.grad = np.zeros(2)
    adam.step()
    assert np.allclose(p.data, [1.0, -2.0])


def test_missing_grad_raises():
    p = ad.tensor([1.0], requires_grad=True)
    with pytest.raises(RuntimeError):
        Adam([p]).step()


def test_grads_zeroed_after_step():
    p = ad.tensor([1.0], requires_grad=True)
    adam = Adam([p], lr=0.01)
    p.grad = np.ones(1)
    adam.step()
    assert p.grad is None


def test_constant_gradient_saturates_to_signed_lr_steps():
    p = ad.tensor([0.0], requires_grad=True)
    adam = Adam([p], lr=0.01)
    for _ in range(300):
        p.grad = np.array([7.5])
        adam.step()
    before = p.data.copy()
    p.grad = np.array([7.5])
    adam.step()
    # with saturated moments the update approaches lr * sign(grad)
    assert np.allclose(before - p.data, 0.01, rtol=1e-3)


def test_quadratic_converges_to_closed_form_minimizer():
    target = 1.0  # minimizer of (w - 1)^2
    w = ad.tensor([0.5], requires_grad=True)
    adam = Adam([w], lr=0.05)
    for _ in range(200):
        diff = w - ad.constant([target])
        ad.sum_(diff * diff).backward()
        adam.step()
    assert abs(w.data[0] - target) < 1e-3


def test_xavier_bound_and_determinism():
    t = xavier_init((100, 100), seed=7)
    bound = np.sqrt(6.0 / 200.0)
    assert t.requires_grad
    assert np.all(np.abs(t.data) <= bound)
    assert np.array_equal(t.data, xavier_init((100, 100), seed=7).data)
    assert not np.array_equal(t.data, xavier_init((100, 100), seed=8).data)


def test_xavier_vector_uses_unit_fan_out():
    t = xavier_init((50,), seed=1)
    assert np.all(np.abs(t.data) <= np.sqrt(6.0 / 51.0))


def test_xavier_mean_within_standard_error():
    draws = xavier_init((100, 100), seed=3).data  # 10^4 uniform draws
    bound = np.sqrt(6.0 / 200.0)
    stderr = np.sqrt(bound**2 / 3.0 / draws.size)
    assert abs(draws.mean()) < 3.0 * stderr


def test_xavier_rejects_3d():
    with pytest.raises(ValueError):
        xavier_init((2, 2, 2), seed=0)
