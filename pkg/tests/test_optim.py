"""Optimizer update rules against closed forms and an independent
step-by-step reference implementation."""
import math

import numpy as np
import pytest

from usdlab import optim
from usdlab.autodiff import Tensor
from usdlab.errors import ValidationError

from conftest import make_rng


def param(value):
    t = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
    return t


def test_adamw_first_step_is_about_minus_lr():
    p = param([10.0])
    p.grad = np.array([1.0])
    opt = optim.AdamW([p], lr=0.01, weight_decay=0.0)
    opt.step()
    # bias-corrected m/v ratio is 1 on the first step, so the move is
    # lr * g / (|g| + eps)
    assert abs((10.0 - p.data[0]) - 0.01) < 1e-9


def test_adamw_zero_grad_zero_decay_is_identity():
    p = param([3.0, -4.0])
    p.grad = np.zeros(2)
    opt = optim.AdamW([p], lr=0.1, weight_decay=0.0)
    opt.step()
    assert np.array_equal(p.data, np.array([3.0, -4.0]))


def test_adamw_decay_is_decoupled():
    # with zero gradient the only movement is the -lr*wd*p term
    p = param([2.0])
    p.grad = np.zeros(1)
    opt = optim.AdamW([p], lr=0.1, weight_decay=0.5)
    opt.step()
    assert abs(p.data[0] - 2.0 * (1 - 0.1 * 0.5)) < 1e-12
    # and with a gradient, the decay term adds linearly to the moment step
    q1 = param([2.0]); q1.grad = np.array([1.0])
    q2 = param([2.0]); q2.grad = np.array([1.0])
    optim.AdamW([q1], lr=0.1, weight_decay=0.0).step()
    optim.AdamW([q2], lr=0.1, weight_decay=0.5).step()
    assert abs((q1.data[0] - q2.data[0]) - 0.1 * 0.5 * 2.0) < 1e-12


def test_missing_grad_raises():
    p = param([1.0])
    opt = optim.AdamW([p], lr=0.1)
    with pytest.raises(ValidationError):
        opt.step()


def reference_radam_step(p, g, m, v, t, lr, b1, b2, eps, wd):
    """Independent transcription of the published RAdam update."""
    m = b1 * m + (1 - b1) * g
    v = b2 * v + (1 - b2) * g * g
    rho_inf = 2 / (1 - b2) - 1
    rho_t = rho_inf - 2 * t * b2**t / (1 - b2**t)
    p = p - lr * wd * p
    m_hat = m / (1 - b1**t)
    if rho_t > 4:
        v_hat = math.sqrt(v / (1 - b2**t))
        r_t = math.sqrt(((rho_t - 4) * (rho_t - 2) * rho_inf) /
                        ((rho_inf - 4) * (rho_inf - 2) * rho_t))
        p = p - lr * r_t * m_hat / (v_hat + eps)
    else:
        p = p - lr * m_hat
    return p, m, v


def test_radam_matches_reference_trajectory():
    rng = make_rng(3)
    p0 = 0.7
    grads = rng.normal(size=12)
    t1 = param([p0])
    opt = optim.RAdam([t1], lr=0.05, weight_decay=0.01)
    ref_p, ref_m, ref_v = p0, 0.0, 0.0
    for step, g in enumerate(grads, start=1):
        t1.grad = np.array([g])
        opt.step()
        ref_p, ref_m, ref_v = reference_radam_step(
            ref_p, g, ref_m, ref_v, step, 0.05, 0.9, 0.999, 1e-8, 0.01)
        assert abs(t1.data[0] - ref_p) < 1e-12, f"diverged at step {step}"


def test_radam_fallback_window():
    # with beta2 = 0.999 the rectification term is undefined through step 4
    b2 = 0.999
    rho_inf = 2 / (1 - b2) - 1
    for t in range(1, 5):
        assert rho_inf - 2 * t * b2**t / (1 - b2**t) <= 4
    assert rho_inf - 2 * 5 * b2**5 / (1 - b2**5) > 4
    # fallback step is exactly -lr * m_hat
    p = param([0.0])
    p.grad = np.array([2.0])
    opt = optim.RAdam([p], lr=0.1, weight_decay=0.0)
    opt.step()
    assert abs(p.data[0] + 0.1 * 2.0) < 1e-12


def test_zero_grad_clears():
    p = param([1.0])
    p.grad = np.ones(1)
    opt = optim.RAdam([p], lr=0.1)
    opt.zero_grad()
    assert p.grad is None


def test_make_optimizer_dispatch():
    p = param([1.0])
    assert optim.make_optimizer("AdamW", [p], 0.1).kind == "AdamW"
    assert optim.make_optimizer("RAdam", [p], 0.1).kind == "RAdam"
    with pytest.raises(ValidationError):
        optim.make_optimizer("SGD", [p], 0.1)
