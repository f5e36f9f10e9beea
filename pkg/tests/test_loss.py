import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import grad_check
from shadowseg import loss as L
from shadowseg.errors import ConfigError, DimensionError
from shadowseg.tensor import GradTape, Tensor


def t(a):
    return Tensor(np.asarray(a, dtype=np.float64))


def test_bce_pins():
    assert L.bce_loss(t(np.full((3, 3), 0.5)), np.ones((3, 3))).item() == pytest.approx(math.log(2), abs=1e-6)
    assert L.bce_loss(t([0.9, 0.1]), [1.0, 0.0]).item() == pytest.approx(-math.log(0.9), abs=1e-9)
    eps = 1e-7
    near = L.bce_loss(t(np.full(4, 1 - eps)), np.ones(4), eps).item()
    assert near == pytest.approx(-math.log1p(-eps), rel=1e-6)


def test_bce_finite_for_relu_range():
    y = t([0.0, 3.0, 1.0, -1.0])
    x = [1.0, 0.0, 1.0, 0.0]
    v = L.bce_loss(y, x).item()
    assert math.isfinite(v) and v > 0


def test_bce_clamped_pixels_pass_no_gradient():
    y = Tensor(np.array([0.0, 2.0, 0.5]), requires_grad=True)
    with GradTape() as tape:
        v = L.bce_loss(y, np.array([1.0, 0.0, 1.0]))
    (g,) = tape.gradient(v, [y])
    assert g[0] == 0 and g[1] == 0 and g[2] == pytest.approx(-1 / (3 * 0.5))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_bce_nonnegative_and_entropy_at_target(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.01, 0.99, (5, 5))
    assert L.bce_loss(t(rng.random((5, 5)) * 1.5), (rng.random((5, 5)) > 0.5) * 1.0).item() >= 0
    entropy = -np.mean(x * np.log(x) + (1 - x) * np.log1p(-x))
    assert L.bce_loss(t(x), x).item() == pytest.approx(entropy, rel=1e-12)


def test_shape_mismatch():
    with pytest.raises(DimensionError):
        L.bce_loss(t(np.zeros((2, 2))), np.zeros((2, 3)))
    with pytest.raises(DimensionError):
        L.tv_mse_loss(t(np.zeros((2, 2))), np.zeros(4))


def test_tv_pins():
    assert L.tv(t(np.full((6, 5), 0.3))).item() <= 1e-6
    assert L.tv(t([[0, 1], [0, 1]])).item() == pytest.approx(2, abs=1e-6)


def test_tv_batched_matches_single():
    rng = np.random.default_rng(0)
    y = rng.random((3, 5, 4))
    batched = L.tv(t(y)).data
    assert batched.shape == (3,)
    np.testing.assert_allclose(batched, [L.tv(t(im)).item() for im in y])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0, 10))
def test_tv_homogeneous_and_subadditive(seed, c):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(6, 6))
    b = rng.normal(size=(6, 6))
    assert L.tv(t(c * a)).item() == pytest.approx(c * L.tv(t(a)).item(), rel=1e-6, abs=1e-6)
    assert L.tv(t(a + b)).item() <= L.tv(t(a)).item() + L.tv(t(b)).item() + 1e-6


def test_tv_mse_pins():
    assert L.tv_mse_loss(t(np.full((4, 4), 0.2)), np.full((4, 4), 0.2)).item() <= 1e-9
    v = L.tv_mse_loss(t(np.full((4, 4), 0.1)), np.zeros((4, 4)), 1e-4).item()
    assert v == pytest.approx(0.009999, abs=1e-12)


def test_tv_mse_alpha_zero_is_plain_mse():
    rng = np.random.default_rng(1)
    y, x = rng.random((5, 5)), rng.random((5, 5))
    assert L.tv_mse_loss(t(y), x, 0.0).item() == np.mean((y - x) ** 2)


def tv_share(y, x, alpha):
    h, w = y.shape
    return alpha * (L.tv(t(y)).item() / (h * w)) ** 2 / L.tv_mse_loss(t(y), x, alpha).item()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0, 1), st.floats(0, 1))
def test_tv_share_monotone_in_alpha(seed, a1, a2):
    rng = np.random.default_rng(seed)
    y, x = rng.random((6, 6)), rng.random((6, 6))
    lo, hi = sorted((a1, a2))
    assert tv_share(y, x, lo) <= tv_share(y, x, hi) + 1e-12


@pytest.mark.parametrize("seed", range(4))
def test_loss_gradients(seed):
    rng = np.random.default_rng(seed)
    y = rng.uniform(0.05, 0.95, (8, 8))
    x = (rng.random((8, 8)) > 0.6) * 1.0
    assert grad_check(lambda a: L.bce_loss(a[0], x), [y]) <= 1e-4
    assert grad_check(lambda a: L.tv(a[0]), [y]) <= 1e-4
    assert grad_check(lambda a: L.tv_mse_loss(a[0], x, 0.3), [y]) <= 1e-4


def test_total_loss_weights():
    rng = np.random.default_rng(2)
    yb, xb = rng.uniform(0.05, 0.95, (4, 4)), (rng.random((4, 4)) > 0.5) * 1.0
    yc, xc = rng.random((4, 4)), rng.random((4, 4))
    b = L.bce_loss(t(yb), xb).item()
    c = L.tv_mse_loss(t(yc), xc).item()
    assert L.total_loss((t(yb), xb), (t(yc), xc)).item() == pytest.approx(b + c)
    assert L.total_loss((t(yb), xb), (t(yc), xc), L.LossConfig(w_centroid=0)).item() == pytest.approx(b)
    assert L.total_loss((t(yb), xb), (t(yc), xc), L.LossConfig(w_binary=0)).item() == pytest.approx(c)


def test_perfect_predictions_leave_only_eps_and_tv_terms():
    x = (np.random.default_rng(3).random((6, 6)) > 0.5) * 1.0
    eps = 1e-7
    v = L.total_loss((t(np.clip(x, eps, 1 - eps)), x), (t(x), x)).item()
    # A perfect centroid prediction still carries its own total variation.
    tv_term = 1e-4 * (L.tv(t(x)).item() / 36) ** 2
    assert v == pytest.approx(-math.log1p(-eps) + tv_term, rel=1e-9)
    flat = L.total_loss((t(np.full((6, 6), 1 - eps)), np.ones((6, 6))), (t(np.zeros((6, 6))), np.zeros((6, 6))))
    assert flat.item() == pytest.approx(eps, rel=1e-6)


@pytest.mark.parametrize("kw", [dict(alpha=1.5), dict(clamp_eps=0.5), dict(w_binary=-1)])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        L.LossConfig(**kw).validate()
