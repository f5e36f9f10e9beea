import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import away_from_zero, grad_check
from shadowseg import tensor as T
from shadowseg.errors import ContractError, DimensionError
from shadowseg.tensor import GradTape, Tensor


def t(a):
    return Tensor(np.asarray(a, dtype=np.float64))


# -- forward examples ---------------------------------------------------------


def test_identity_kernel():
    rng = np.random.default_rng(0)
    x = rng.random((1, 5, 7))
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 1] = 1
    out = T.conv2d(t(x), t(k), t([0.0]))
    np.testing.assert_array_equal(out.data, x)


def test_all_ones_kernel_on_2x2():
    out = T.conv2d(t([[[1, 2], [3, 4]]]), t(np.ones((1, 1, 3, 3))), t([0.0]))
    assert out.data.tolist() == [[[10.0, 10.0], [10.0, 10.0]]]


def test_bias_only():
    out = T.conv2d(t(np.random.default_rng(1).random((2, 4, 4))), t(np.zeros((3, 2, 3, 3))), t([1.5, -2, 0]))
    assert np.all(out.data[0] == 1.5) and np.all(out.data[1] == -2) and np.all(out.data[2] == 0)


def test_conv_matches_direct_sum():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(2, 3, 6, 5))
    k = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    got = T.conv2d(t(x), t(k), t(b)).data
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    want = np.zeros((2, 4, 6, 5))
    for n in range(2):
        for o in range(4):
            for i in range(6):
                for j in range(5):
                    want[n, o, i, j] = (xp[n, :, i : i + 3, j : j + 3] * k[o]).sum() + b[o]
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize(
    "xs, ks, bs",
    [((2, 4, 4), (1, 3, 3, 3), (1,)), ((1, 4, 4), (1, 1, 2, 2), (1,)), ((1, 4, 4), (1, 1, 3, 3), (2,))],
)
def test_conv_shape_errors(xs, ks, bs):
    with pytest.raises(DimensionError):
        T.conv2d(t(np.zeros(xs)), t(np.zeros(ks)), t(np.zeros(bs)))


def test_maxpool_values_and_odd_size():
    x = t([[[1, 5, 2, 0], [3, 4, 8, 1], [0, 0, 1, 1], [0, 9, 1, 1]]])
    assert T.maxpool2(x).data.tolist() == [[[5, 8], [9, 1]]]
    with pytest.raises(DimensionError):
        T.maxpool2(t(np.zeros((1, 3, 4))))


def test_maxpool_tie_routes_gradient_to_first():
    x = Tensor(np.ones((1, 2, 2)), requires_grad=True)
    with GradTape() as tape:
        y = T.total(T.maxpool2(x))
    (g,) = tape.gradient(y, [x])
    assert g.tolist() == [[[1.0, 0.0], [0.0, 0.0]]]


def test_upsample_duplicates_blocks():
    out = T.upsample2(t([[[1, 2], [3, 4]]]))
    assert out.data[0].tolist() == [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]


def test_activation_values():
    x = t([-3.0, 0.0, 2.0])
    assert T.activation(x, "relu").data.tolist() == [0, 0, 2]
    assert T.activation(x, "swish").data[1] == 0
    assert T.activation(t([0.0]), "sigmoid").data[0] == 0.5
    big = T.activation(t([-800.0, 800.0]), "sigmoid").data
    assert np.all(np.isfinite(big)) and big[0] == 0 and big[1] == 1
    with pytest.raises(ContractError):
        T.activation(x, "tanh")


def test_non_scalar_seed_rejected():
    x = Tensor(np.ones(3), requires_grad=True)
    with GradTape() as tape:
        y = T.mul(x, 2.0)
    with pytest.raises(ContractError):
        tape.gradient(y, [x])


def test_unreached_source_gets_zeros():
    x = Tensor(np.ones(3), requires_grad=True)
    z = Tensor(np.ones((2, 2)), requires_grad=True)
    with GradTape() as tape:
        y = T.total(T.square(x))
    gx, gz = tape.gradient(y, [x, z])
    assert gx.tolist() == [2, 2, 2] and gz.shape == (2, 2) and not gz.any()


def test_reentered_tape_records_later_ops():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    tape = GradTape()
    with tape:
        y = T.square(x)
    with tape:
        loss = T.mean(y)
    (g,) = tape.gradient(loss, [x])
    assert g.tolist() == [1.0, 2.0]


def test_backward_accepts_mapping():
    p = {"a": Tensor(np.array(3.0), requires_grad=True)}
    with GradTape() as tape:
        loss = T.square(p["a"])
    assert T.backward(tape, loss, p)["a"] == 6.0


def test_finite_diff_grad_on_cubic():
    g = T.finite_diff_grad(lambda v: float((v**3).sum()), np.array([1.0, -2.0]))
    np.testing.assert_allclose(g, [3.0, 12.0], rtol=1e-8)


# -- gradient oracle ----------------------------------------------------------


@pytest.mark.parametrize("seed", range(5))
def test_conv_gradients(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-2, 2, (2, 5, 6))
    k = rng.uniform(-2, 2, (3, 2, 3, 3))
    b = rng.uniform(-2, 2, 3)
    w = rng.normal(size=(3, 5, 6))
    err = grad_check(lambda a: T.total(T.mul(T.conv2d(a[0], a[1], a[2]), Tensor(w))), [x, k, b])
    assert err <= 1e-4


def test_pointwise_conv_gradients():
    rng = np.random.default_rng(9)
    x = rng.uniform(-2, 2, (2, 3, 4, 4))
    k = rng.uniform(-2, 2, (2, 3, 1, 1))
    b = rng.uniform(-2, 2, 2)
    err = grad_check(lambda a: T.total(T.square(T.conv2d(a[0], a[1], a[2]))), [x, k, b])
    assert err <= 1e-4


@pytest.mark.parametrize("kind", ["swish", "relu", "sigmoid"])
def test_activation_gradients(kind):
    rng = np.random.default_rng(3)
    x = away_from_zero(rng, (6, 6))
    w = rng.normal(size=(6, 6))
    assert grad_check(lambda a: T.total(T.mul(T.activation(a[0], kind), Tensor(w))), [x]) <= 1e-4


def test_pool_upsample_concat_channel_gradients():
    rng = np.random.default_rng(4)
    x = rng.uniform(-2, 2, (2, 4, 6))
    y = rng.uniform(-2, 2, (1, 4, 6))

    def build(a):
        up = T.upsample2(T.maxpool2(a[0]))
        cat = T.concat_channels(up, a[1])
        return T.total(T.square(T.channel(cat, 0))) + T.mean(T.mul(T.channel(cat, 2), T.channel(cat, 1)))

    assert grad_check(build, [x, y]) <= 1e-4


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_conv_is_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    x = rng.random((2, 8, 8)).astype(np.float32)
    y = rng.random((2, 8, 8)).astype(np.float32)
    k = Tensor(rng.normal(size=(3, 2, 3, 3)).astype(np.float32))
    zero = Tensor(np.zeros(3, np.float32))
    lhs = T.conv2d(Tensor((a * x + b * y).astype(np.float32)), k, zero).data
    rhs = a * T.conv2d(Tensor(x), k, zero).data + b * T.conv2d(Tensor(y), k, zero).data
    assert np.abs(lhs - rhs).max() <= 1e-5 * max(1.0, np.abs(rhs).max())


def test_float32_preserved():
    x = Tensor(np.ones((1, 4, 4), np.float32))
    out = T.conv2d(x, Tensor(np.ones((2, 1, 3, 3), np.float32)), Tensor(np.zeros(2, np.float32)))
    assert out.dtype == np.float32
    assert T.activation(out, "swish").dtype == np.float32
