import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pickroute import autodiff as ad
from pickroute.autodiff import AdamConfig, Parameter, ShapeError, adam_step, backward, finite_diff_check


def P(shape, seed=0, name="p"):
    return Parameter(np.random.default_rng(seed).normal(size=shape), name)


def test_masked_softmax_example():
    out = ad.masked_softmax(ad.Tensor([[1.0, 1.0, 1.0]]), np.array([[False, False, True]]))
    assert out.data.tolist() == [[0.5, 0.5, 0.0]]


def test_masked_softmax_all_masked_row_is_an_error():
    with pytest.raises(ValueError):
        ad.masked_softmax(ad.Tensor([[1.0, 2.0]]), np.array([[True, True]]))


@settings(max_examples=100)
@given(
    arrays(np.float64, (4, 6), elements=st.floats(-30, 30)),
    arrays(bool, (4, 6)),
)
def test_masked_softmax_rows_sum_to_one(x, mask):
    mask[:, 0] = False
    p = ad.masked_softmax(ad.Tensor(x), mask).data
    assert np.all(np.abs(p.sum(axis=-1) - 1) < 1e-12)
    assert np.all(p[mask] == 0.0)


def test_layer_norm_constant_row_is_zero():
    gain, bias = ad.Tensor(np.ones(4)), ad.Tensor(np.zeros(4))
    out = ad.layer_norm(ad.Tensor(np.full((2, 4), 7.0)), gain, bias)
    assert np.all(out.data == 0.0)


def test_matmul_shape_and_error_message():
    assert ad.matmul(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((3, 4)))).shape == (2, 4)
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 4\)"):
        ad.matmul(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((2, 4))))
    with pytest.raises(ShapeError, match="add"):
        ad.add(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((4,))))


def test_split_and_concat_heads_round_trip():
    x = ad.Tensor(np.arange(2 * 5 * 8, dtype=float).reshape(2, 5, 8))
    heads = ad.split_heads(x, 4)
    assert heads.shape == (2, 4, 5, 2)
    assert np.array_equal(ad.concat_heads(heads).data, x.data)
    with pytest.raises(ShapeError):
        ad.split_heads(x, 3)


# Each primitive in isolation, composed with a random linear read-out so the
# loss is a generic scalar.
def _readout(t, seed=9):
    w = np.random.default_rng(seed).normal(size=t.shape)
    return ad.sum(ad.mul(t, ad.Tensor(w)))


MASK = np.array([[False, True, False, False], [False, False, False, True], [True, False, False, False]])

PRIMITIVES = {
    "matmul": lambda a, b: ad.matmul(a, b),
    "add": lambda a, b: ad.add(a, ad.reshape(ad.gather_rows(b, [0]), (4,))),
    "mul": lambda a, b: ad.mul(a, a),
    "scale": lambda a, b: ad.scale(a, -2.5),
    "relu": lambda a, b: ad.relu(a),
    "tanh": lambda a, b: ad.tanh(a),
    "log": lambda a, b: ad.log(ad.mul(a, a)),
    "masked_softmax": lambda a, b: ad.masked_softmax(a, MASK),
    "layer_norm": lambda a, b: ad.layer_norm(a, ad.reshape(ad.gather_rows(b, [1]), (4,)),
                                             ad.reshape(ad.gather_rows(b, [2]), (4,))),
    "heads": lambda a, b: ad.concat_heads(ad.split_heads(ad.reshape(a, (1, 3, 4)), 2)),
    "transpose": lambda a, b: ad.transpose(a, (1, 0)),
    "gather_rows": lambda a, b: ad.gather_rows(a, [2, 0, 2]),
    "pick": lambda a, b: ad.pick(a, [1, 3, 0]),
    "sum_axis": lambda a, b: ad.sum(a, axis=0),
    "mean": lambda a, b: ad.mean(a),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients(name):
    a, b = P((3, 4), 1, "a"), P((4, 4), 2, "b")
    op = PRIMITIVES[name]
    assert finite_diff_check(lambda: _readout(op(a, b)), [a, b]) < 1e-4


def test_quadratic_example():
    x = Parameter(np.array(3.0), "x")
    backward(ad.mul(x, x), [x])
    assert x.grad == 6.0
    x.zero_grad()
    assert finite_diff_check(lambda: ad.mul(x, x), [x]) < 1e-6


def test_linear_loss_outer_product():
    w = P((3, 2), 4, "w")
    x = np.array([[1.0], [2.0]])
    backward(ad.sum(ad.matmul(w, ad.Tensor(x))), [w])
    assert np.allclose(w.grad, np.ones((3, 1)) @ x.T)


def test_independent_and_constant_parameters_get_zero():
    a, b = P((2,), 0, "a"), P((2,), 1, "b")
    grads = backward(ad.sum(ad.mul(a, a)), [a, b])
    assert np.all(grads["b"] == 0)
    a.zero_grad()
    c = Parameter(np.ones(3), "c")
    grads = backward(ad.sum(ad.Tensor(np.ones(3))), [c])
    assert np.all(grads["c"] == 0)
    assert finite_diff_check(lambda: ad.sum(ad.Tensor(np.ones(3))), [c]) == 0.0


def test_double_backward_without_reset_is_an_error():
    a = P((2,), 0, "a")
    backward(ad.sum(a), [a])
    with pytest.raises(RuntimeError, match="zero it"):
        backward(ad.sum(a), [a])
    a.zero_grad()
    backward(ad.sum(a), [a])


def test_backward_needs_scalar():
    a = P((2,), 0, "a")
    with pytest.raises(ShapeError):
        backward(a * 2.0, [a])


def test_no_grad_records_nothing():
    a = P((2,), 0, "a")
    with ad.no_grad():
        out = ad.tanh(a)
    assert not out.requires_grad and out.parents == ()


def test_adam_zero_gradient_leaves_parameters():
    a = P((3,), 0, "a")
    before = a.data.copy()
    adam_step([a], {"a": np.zeros(3)}, AdamConfig())
    assert np.array_equal(a.data, before)


def test_adam_first_step_is_sign_times_lr():
    a = P((4,), 0, "a")
    before = a.data.copy()
    g = np.array([0.3, -2.0, 1e-2, -5.0])
    cfg = AdamConfig(lr=1e-3)
    adam_step([a], {"a": g}, cfg)
    assert np.allclose(a.data - before, -cfg.lr * np.sign(g), rtol=1e-5, atol=0)


def test_adam_is_deterministic():
    a, b = P((3,), 0, "a"), P((3,), 0, "a")
    for k in range(5):
        g = {"a": np.full(3, 0.1 * k - 0.2)}
        adam_step([a], g, AdamConfig())
        adam_step([b], g, AdamConfig())
    assert a.data.tobytes() == b.data.tobytes()


def test_adam_config_validation():
    with pytest.raises(ValueError):
        AdamConfig(beta1=1.0)
