import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from racnn import tensor as T

from .conftest import numeric_grad, rel_err

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def naive_matmul(a, b):
    m, k = a.shape
    _, p = b.shape
    out = np.zeros((m, p))
    for i in range(m):
        for j in range(p):
            for r in range(k):
                out[i, j] += a[i, r] * b[r, j]
    return out


def naive_conv(x, w, bias):
    n, h = x.shape[0], w.shape[0]
    out = []
    for j in range(n - h + 1):
        s = 0.0
        for r in range(h):
            for c in range(x.shape[1]):
                s += w[r, c] * x[j + r, c]
        out.append(s + bias)
    return np.array(out)


def scalar_grad(build, arrays):
    """Backprop gradients of ``sum(build(*params))`` for each input array."""
    tape = T.Tape()
    ps = [tape.param(f"p{i}", a) for i, a in enumerate(arrays)]
    grads = tape.backward(T.total(build(*ps)))
    return [grads[f"p{i}"] for i in range(len(arrays))]


def check_op_grad(build, *arrays):
    analytic = scalar_grad(build, arrays)
    for a, g in zip(arrays, analytic):
        num = numeric_grad(lambda: float(np.sum(build(*[T.Tensor(x) for x in arrays]).data)), a)
        assert rel_err(g, num) < 1e-4


# --- matmul ----------------------------------------------------------------------

def test_matmul_identity_and_annihilator(rng):
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(T.matmul(np.eye(2), m).data, m)
    assert np.array_equal(T.matmul(np.zeros((2, 3)), rng.normal(size=(3, 4))).data, np.zeros((2, 4)))


def test_matmul_matches_triple_loop(rng):
    a, b = rng.normal(size=(2, 3)), rng.normal(size=(3, 2))
    assert np.abs(T.matmul(a, b).data - naive_matmul(a, b)).max() < 1e-12


def test_matmul_shape_error_names_shapes():
    with pytest.raises(T.ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
        T.matmul(np.zeros((2, 3)), np.zeros((2, 2)))


def test_matmul_gradient(rng):
    check_op_grad(T.matmul, rng.normal(size=(3, 4)), rng.normal(size=(4, 2)))


# --- convolution -----------------------------------------------------------------

@pytest.mark.parametrize("h,expected", [(2, 6), (3, 5)])
def test_conv_lengths_worked_example(rng, h, expected):
    out = T.conv1d_valid(rng.normal(size=(7, 4)), rng.normal(size=(h, 4)), 0.0)
    assert out.shape == (expected,)


def test_conv_constant_case():
    out = T.conv1d_valid(np.ones((4, 2)), np.ones((2, 2)), 0.0)
    assert out.data.tolist() == [4.0, 4.0, 4.0]


def test_conv_matches_window_oracle(rng):
    x, w = rng.normal(size=(5, 3)), rng.normal(size=(2, 3))
    out = T.conv1d_valid(x, w, 0.7)
    assert np.abs(out.data - naive_conv(x, w, 0.7)).max() < 1e-12


def test_conv_filter_taller_than_input():
    with pytest.raises(T.PreconditionError):
        T.conv1d_valid(np.zeros((2, 3)), np.zeros((3, 3)))


def test_conv_bank_gradient(rng):
    check_op_grad(T.conv_bank, rng.normal(size=(2, 6, 3)), rng.normal(size=(4, 3, 3)),
                  rng.normal(size=4))


@given(n=st.integers(1, 12), h=st.integers(1, 12))
def test_conv_length_property(n, h):
    if h > n:
        return
    assert T.conv1d_valid(np.ones((n, 2)), np.ones((h, 2))).shape == (n - h + 1,)


# --- relu / pooling ----------------------------------------------------------------

def test_relu_values():
    assert T.relu(np.array([-1.0, 0.0, 2.0])).data.tolist() == [0.0, 0.0, 2.0]
    assert not T.relu(-np.arange(1.0, 5.0)).data.any()


@pytest.mark.parametrize("x,expected", [(3.0, 1.0), (-3.0, 0.0), (0.0, 0.0)])
def test_relu_gradient(x, expected):
    (g,) = scalar_grad(T.relu, [np.array([x])])
    assert g[0] == expected
    if x != 0.0:
        num = numeric_grad(lambda: float(T.relu(np.array([xs[0]])).data[0]), xs := np.array([x]))
        assert abs(num[0] - expected) < 1e-8


@pytest.mark.parametrize("f,value,index", [([1, 5, 3], 5, 1), ([7], 7, 0), ([2, 2], 2, 0)])
def test_max_pool(f, value, index):
    v, i = T.max_pool_1(np.array(f, dtype=float))
    assert float(v.data) == value and i == index


def test_max_pool_gradient_routes_to_argmax():
    tape = T.Tape()
    f = tape.param("f", np.array([2.0, 2.0, 1.0]))
    v, _ = T.max_pool_1(f)
    assert tape.backward(v)["f"].tolist() == [1.0, 0.0, 0.0]


def test_max_pool_empty():
    with pytest.raises(T.PreconditionError):
        T.max_pool_1(np.array([]))


def test_masked_pool_ignores_padding_windows():
    x = np.array([[[1.0], [9.0]], [[3.0], [9.0]]])
    out = T.masked_max_pool(x, np.array([1, 2]))
    assert out.data[:, 0].tolist() == [1.0, 9.0]


# --- softmax / cross-entropy -----------------------------------------------------

def test_softmax_trivial():
    assert np.allclose(T.softmax(np.zeros(2)).data, [0.5, 0.5], atol=0, rtol=0)
    c = 123.4
    assert np.abs(T.softmax(np.full(3, c)).data - 1 / 3).max() < 1e-15


def test_softmax_large_logits_against_high_precision():
    p = T.softmax(np.array([1000.0, 0.0])).data
    mpmath.mp.dps = 50
    z = mpmath.exp(0) + mpmath.exp(-1000)
    expected = [float(1 / z), float(mpmath.exp(-1000) / z)]
    assert np.all(np.isfinite(p))
    assert abs(p[0] - expected[0]) < 1e-15 and abs(p[1] - expected[1]) < 1e-300


def test_softmax_rejects_nonfinite():
    with pytest.raises(T.NumericError):
        T.softmax(np.array([np.nan, 0.0]))


@settings(max_examples=200)
@given(arrays(np.float64, st.integers(2, 8), elements=finite), finite)
def test_softmax_distribution_and_shift_invariance(x, c):
    p = T.softmax(x).data
    assert np.all(p > 0)
    assert abs(p.sum() - 1) < 1e-12
    assert np.abs(T.softmax(x + c).data - p).max() < 1e-12


def test_cross_entropy_values():
    assert float(T.cross_entropy(np.array([1.0, 0.0, 0.0]), 0).data) == pytest.approx(0.0, abs=1e-15)
    assert float(T.cross_entropy(np.array([0.5, 0.5]), 1).data) == pytest.approx(np.log(2), abs=1e-15)
    assert float(T.cross_entropy(np.array([1.0, 0.0]), 1).data) == pytest.approx(-np.log(1e-12))


def test_cross_entropy_label_range():
    with pytest.raises(IndexError):
        T.cross_entropy(np.array([0.5, 0.5]), 2)


def test_cross_entropy_of_softmax_gradient(rng):
    logits = rng.normal(size=4)
    tape = T.Tape()
    z = tape.param("z", logits)
    g = tape.backward(T.cross_entropy(T.softmax(z), 2))["z"]
    onehot = np.eye(4)[2]
    assert np.abs(g - (T.softmax(logits).data - onehot)).max() < 1e-12
    num = numeric_grad(lambda: float(T.cross_entropy(T.softmax(logits), 2).data), logits)
    assert rel_err(g, num) < 1e-4


# --- other differentiable ops --------------------------------------------------

@pytest.mark.parametrize("build,shapes", [
    (T.tanh, [(3, 2)]),
    (lambda a, b: T.mul(a, b), [(3, 2), (3, 1)]),
    (lambda a, b: T.add(a, b), [(3, 2), (2,)]),
    (lambda a: T.concat([a, T.mul(a, a)], axis=-1), [(2, 3)]),
    (lambda a: T.column(a, 1), [(4, 3)]),
    (lambda a: T.mean(T.mul(a, a)), [(5,)]),
    (lambda a, b: T.gate_max(a, b), [(6,), (6,)]),
])
def test_elementwise_gradients(rng, build, shapes):
    check_op_grad(build, *[rng.normal(size=s) for s in shapes])


def test_segment_ops_gradients(rng):
    seg = np.array([0, 0, 1, 2, 2, 2])
    w = rng.normal(size=6)
    v = rng.normal(size=(3, 2))
    check_op_grad(lambda x: T.mul(T.segment_sum(x, seg, 3), v),
                  rng.normal(size=(6, 2)))
    check_op_grad(lambda s: T.mul(T.segment_softmax(s, seg, 3), w), rng.normal(size=6))


def test_segment_softmax_sums_to_one_per_segment(rng):
    seg = np.array([0, 1, 1, 2, 2, 2])
    p = T.segment_softmax(rng.normal(size=6) * 30, seg, 3).data
    assert np.all(p > 0)
    assert np.abs(np.bincount(seg, weights=p) - 1).max() < 1e-12


def test_embed_gradient_accumulates_repeats():
    tape = T.Tape()
    E = tape.param("E", np.arange(12.0).reshape(4, 3))
    g = tape.backward(T.total(T.embed(E, np.array([[1, 1, 3]]))))["E"]
    assert g[:, 0].tolist() == [0.0, 2.0, 0.0, 1.0]


# --- backward contract ----------------------------------------------------------

def test_backward_sum_is_ones(rng):
    tape = T.Tape()
    x = tape.param("x", rng.normal(size=(3, 4)))
    assert np.array_equal(tape.backward(T.total(x))["x"], np.ones((3, 4)))


def test_backward_detached_parameter_gets_exact_zero(rng):
    tape = T.Tape()
    x = tape.param("x", rng.normal(size=3))
    p = tape.param("p", rng.normal(size=(2, 2)))
    grads = tape.backward(T.total(T.tanh(x)))
    assert np.array_equal(grads["p"], np.zeros((2, 2)))


def test_backward_constants_get_no_storage(rng):
    tape = T.Tape()
    x = tape.param("x", rng.normal(size=3))
    c = tape.const(rng.normal(size=3))
    grads = tape.backward(T.total(T.mul(x, c)))
    assert set(grads) == {"x"}


def test_backward_requires_scalar(rng):
    tape = T.Tape()
    x = tape.param("x", rng.normal(size=3))
    with pytest.raises(T.PreconditionError):
        tape.backward(T.tanh(x))


def test_tape_is_topologically_ordered(rng):
    tape = T.Tape()
    x = tape.param("x", rng.normal(size=(2, 2)))
    T.total(T.matmul(T.relu(x), x))
    for node in tape.nodes:
        assert all(p.id < node.id for p in node.parents if p.tape is tape)


# --- dropout --------------------------------------------------------------------

def test_dropout_identity_cases(rng):
    x = rng.normal(size=50)
    assert np.array_equal(T.dropout(x, 0.0, True, rng).data, x)
    assert np.array_equal(T.dropout(x, 0.5, False, rng).data, x)


def test_dropout_mean_preserved():
    out = T.dropout(np.ones(100_000), 0.5, True, np.random.default_rng(0)).data
    assert abs(out.mean() - 1.0) < 0.02
    assert set(np.unique(out)) == {0.0, 2.0}


@pytest.mark.parametrize("rate", [1.0, 0.95, -0.1])
def test_dropout_rate_bounds(rate, rng):
    with pytest.raises(ValueError):
        T.dropout(np.ones(3), rate, True, rng)


def test_forward_and_backward_stay_finite(rng):
    tape = T.Tape()
    x = tape.param("x", rng.normal(size=(3, 5, 4)) * 100)
    w = tape.param("w", rng.normal(size=(2, 2, 4)))
    b = tape.param("b", rng.normal(size=2))
    pooled = T.masked_max_pool(T.relu(T.conv_bank(x, w, b)), np.array([4, 2, 1]))
    loss = T.cross_entropy(T.softmax(pooled), [0, 1, 0])
    grads = tape.backward(loss)
    assert np.isfinite(loss.data)
    assert all(np.all(np.isfinite(g)) for g in grads.values())
