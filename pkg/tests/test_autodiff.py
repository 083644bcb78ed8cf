import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinverify import autodiff as ad
from kinverify.exceptions import ContractError, NumericError, ShapeError


def triple_loop_matmul(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for r in range(k):
                s += a[i, r] * b[r, j]
            out[i, j] = s
    return out


def test_matmul_identity():
    out = ad.matmul(ad.Tensor([[1, 0], [0, 1]]), ad.Tensor([[3], [4]]))
    assert out.data.tolist() == [[3.0], [4.0]]


def test_matmul_row_by_column():
    assert ad.matmul(ad.Tensor([[1, 2]]), ad.Tensor([[3], [4]])).data.tolist() == [[11.0]]


def test_matmul_matches_triple_loop(rng):
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 2))
    np.testing.assert_allclose(ad.matmul(ad.Tensor(a), ad.Tensor(b)).data, triple_loop_matmul(a, b),
                               rtol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 64), st.integers(1, 64), st.integers(1, 64), st.integers(0, 2**32 - 1))
def test_matmul_oracle_up_to_64(m, k, n, seed):
    r = np.random.default_rng(seed)
    a, b = r.standard_normal((m, k)), r.standard_normal((k, n))
    got = ad.matmul(ad.Tensor(a), ad.Tensor(b)).data
    want = triple_loop_matmul(a, b)
    scale = np.abs(a) @ np.abs(b)
    assert np.all(np.abs(got - want) <= 1e-12 * np.maximum(scale, 1e-300))


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        ad.matmul(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((2, 3))))


@pytest.mark.parametrize(
    "op, a, b, expected",
    [
        ("mul", [1, 2, 3], [1, 2, 3], [1, 4, 9]),
        ("sub", [5, 5], [5, 5], [0, 0]),
        ("add", [1, 2], [3, -4], [4, -2]),
        ("square", [2, -3], None, [4, 9]),
    ],
)
def test_elementwise_values(op, a, b, expected):
    out = ad.elementwise(op, ad.Tensor(a), None if b is None else ad.Tensor(b))
    assert out.data.ravel().tolist() == expected


def test_elementwise_shape_mismatch():
    with pytest.raises(ShapeError):
        ad.elementwise("add", ad.Tensor([1, 2]), ad.Tensor([1, 2, 3]))


@pytest.mark.parametrize("op", ["add", "sub", "mul"])
def test_elementwise_backward_rules(op):
    a = ad.Tensor([[2.0, -1.0]], requires_grad=True)
    b = ad.Tensor([[3.0, 5.0]], requires_grad=True)
    tape = ad.Tape()
    loss = ad.mean(ad.elementwise(op, a, b, tape), tape)
    tape.backward(loss)
    g = np.full((1, 2), 0.5)
    expected = {"add": (g, g), "sub": (g, -g), "mul": (g * b.data, g * a.data)}[op]
    np.testing.assert_array_equal(a.grad, expected[0])
    np.testing.assert_array_equal(b.grad, expected[1])


def test_square_backward():
    a = ad.Tensor([[2.0, -3.0]], requires_grad=True)
    tape = ad.Tape()
    tape.backward(ad.mean(ad.square(a, tape), tape))
    np.testing.assert_array_equal(a.grad, [[2.0, -3.0]])


def test_sigmoid_values():
    assert ad.sigmoid(ad.Tensor(0.0)).item() == 0.5
    assert ad.sigmoid(ad.Tensor(2.0)).item() == pytest.approx(0.8807970779778823, rel=1e-15)


@given(st.floats(-700, 700))
def test_sigmoid_symmetry(x):
    s = ad.sigmoid(ad.Tensor([x, -x])).data.ravel()
    assert s[0] + s[1] == pytest.approx(1.0, abs=1e-15)


def test_sigmoid_extreme_logits_finite():
    s = ad.sigmoid(ad.Tensor([-800.0, -745.5, 745.5, 800.0])).data
    assert np.all(np.isfinite(s))
    assert s[0, 0] == 0.0 and s[0, 3] == 1.0


def test_backward_linear():
    w = ad.Tensor([[0.7]], requires_grad=True)
    x = ad.Tensor([[3.0]])
    tape = ad.Tape()
    tape.backward(ad.matmul(w, x, tape))
    assert w.grad.tolist() == [[3.0]]


def test_backward_sigmoid_at_zero():
    w = ad.Tensor(0.0, requires_grad=True)
    tape = ad.Tape()
    tape.backward(ad.sigmoid(w, tape))
    assert w.grad.item() == 0.25


def test_backward_fan_out_accumulates():
    x = ad.Tensor([[1.5]], requires_grad=True)
    tape = ad.Tape()
    y = ad.add(ad.mul(x, x, tape), x, tape)   # x^2 + x
    tape.backward(y)
    assert x.grad.item() == 2 * 1.5 + 1


def test_leaf_grads_accumulate_until_zeroed():
    w = ad.Tensor([[2.0]], requires_grad=True)
    tape = ad.Tape()
    loss = ad.square(w, tape)
    tape.backward(loss)
    tape.backward(loss)
    assert w.grad.item() == 8.0
    w.zero_grad()
    tape.backward(loss)
    assert w.grad.item() == 4.0


def test_backward_deterministic(rng):
    w1 = ad.Tensor(rng.standard_normal((5, 7)), requires_grad=True)
    w2 = ad.Tensor(rng.standard_normal((7, 1)), requires_grad=True)
    x = ad.Tensor(rng.standard_normal((4, 5)))
    tape = ad.Tape()
    loss = ad.mean(ad.sigmoid(ad.matmul(ad.relu(ad.matmul(x, w1, tape), tape), w2, tape), tape), tape)
    tape.backward(loss)
    first = (w1.grad.copy(), w2.grad.copy())
    w1.zero_grad()
    w2.zero_grad()
    tape.backward(loss)
    assert w1.grad.tobytes() == first[0].tobytes()
    assert w2.grad.tobytes() == first[1].tobytes()


def test_backward_requires_scalar():
    a = ad.Tensor([[1.0, 2.0]], requires_grad=True)
    tape = ad.Tape()
    out = ad.square(a, tape)
    with pytest.raises(ContractError):
        tape.backward(out)


def test_backward_rejects_foreign_loss():
    a = ad.Tensor([[1.0]], requires_grad=True)
    other = ad.Tape()
    loss = ad.square(a, other)
    with pytest.raises(ContractError):
        ad.Tape().backward(loss)


def test_ops_without_tape_do_not_record():
    a = ad.Tensor([[1.0]], requires_grad=True)
    assert not ad.square(a).requires_grad


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_result_raises():
    with pytest.raises(NumericError):
        ad.mul(ad.Tensor([[1e200]]), ad.Tensor([[1e200]]))


def test_fd_check_square():
    w = ad.Tensor([[3.0]], requires_grad=True)
    err = ad.finite_diff_check(lambda tape: ad.square(w, tape), w, h=1e-5)
    assert w.grad.item() == 6.0
    assert err < 1e-8


def test_fd_check_constant():
    w = ad.Tensor([[3.0]], requires_grad=True)
    const = ad.Tensor([[4.0]])
    err = ad.finite_diff_check(lambda tape: ad.mean(const, tape), w, h=1e-5)
    assert err == 0.0


def test_fd_check_rejects_bad_step():
    w = ad.Tensor([[1.0]], requires_grad=True)
    with pytest.raises(ContractError):
        ad.finite_diff_check(lambda tape: ad.square(w, tape), w, h=0.0)


def test_fd_check_detects_wrong_gradient():
    w = ad.Tensor([[1.3]], requires_grad=True)

    def broken(tape):
        out = ad.square(w, tape)
        if tape is not None:
            tape.nodes[-1].backward = lambda g: (3.0 * w.data * g,)
        return out

    assert ad.finite_diff_check(broken, w) > 0.1


def test_fd_check_two_layer_head(rng):
    x = ad.Tensor(rng.standard_normal((6, 5)))
    w1 = ad.Tensor(rng.standard_normal((5, 8)), requires_grad=True, name="w1")
    b1 = ad.Tensor(rng.standard_normal((1, 8)), requires_grad=True, name="b1")
    w2 = ad.Tensor(rng.standard_normal((8, 1)), requires_grad=True, name="w2")
    y = rng.integers(0, 2, size=6)

    def f(tape):
        h = ad.relu(ad.add_row(ad.matmul(x, w1, tape), b1, tape), tape)
        p = ad.sigmoid(ad.matmul(h, w2, tape), tape)
        return ad.mean(ad.binary_loss(p, y, "bce", tape=tape), tape)

    assert ad.finite_diff_check(f, [w1, b1, w2]) < 1e-4


def test_concat_backward_splits():
    a = ad.Tensor([[1.0, 2.0]], requires_grad=True)
    b = ad.Tensor([[3.0]], requires_grad=True)
    tape = ad.Tape()
    c = ad.concat([a, b], tape)
    w = ad.Tensor([[1.0], [2.0], [3.0]])
    tape.backward(ad.matmul(c, w, tape))
    assert a.grad.tolist() == [[1.0, 2.0]]
    assert b.grad.tolist() == [[3.0]]


def test_tensor_invariants():
    t = ad.Tensor([1.0, 2.0, 3.0])
    assert t.shape == (1, 3)
    assert t.data.size == t.shape[0] * t.shape[1]
    with pytest.raises(ShapeError):
        ad.Tensor(np.zeros((2, 2, 2)))
