"""Gradient oracle tests: every differentiable op against central finite
differences, plus the pinned edge-case semantics."""

import math

import numpy as np
import pytest

from hactnet.autodiff import (
    AdamState,
    Tensor,
    adam_step,
    add,
    backward,
    concat,
    finite_diff_check,
    matmul,
    parameter,
    relu,
    row_gather,
    segment_sum,
    softmax_cross_entropy,
    sum_all,
    zero_grads,
)


def test_relu_forward_and_subgradient_at_zero():
    x = parameter(np.array([-1.0, 0.0, 2.0]))
    out = relu(x)
    assert np.array_equal(out.data, [0.0, 0.0, 2.0])
    backward(sum_all(out))
    assert np.array_equal(x.grad, [0.0, 0.0, 1.0])


def test_segment_sum_hand_case():
    v = Tensor(np.array([[1.0], [2.0], [3.0]]))
    out = segment_sum(v, np.array([0, 0, 1]), 2)
    assert np.array_equal(out.data, [[3.0], [3.0]])


def test_segment_sum_empty_segment_is_zero():
    v = Tensor(np.array([[1.0, 2.0]]))
    out = segment_sum(v, np.array([2]), 4)
    assert np.array_equal(out.data, [[0, 0], [0, 0], [1, 2], [0, 0]])


def test_segment_sum_linearity_exact():
    # dyadic values keep every partial sum exact, so linearity holds
    # bit-for-bit regardless of accumulation order
    rng = np.random.default_rng(3)
    a = rng.integers(-16, 16, size=(20, 4)) / 8.0
    b = rng.integers(-16, 16, size=(20, 4)) / 8.0
    ids = rng.integers(0, 5, size=20)
    lhs = segment_sum(Tensor(a + b), ids, 5).data
    rhs = segment_sum(Tensor(a), ids, 5).data + segment_sum(Tensor(b), ids, 5).data
    assert np.array_equal(lhs, rhs)


def test_matmul_gradient_against_finite_differences():
    rng = np.random.default_rng(0)
    a = parameter(rng.normal(size=(4, 3)))
    b = parameter(rng.normal(size=(3, 2)))
    err = finite_diff_check(lambda: sum_all(relu(matmul(a, b))), [a, b])
    assert err < 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_all_ops_chained_gradient(seed):
    rng = np.random.default_rng(seed)
    w1 = parameter(rng.normal(size=(6, 4)))
    b1 = parameter(rng.normal(size=4))
    w2 = parameter(rng.normal(size=(8, 5)))
    x = Tensor(rng.normal(size=(9, 6)))
    ids = rng.integers(0, 3, size=9)
    gather_idx = rng.integers(0, 3, size=7)
    labels = rng.integers(0, 5, size=7)

    def f():
        h = relu(add(matmul(x, w1), b1))
        pooled = segment_sum(h, ids, 3)
        spread = row_gather(pooled, gather_idx)
        both = concat([spread, spread], axis=1)
        return softmax_cross_entropy(matmul(both, w2), labels)

    assert finite_diff_check(f, [w1, b1, w2]) < 1e-6


def test_cross_entropy_uniform_logits():
    logits = Tensor(np.zeros((3, 5)))
    loss = softmax_cross_entropy(logits, np.array([0, 3, 4]))
    assert abs(float(loss.data) - math.log(5)) < 1e-9


def test_cross_entropy_large_margin_goes_to_zero():
    logits = np.zeros((2, 5))
    logits[0, 1] = 20.0
    logits[1, 4] = 20.0
    loss = softmax_cross_entropy(Tensor(logits), np.array([1, 4]))
    assert float(loss.data) < 1e-8


def test_cross_entropy_gradient():
    rng = np.random.default_rng(7)
    logits = parameter(rng.normal(size=(3, 5)))
    labels = np.array([0, 2, 4])
    err = finite_diff_check(lambda: softmax_cross_entropy(logits, labels), [logits])
    assert err < 1e-6


def test_cross_entropy_label_out_of_range():
    with pytest.raises(ValueError):
        softmax_cross_entropy(Tensor(np.zeros((2, 3))), np.array([0, 3]))


def test_backward_sum_gives_ones_and_disconnected_gives_nothing():
    w = parameter(np.arange(6.0).reshape(2, 3))
    orphan = parameter(np.ones(4))
    backward(sum_all(w))
    assert np.array_equal(w.grad, np.ones((2, 3)))
    # a parameter outside the graph accumulates nothing: its gradient is zero
    assert orphan.grad is None


def test_backward_requires_scalar_root():
    w = parameter(np.ones(3))
    with pytest.raises(ValueError):
        backward(relu(w))


def test_second_backward_without_reforward_raises():
    w = parameter(np.ones(3))
    loss = sum_all(w)
    backward(loss)
    with pytest.raises(RuntimeError):
        backward(loss)


def test_grad_accumulates_across_backwards():
    w = parameter(np.ones(3))
    backward(sum_all(w))
    backward(sum_all(w))
    assert np.array_equal(w.grad, 2 * np.ones(3))


def test_shape_mismatch_errors_name_shapes():
    with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
    with pytest.raises(ValueError, match="add shape mismatch"):
        add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))


def test_bias_row_add_gradient():
    rng = np.random.default_rng(11)
    x = Tensor(rng.normal(size=(5, 3)))
    bias = parameter(rng.normal(size=3))
    assert finite_diff_check(lambda: sum_all(relu(add(x, bias))), [bias]) < 1e-6


def test_adam_first_step_matches_bias_corrected_form():
    p = parameter(np.array([0.5]))
    state = AdamState.for_params([p], lr=1e-3)
    adam_step([p], [np.array([1.0])], state)
    delta = float(p.data[0]) - 0.5
    assert abs(delta + 1e-3) < 1e-6


def test_adam_zero_gradient_leaves_params():
    p = parameter(np.array([1.0, -2.0]))
    state = AdamState.for_params([p], lr=1e-2, weight_decay=0.0)
    adam_step([p], [np.zeros(2)], state)
    assert np.array_equal(p.data, [1.0, -2.0])


def _reference_adam(theta, steps, lr):
    """Independent straight-line Adam on f(t) = t^2 (gradient 2t)."""
    m = v = 0.0
    b1, b2, eps = 0.9, 0.999, 1e-8
    for t in range(1, steps + 1):
        g = 2.0 * theta
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
    return theta


def test_adam_converges_on_quadratic():
    lr, steps = 0.05, 100
    expected = _reference_adam(1.0, steps, lr)
    p = parameter(np.array([[1.0]]))
    state = AdamState.for_params([p], lr=lr)
    for _ in range(steps):
        zero_grads([p])
        backward(sum_all(matmul(p, p)))  # loss = theta^2, grad = 2 theta
        adam_step([p], [p.grad], state)
    assert abs(float(p.data[0, 0]) - expected) < 1e-12
    assert abs(float(p.data[0, 0])) < 0.01


def test_adam_weight_decay_enters_gradient():
    p = parameter(np.array([2.0]))
    state = AdamState.for_params([p], lr=1e-3, weight_decay=0.5)
    adam_step([p], [np.zeros(1)], state)
    # effective gradient is wd * theta = 1.0, so the step is about -lr
    assert abs((float(p.data[0]) - 2.0) + 1e-3) < 1e-6


def test_finite_diff_self_checks():
    w = parameter(np.array([1.5, -2.0]))
    assert finite_diff_check(lambda: sum_all(w), [w]) < 1e-10

    theta = parameter(np.array([[3.0]]))
    zero_grads([theta])
    backward(sum_all(matmul(theta, theta)))
    assert abs(float(theta.grad[0, 0]) - 6.0) < 1e-9


def test_forward_backward_deterministic():
    rng = np.random.default_rng(21)
    w = parameter(rng.normal(size=(5, 4)))
    x = rng.normal(size=(6, 5))
    labels = rng.integers(0, 4, size=6)

    def run():
        zero_grads([w])
        backward(softmax_cross_entropy(matmul(Tensor(x), w), labels))
        return w.grad.copy()

    assert np.array_equal(run(), run())
