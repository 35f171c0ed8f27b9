"""Minimal dense reverse-mode differentiation on float64 numpy arrays.

Exactly the operations the graph models need: matmul, add (with bias-row
broadcasting as the only broadcast form), relu, concat, segment_sum,
row_gather, sum_all and a fused softmax cross-entropy. Each op records its
inputs and a backward rule on the output tensor; backward() replays the
records in reverse topological order.

Everything is float64 so finite-difference checks are decisive. ReLU's
subgradient at 0 is pinned to 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class _Record:
    """One executed op: parent tensors plus the rule mapping the output
    adjoint to parent adjoints."""

    __slots__ = ("parents", "backward_fn")

    def __init__(self, parents, backward_fn):
        self.parents = parents
        self.backward_fn = backward_fn


class Tensor:
    """Dense float64 array that participates in the differentiation tape."""

    __slots__ = ("data", "requires_grad", "grad", "_ctx", "_backward_done")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._ctx: _Record | None = None
        self._backward_done = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self):
        tag = ", requires_grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{tag})"


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _tracked(t: Tensor) -> bool:
    return t.requires_grad or t._ctx is not None


def _result(data: np.ndarray, parents: list[Tensor], backward_fn) -> Tensor:
    out = Tensor(data)
    if any(_tracked(p) for p in parents):
        out._ctx = _Record(parents, backward_fn)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def bwd(g):
        return g @ bd.T, ad.T @ g

    return _result(ad @ bd, [a, b], bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; the second operand may be a bias row (d,) or (1, d)
    added to every row of an (N, d) first operand. No other broadcasting."""
    if a.shape == b.shape:
        return _result(a.data + b.data, [a, b], lambda g: (g, g))
    bias_shape = b.data.shape
    if a.data.ndim == 2 and bias_shape in ((a.shape[1],), (1, a.shape[1])):

        def bwd(g):
            gb = g.sum(axis=0)
            return g, gb.reshape(bias_shape)

        return _result(a.data + b.data, [a, b], bwd)
    raise ValueError(f"add shape mismatch: {a.shape} + {b.shape}")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), [a], lambda g: (g * mask,))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ValueError("concat of zero tensors")
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(np.concatenate([t.data for t in tensors], axis=axis), list(tensors), bwd)


def segment_sum(values: Tensor, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of values into num_segments buckets. segment_ids is a plain
    integer array (non-differentiable)."""
    ids = np.asarray(segment_ids, dtype=np.int64)
    if values.data.ndim != 2 or ids.shape != (values.shape[0],):
        raise ValueError(
            f"segment_sum expects (N, d) values and (N,) ids, got {values.shape} and {ids.shape}"
        )
    if len(ids) and (ids.min() < 0 or ids.max() >= num_segments):
        raise ValueError(f"segment id out of range [0, {num_segments})")
    out = np.zeros((num_segments, values.shape[1]))
    np.add.at(out, ids, values.data)
    return _result(out, [values], lambda g: (g[ids],))


def row_gather(values: Tensor, indices: np.ndarray) -> Tensor:
    idx = np.asarray(indices, dtype=np.int64)
    if values.data.ndim != 2:
        raise ValueError(f"row_gather expects (N, d) values, got {values.shape}")
    if len(idx) and (idx.min() < 0 or idx.max() >= values.shape[0]):
        raise ValueError("gather index out of range")
    n = values.shape[0]

    def bwd(g):
        acc = np.zeros((n, g.shape[1]))
        np.add.at(acc, idx, g)
        return (acc,)

    return _result(values.data[idx], [values], bwd)


def sum_all(a: Tensor) -> Tensor:
    shape = a.data.shape
    return _result(np.sum(a.data), [a], lambda g: (np.full(shape, g),))


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy between (N, C) logits and integer class labels,
    computed via the max-shifted log-sum-exp."""
    y = np.asarray(labels, dtype=np.int64)
    if logits.data.ndim != 2 or y.shape != (logits.shape[0],):
        raise ValueError(
            f"expected (N, C) logits and (N,) labels, got {logits.shape} and {y.shape}"
        )
    n, c = logits.data.shape
    if n == 0:
        raise ValueError("empty batch")
    if y.min() < 0 or y.max() >= c:
        raise ValueError(f"label out of range [0, {c})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    loss = (lse - z[np.arange(n), y]).mean()
    softmax = np.exp(z - lse[:, None])

    def bwd(g):
        grad = softmax.copy()
        grad[np.arange(n), y] -= 1.0
        return (grad * (g / n),)

    return _result(np.float64(loss), [logits], bwd)


def backward(loss: Tensor) -> None:
    """Populate .grad on every reachable requires_grad tensor.

    The recorded graph is single-use: a second backward on the same root
    (without re-running the forward pass) raises.
    """
    if loss.data.ndim != 0:
        raise ValueError(f"backward root must be scalar, got shape {loss.shape}")
    if loss._backward_done:
        raise RuntimeError("tape already consumed; re-run the forward pass")
    loss._backward_done = True

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        if node._ctx is not None:
            for p in node._ctx.parents:
                if id(p) not in seen:
                    stack.append((p, False))

    adjoint: dict[int, np.ndarray] = {id(loss): np.float64(1.0)}
    for node in reversed(order):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g.copy() if node.grad is None else node.grad + g
        if node._ctx is None:
            continue
        for parent, pg in zip(node._ctx.parents, node._ctx.backward_fn(g)):
            if not _tracked(parent):
                continue
            key = id(parent)
            if key in adjoint:
                adjoint[key] = adjoint[key] + pg
            else:
                adjoint[key] = pg


def zero_grads(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None


@dataclass
class AdamState:
    """Adam moments and hyperparameters for one parameter list."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor], lr=1e-3, weight_decay=0.0) -> "AdamState":
        s = cls(lr=lr, weight_decay=weight_decay)
        s.m = [np.zeros_like(p.data) for p in params]
        s.v = [np.zeros_like(p.data) for p in params]
        return s


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState) -> None:
    """Classic Adam with bias correction; weight decay enters as an L2 term
    added to the gradient (g <- g + wd * theta)."""
    if len(params) != len(state.m):
        raise ValueError("AdamState was initialized for a different parameter list")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ValueError(f"grad shape {g.shape} != param shape {p.data.shape}")
        if state.weight_decay:
            g = g + state.weight_decay * p.data
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def finite_diff_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    max_coords_per_param: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between reverse-mode and central-difference
    gradients of the deterministic scalar function f.

    With max_coords_per_param set, a seeded random subset of coordinates is
    probed per parameter (every parameter tensor is still covered). An
    absolute floor of 1e-8 applies: coordinates whose gradients agree to
    within 1e-8 absolute count as exact, since central differences at
    h=1e-5 carry truncation noise of that order around zero gradients.
    """
    zero_grads(params)
    backward(f())
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, grad in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = grad.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords_per_param is not None and flat.size > max_coords_per_param:
            gen = rng if rng is not None else np.random.default_rng(0)
            coords = gen.choice(flat.size, size=max_coords_per_param, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(f().data)
            flat[i] = orig - h
            f_minus = float(f().data)
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * h)
            diff = abs(fd - gflat[i])
            if diff > 1e-8:
                worst = max(worst, diff / max(abs(fd), abs(gflat[i])))
    return worst
