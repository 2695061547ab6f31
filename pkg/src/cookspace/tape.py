"""Reverse-mode automatic differentiation over dense float64 arrays.

A ``Tape`` records every differentiable operation in execution order;
``backward`` replays it once in reverse, accumulating gradients into the
leaves. Leaves are created from trainable parameters (see ``params``);
plain numpy arrays and Python numbers pass through any op as constants.

Every op accepts ``tape=None``, in which case it computes the plain
forward value and returns a numpy array. This is the inference path: no
nodes, no closures, no recording.

The op set is deliberately small: affine, tanh, sigmoid, elementwise
add/subtract/multiply, concat, mean over an axis, sum, squared norm,
l2 normalization and relu. Everything downstream (both encoder branches
and the ranking loss) is composed from these.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .exceptions import (
    ContractError,
    DegenerateVectorError,
    DimensionError,
    OracleInvalidError,
)

Array = np.ndarray

# Norms at or below this are treated as degenerate in l2_normalize.
NORM_EPSILON = 1e-12


class Node:
    """One tape-recorded value: forward result plus gradient buffer.

    ``grad`` is allocated lazily on first accumulation, except for
    parameter leaves, which are created with ``grad`` bound to the
    parameter's persistent buffer so accumulation lands there directly.
    """

    __slots__ = ("value", "grad", "_backward")

    def __init__(self, value: Array, grad: Array | None = None):
        self.value = value
        self.grad = grad
        self._backward: Callable[[Array], None] | None = None

    def add_grad(self, delta: Array) -> None:
        if self.grad is None:
            self.grad = np.array(delta, dtype=np.float64, copy=True)
        else:
            self.grad += delta

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        return f"Node(shape={self.value.shape}, value={self.value!r})"


class Tape:
    """Ordered record of executed ops, replayed exactly once in reverse."""

    def __init__(self):
        self._nodes: list[Node] = []
        self._consumed = False

    def record(self, node: Node, backward: Callable[[Array], None]) -> None:
        if self._consumed:
            raise ContractError("tape already consumed by backward")
        node._backward = backward
        self._nodes.append(node)

    def __len__(self) -> int:
        return len(self._nodes)


def value_of(x) -> Array:
    """Forward value of a node, or the array form of a constant."""
    if isinstance(x, Node):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(delta: Array, shape: tuple[int, ...]) -> Array:
    """Reduce a broadcasted gradient back to the operand's shape."""
    extra = delta.ndim - len(shape)
    if extra > 0:
        delta = delta.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and delta.shape[i] != 1)
    if axes:
        delta = delta.sum(axis=axes, keepdims=True)
    return delta


def backward(tape: Tape, loss: Node, loss_seed: float = 1.0) -> None:
    """Accumulate d(loss)/d(leaf) for every leaf feeding ``loss``.

    The tape is consumed: a second backward (or further recording) on it
    raises. Gradients add onto whatever the leaves' buffers already hold,
    so two forward/backward rounds without zeroing double them exactly.
    """
    if tape._consumed:
        raise ContractError("tape already consumed by backward")
    if not tape._nodes:
        raise ContractError("backward on an empty tape")
    if loss.value.ndim != 0:
        raise ContractError(f"loss must be scalar, got shape {loss.value.shape}")
    tape._consumed = True
    loss.add_grad(np.float64(loss_seed))
    for node in reversed(tape._nodes):
        if node.grad is not None and node._backward is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# ops


def _emit(tape: Tape | None, value: Array, backward_fn: Callable[[Array], None]):
    if tape is None:
        return value
    out = Node(value)
    tape.record(out, backward_fn)
    return out


def affine(weight, bias, x, tape: Tape | None):
    """W @ x + b for a [m, n] weight, [m] bias and [n] input."""
    w_val, b_val, x_val = value_of(weight), value_of(bias), value_of(x)
    if w_val.ndim != 2 or x_val.ndim != 1 or b_val.ndim != 1:
        raise DimensionError(
            f"affine expects matrix/vector/vector operands, got shapes "
            f"{w_val.shape}, {b_val.shape}, {x_val.shape}"
        )
    if w_val.shape[1] != x_val.shape[0] or w_val.shape[0] != b_val.shape[0]:
        raise DimensionError(
            f"affine shapes do not conform: weight {w_val.shape}, "
            f"bias {b_val.shape}, input {x_val.shape}"
        )
    value = w_val @ x_val + b_val

    def bwd(g: Array) -> None:
        if isinstance(weight, Node):
            weight.add_grad(np.outer(g, x_val))
        if isinstance(bias, Node):
            bias.add_grad(g)
        if isinstance(x, Node):
            x.add_grad(w_val.T @ g)

    return _emit(tape, value, bwd)


def tanh(x, tape: Tape | None):
    x_val = value_of(x)
    value = np.tanh(x_val)

    def bwd(g: Array) -> None:
        if isinstance(x, Node):
            x.add_grad((1.0 - value * value) * g)

    return _emit(tape, value, bwd)


def sigmoid(x, tape: Tape | None):
    x_val = value_of(x)
    value = 1.0 / (1.0 + np.exp(-x_val))

    def bwd(g: Array) -> None:
        if isinstance(x, Node):
            x.add_grad(value * (1.0 - value) * g)

    return _emit(tape, value, bwd)


def relu(x, tape: Tape | None):
    """max(0, x) elementwise; the subgradient at 0 is taken as 0."""
    x_val = value_of(x)
    mask = x_val > 0.0
    value = np.where(mask, x_val, 0.0)

    def bwd(g: Array) -> None:
        if isinstance(x, Node):
            x.add_grad(np.where(mask, g, 0.0))

    return _emit(tape, value, bwd)


def add(a, b, tape: Tape | None):
    a_val, b_val = value_of(a), value_of(b)
    value = a_val + b_val

    def bwd(g: Array) -> None:
        if isinstance(a, Node):
            a.add_grad(_unbroadcast(g, a_val.shape))
        if isinstance(b, Node):
            b.add_grad(_unbroadcast(g, b_val.shape))

    return _emit(tape, value, bwd)


def subtract(a, b, tape: Tape | None):
    a_val, b_val = value_of(a), value_of(b)
    value = a_val - b_val

    def bwd(g: Array) -> None:
        if isinstance(a, Node):
            a.add_grad(_unbroadcast(g, a_val.shape))
        if isinstance(b, Node):
            b.add_grad(_unbroadcast(-g, b_val.shape))

    return _emit(tape, value, bwd)


def multiply(a, b, tape: Tape | None):
    a_val, b_val = value_of(a), value_of(b)
    value = a_val * b_val

    def bwd(g: Array) -> None:
        if isinstance(a, Node):
            a.add_grad(_unbroadcast(g * b_val, a_val.shape))
        if isinstance(b, Node):
            b.add_grad(_unbroadcast(g * a_val, b_val.shape))

    return _emit(tape, value, bwd)


def concat(parts: Sequence, tape: Tape | None):
    """Concatenate vectors (scalars are lifted to length 1) into one vector."""
    if not parts:
        raise ContractError("concat of an empty sequence")
    values = [np.atleast_1d(value_of(p)) for p in parts]
    for p, v in zip(parts, values):
        if v.ndim != 1:
            raise DimensionError(f"concat operand has shape {value_of(p).shape}")
    value = np.concatenate(values)
    offsets = np.cumsum([0] + [v.shape[0] for v in values])

    def bwd(g: Array) -> None:
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if isinstance(part, Node):
                piece = g[lo:hi]
                part.add_grad(piece if part.value.ndim else piece[0])

    return _emit(tape, value, bwd)


def mean_axis(x, axis: int, tape: Tape | None):
    x_val = value_of(x)
    if not -x_val.ndim <= axis < x_val.ndim:
        raise DimensionError(f"axis {axis} out of range for shape {x_val.shape}")
    n = x_val.shape[axis]
    value = x_val.mean(axis=axis)

    def bwd(g: Array) -> None:
        if isinstance(x, Node):
            x.add_grad(np.expand_dims(g, axis).repeat(n, axis=axis) / n)

    return _emit(tape, value, bwd)


def sum_all(x, tape: Tape | None):
    x_val = value_of(x)
    value = np.float64(x_val.sum())

    def bwd(g: Array) -> None:
        if isinstance(x, Node):
            x.add_grad(np.full_like(x_val, g))

    return _emit(tape, np.asarray(value), bwd)


def squared_norm(v, tape: Tape | None):
    """Sum of squared entries, as a scalar."""
    v_val = value_of(v)
    value = np.asarray(np.float64(np.dot(v_val.ravel(), v_val.ravel())))

    def bwd(g: Array) -> None:
        if isinstance(v, Node):
            v.add_grad(2.0 * g * v_val)

    return _emit(tape, value, bwd)


def l2_normalize(v, tape: Tape | None):
    """v / ||v||, rejecting norms at or below NORM_EPSILON."""
    v_val = value_of(v)
    if v_val.ndim != 1:
        raise DimensionError(f"l2_normalize expects a vector, got shape {v_val.shape}")
    norm = float(np.sqrt(np.dot(v_val, v_val)))
    if not norm > NORM_EPSILON:
        raise DegenerateVectorError(f"cannot normalize vector with norm {norm!r}")
    value = v_val / norm

    def bwd(g: Array) -> None:
        if isinstance(v, Node):
            v.add_grad((g - value * np.dot(value, g)) / norm)

    return _emit(tape, value, bwd)


def grad_check(f, params, step: float = 1e-5) -> float:
    """Compare analytic gradients of ``f`` against central differences.

    ``f(params, tape)`` must build its computation on ``tape`` and return
    the scalar loss node (or value when ``tape`` is None); it must be
    deterministic, which is verified with a repeated evaluation. Frozen
    parameters are constants of ``f`` and are not perturbed.

    Returns the maximum over all trainable scalars of
    |analytic - central| / max(|analytic|, |central|, 1e-8).
    """
    if step <= 0:
        raise ContractError(f"step must be positive, got {step}")

    def evaluate() -> float:
        result = f(params, None)
        return float(value_of(result))

    first, second = evaluate(), evaluate()
    if first != second or not np.isfinite(first):
        raise OracleInvalidError(
            f"function is not deterministic: {first!r} != {second!r}"
        )

    params.zero_grads()
    tape = Tape()
    loss = f(params, tape)
    backward(tape, loss)

    worst = 0.0
    for entry in params.trainable():
        analytic = entry.grad
        flat_value = entry.value.reshape(-1)
        flat_analytic = analytic.reshape(-1)
        for i in range(flat_value.shape[0]):
            original = flat_value[i]
            flat_value[i] = original + step
            plus = evaluate()
            flat_value[i] = original - step
            minus = evaluate()
            flat_value[i] = original
            central = (plus - minus) / (2.0 * step)
            a = float(flat_analytic[i])
            err = abs(a - central) / max(abs(a), abs(central), 1e-8)
            worst = max(worst, err)
    params.zero_grads()
    return worst
