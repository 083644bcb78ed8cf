"""Tape-based reverse-mode differentiation over dense 2-D float64 arrays.

Only the handful of operations needed by the similarity heads are provided.
Operations take an optional ``tape``; when it is given and at least one input
requires a gradient, the operation is recorded so that :meth:`Tape.backward`
can propagate gradients through it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .exceptions import ContractError, NumericError, ShapeError

_EPS_CLAMP = 1e-12


class Tensor:
    """A 2-D float64 array with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"Tensor must be at most 2-D, got ndim={arr.ndim}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"


@dataclass
class _Node:
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]


class Tape:
    """Ordered record of operations. Not thread-safe; one trainer per tape."""

    def __init__(self) -> None:
        self.nodes: list[_Node] = []
        self._outputs: set[int] = set()

    def record(self, inputs, output, backward) -> None:
        self.nodes.append(_Node(tuple(inputs), output, backward))
        self._outputs.add(id(output))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into ``grad`` of every leaf that requires it.

        Leaf gradients add onto whatever is already stored; intermediate
        gradients live only for the duration of this call, so running
        ``backward`` twice after zeroing the leaves gives identical results.
        """
        if loss.shape != (1, 1):
            raise ContractError(f"loss must be a 1x1 scalar, got shape {loss.shape}")
        if id(loss) not in self._outputs:
            raise ContractError("loss was not produced on this tape")

        grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
        for node in reversed(self.nodes):
            g_out = grads.pop(id(node.output), None)
            if g_out is None:
                continue
            for inp, g in zip(node.inputs, node.backward(g_out)):
                if g is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in self._outputs:
                    prev = grads.get(key)
                    grads[key] = g if prev is None else prev + g
                else:
                    inp.grad = g.copy() if inp.grad is None else inp.grad + g


def _track(tape: Tape | None, inputs: Sequence[Tensor]) -> bool:
    return tape is not None and any(t.requires_grad for t in inputs)


def _result(data: np.ndarray, tape, inputs, backward) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NumericError("operation produced a non-finite value")
    tracked = _track(tape, inputs)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = tracked
    out.grad = None
    out.name = None
    if tracked:
        tape.record(inputs, out, backward)
    return out


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def matmul(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} x {b.shape}")

    def back(g):
        return g @ b.data.T, a.data.T @ g

    return _result(a.data @ b.data, tape, (a, b), back)


def add(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    _same_shape(a, b, "add")
    return _result(a.data + b.data, tape, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    _same_shape(a, b, "sub")
    return _result(a.data - b.data, tape, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    _same_shape(a, b, "mul")
    return _result(a.data * b.data, tape, (a, b), lambda g: (g * b.data, g * a.data))


def square(a: Tensor, tape: Tape | None = None) -> Tensor:
    return _result(a.data * a.data, tape, (a,), lambda g: (2.0 * a.data * g,))


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul}


def elementwise(op: str, a: Tensor, b: Tensor | None = None, tape: Tape | None = None) -> Tensor:
    if op == "square":
        if b is not None:
            raise ContractError("square is unary")
        return square(a, tape)
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ContractError(f"unknown elementwise op {op!r}") from None
    if b is None:
        raise ContractError(f"{op} needs two operands")
    return fn(a, b, tape)


def add_row(a: Tensor, row: Tensor, tape: Tape | None = None) -> Tensor:
    """Add a 1 x n bias row to every row of an m x n tensor."""
    if row.shape[0] != 1 or row.shape[1] != a.shape[1]:
        raise ShapeError(f"add_row: cannot add {row.shape} to {a.shape}")
    return _result(a.data + row.data, tape, (a, row), lambda g: (g, g.sum(axis=0, keepdims=True)))


def relu(a: Tensor, tape: Tape | None = None) -> Tensor:
    mask = a.data > 0.0
    return _result(np.where(mask, a.data, 0.0), tape, (a,), lambda g: (g * mask,))


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor, tape: Tape | None = None) -> Tensor:
    s = stable_sigmoid(a.data)
    return _result(s, tape, (a,), lambda g: (g * s * (1.0 - s),))


def concat(parts: Sequence[Tensor], tape: Tape | None = None) -> Tensor:
    """Concatenate along columns (the feature axis)."""
    rows = {p.shape[0] for p in parts}
    if len(rows) != 1:
        raise ShapeError(f"concat: row counts differ {sorted(rows)}")
    widths = [p.shape[1] for p in parts]
    bounds = np.cumsum([0] + widths)

    def back(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _result(np.concatenate([p.data for p in parts], axis=1), tape, tuple(parts), back)


def mean(a: Tensor, tape: Tape | None = None) -> Tensor:
    n = a.data.size
    return _result(
        np.array([[a.data.sum() / n]]), tape, (a,), lambda g: (np.full(a.shape, g[0, 0] / n),)
    )


def _clamp(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    inside = (p > _EPS_CLAMP) & (p < 1.0 - _EPS_CLAMP)
    return np.clip(p, _EPS_CLAMP, 1.0 - _EPS_CLAMP), inside


def focal_terms(p: np.ndarray, y: np.ndarray, alpha: float, gamma: float):
    """Per-sample focal loss and its derivative w.r.t. the clamped probability."""
    pc, inside = _clamp(p)
    pos = y == 1
    pt = np.where(pos, pc, 1.0 - pc)
    at = np.where(pos, alpha, 1.0 - alpha)
    log_pt = np.log(pt)
    one_m = 1.0 - pt
    loss = -at * one_m**gamma * log_pt
    if gamma == 0.0:
        dpt = -at / pt
    else:
        dpt = at * (gamma * one_m ** (gamma - 1.0) * log_pt - one_m**gamma / pt)
    dp = np.where(pos, dpt, -dpt) * inside
    return loss, dp


def bce_terms(p: np.ndarray, y: np.ndarray):
    pc, inside = _clamp(p)
    loss = -y * np.log(pc) - (1.0 - y) * np.log(1.0 - pc)
    dp = (-y / pc + (1.0 - y) / (1.0 - pc)) * inside
    return loss, dp


def binary_loss(
    p: Tensor,
    y: np.ndarray,
    kind: str = "bce",
    alpha: float = 0.25,
    gamma: float = 2.0,
    tape: Tape | None = None,
) -> Tensor:
    """Per-sample BCE or focal loss of probabilities ``p`` (m x 1) against 0/1 labels."""
    y = np.asarray(y, dtype=np.float64).reshape(p.shape)
    if kind == "bce":
        loss, dp = bce_terms(p.data, y)
    elif kind == "focal":
        loss, dp = focal_terms(p.data, y, alpha, gamma)
    else:
        raise ContractError(f"unknown loss kind {kind!r}")
    return _result(loss, tape, (p,), lambda g: (g * dp,))


def finite_diff_check(
    f: Callable[[Tape | None], Tensor],
    params: Tensor | Sequence[Tensor],
    h: float = 1e-5,
    n_samples: int | None = None,
    seed: int = 0,
) -> float:
    """Compare tape gradients of ``f`` with central differences.

    ``f(tape)`` must build a scalar loss from ``params``; it is called once
    with a tape for the analytic gradient and then with ``None`` for every
    perturbed evaluation. With ``n_samples`` only that many randomly chosen
    coordinates (per parameter tensor) are probed.

    Returns the max over probed coordinates of
    ``|analytic - numeric| / max(1, |analytic|)``.
    """
    if h <= 0:
        raise ContractError("h must be positive")
    if isinstance(params, Tensor):
        params = [params]
    for p in params:
        p.zero_grad()
    tape = Tape()
    loss = f(tape)
    if loss.requires_grad:
        tape.backward(loss)
    rng = np.random.default_rng(seed)

    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if n_samples is not None and n_samples < flat.size:
            idx = rng.choice(flat.size, size=n_samples, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up = f(None).item()
            flat[i] = orig - h
            down = f(None).item()
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            a = analytic.reshape(-1)[i]
            if not (np.isfinite(numeric) and np.isfinite(a)):
                raise NumericError(f"non-finite gradient for {p.name or 'param'}[{i}]")
            worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    return worst
