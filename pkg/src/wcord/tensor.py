"""Dense float64 arrays with a reverse-mode gradient tape.

Tensors wrap C-contiguous (row-major) numpy arrays. Operations whose inputs
are attached to a Tape append a record (output, parents, pull function) in
execution order; backward() replays the records in reverse. Anything that
does not need derivatives (the transport solver, power iteration, data
generation) works on raw numpy arrays and never touches a tape.

finite_difference_grad is the gradient oracle for the test suite: central
differences through an arbitrary Tensor -> scalar function. It shares no
code with the tape machinery.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .errors import ContractError, DomainError, ShapeError


class Tape:
    """Ordered record of primitive operations, replayed in reverse by backward()."""

    def __init__(self) -> None:
        self._records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._tensors: list[Tensor] = []
        self._seen: set[int] = set()

    def __len__(self) -> int:
        return len(self._records)

    def watch(self, t: "Tensor") -> None:
        if id(t) not in self._seen:
            self._seen.add(id(t))
            self._tensors.append(t)

    def record(self, out: "Tensor", parents: tuple["Tensor", ...], pull: Callable) -> None:
        self.watch(out)
        for p in parents:
            self.watch(p)
        self._records.append((out, parents, pull))


class Tensor:
    """Dense row-major float64 array, optionally attached to a Tape."""

    __slots__ = ("data", "tape", "grad")

    def __init__(self, data, tape: Tape | None = None):
        arr = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
        self.data = arr
        self.tape = tape
        self.grad: np.ndarray | None = None
        if tape is not None:
            tape.watch(self)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, tape={'yes' if self.tape else 'no'})"

    # operator sugar; the module-level functions do the real work
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __neg__(self):
        return neg(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _pick_tape(*tensors: Tensor) -> Tape | None:
    tape = None
    for t in tensors:
        if t.tape is not None:
            if tape is not None and tape is not t.tape:
                raise ContractError("operands belong to different tapes")
            tape = t.tape
    return tape


def _make(out_data: np.ndarray, parents: tuple[Tensor, ...], pull: Callable) -> Tensor:
    tape = _pick_tape(*parents)
    out = Tensor(out_data, tape)
    if tape is not None:
        tape.record(out, parents, pull)
    return out


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # collapse a broadcast gradient back onto a size-1 operand
    if grad.shape == shape:
        return grad
    return np.full(shape, grad.sum(), dtype=np.float64)


def _binary_shapes(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or a.size == 1 or b.size == 1:
        return
    raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are neither equal nor scalar-broadcastable")


# ---------------------------------------------------------------------------
# elementwise primitives

def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b, "add")

    def pull(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return _make(a.data + b.data, (a, b), pull)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b, "sub")

    def pull(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return _make(a.data - b.data, (a, b), pull)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b, "mul")

    def pull(g):
        return _reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), pull)


def div(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b, "div")
    if np.any(b.data == 0.0):
        raise DomainError("div: divisor contains zero")

    def pull(g):
        return _reduce_to(g / b.data, a.shape), _reduce_to(-g * a.data / (b.data ** 2), b.shape)

    return _make(a.data / b.data, (a, b), pull)


def exp(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out_data = np.exp(a.data)

    def pull(g):
        return (g * out_data,)

    return _make(out_data, (a,), pull)


def log(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    if not np.all(a.data > 0.0):
        raise DomainError("log: input must be strictly positive")

    def pull(g):
        return (g / a.data,)

    return _make(np.log(a.data), (a,), pull)


def relu(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0.0  # gradient at exactly 0 is defined as 0

    def pull(g):
        return (g * mask,)

    return _make(a.data * mask, (a,), pull)


def neg(a: Tensor) -> Tensor:
    a = _as_tensor(a)

    def pull(g):
        return (-g,)

    return _make(-a.data, (a,), pull)


def sqrt(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data < 0.0):
        raise DomainError("sqrt: input must be nonnegative")
    out_data = np.sqrt(a.data)

    def pull(g):
        return (g / (2.0 * out_data),)

    return _make(out_data, (a,), pull)


def sigmoid(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    x = a.data
    out_data = np.where(x >= 0.0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def pull(g):
        return (g * out_data * (1.0 - out_data),)

    return _make(out_data, (a,), pull)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    a = _as_tensor(a)
    mask = (a.data > lo) & (a.data < hi)

    def pull(g):
        return (g * mask,)

    return _make(np.clip(a.data, lo, hi), (a,), pull)


# ---------------------------------------------------------------------------
# linear algebra and structure

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul: expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree, {a.shape} x {b.shape}")

    def pull(g):
        return g @ b.data.T, a.data.T @ g

    return _make(a.data @ b.data, (a, b), pull)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    a = _as_tensor(a)
    if int(np.prod(shape)) != a.size:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}")

    def pull(g):
        return (g.reshape(a.shape),)

    return _make(a.data.reshape(shape).copy(), (a,), pull)


def transpose(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: expects a 2-d tensor, got {a.shape}")

    def pull(g):
        return (np.ascontiguousarray(g.T),)

    return _make(np.ascontiguousarray(a.data.T), (a,), pull)


def tsum(a: Tensor) -> Tensor:
    a = _as_tensor(a)

    def pull(g):
        return (np.full_like(a.data, float(g.reshape(-1)[0])),)

    return _make(np.array(a.data.sum()), (a,), pull)


def tmean(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    n = a.data.size

    def pull(g):
        return (np.full_like(a.data, float(g.reshape(-1)[0]) / n),)

    return _make(np.array(a.data.mean()), (a,), pull)


def row_sum(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"row_sum: expects a 2-d tensor, got {a.shape}")

    def pull(g):
        return (np.repeat(g[:, None], a.shape[1], axis=1),)

    return _make(a.data.sum(axis=1), (a,), pull)


def scale_rows(a: Tensor, s: Tensor) -> Tensor:
    """Multiply row i of `a` by s[i]."""
    a, s = _as_tensor(a), _as_tensor(s)
    if a.data.ndim != 2 or s.data.ndim != 1 or s.shape[0] != a.shape[0]:
        raise ShapeError(f"scale_rows: got {a.shape} and {s.shape}")

    def pull(g):
        return g * s.data[:, None], (g * a.data).sum(axis=1)

    return _make(a.data * s.data[:, None], (a, s), pull)


def add_rowvec(a: Tensor, b: Tensor) -> Tensor:
    """Add vector b to every row of a."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 1 or b.shape[0] != a.shape[1]:
        raise ShapeError(f"add_rowvec: got {a.shape} and {b.shape}")

    def pull(g):
        return g, g.sum(axis=0)

    return _make(a.data + b.data[None, :], (a, b), pull)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols: got {a.shape} and {b.shape}")
    na = a.shape[1]

    def pull(g):
        return np.ascontiguousarray(g[:, :na]), np.ascontiguousarray(g[:, na:])

    return _make(np.concatenate([a.data, b.data], axis=1), (a, b), pull)


def repeat_rows(a: Tensor, times: int) -> Tensor:
    """Tile each row `times` times: row i of the output block k is row i of a."""
    a = _as_tensor(a)
    if a.data.ndim != 2 or times < 1:
        raise ShapeError(f"repeat_rows: got {a.shape}, times={times}")
    n = a.shape[0]

    def pull(g):
        return (g.reshape(n, times, a.shape[1]).sum(axis=1),)

    return _make(np.repeat(a.data, times, axis=0), (a,), pull)


def softmax_rows(z: Tensor, temperature: float = 1.0) -> Tensor:
    """Row-wise softmax of z / temperature, stabilized by row-max subtraction."""
    z = _as_tensor(z)
    if z.data.ndim != 2:
        raise ShapeError(f"softmax_rows: expects a 2-d tensor, got {z.shape}")
    if not temperature > 0.0:
        raise ContractError(f"softmax_rows: temperature must be positive, got {temperature}")
    scaled = z.data / temperature
    scaled = scaled - scaled.max(axis=1, keepdims=True)
    e = np.exp(scaled)
    p = e / e.sum(axis=1, keepdims=True)

    def pull(g):
        dot = (g * p).sum(axis=1, keepdims=True)
        return (p * (g - dot) / temperature,)

    return _make(p, (z,), pull)


# ---------------------------------------------------------------------------
# reverse pass and the finite-difference oracle

def backward(loss: Tensor) -> dict[int, np.ndarray]:
    """Populate .grad for every tensor on the loss's tape.

    Returns a map from id(tensor) to its gradient array. The loss must be a
    tape-tracked single-element tensor.
    """
    if loss.tape is None:
        raise ContractError("backward: loss is not attached to a tape")
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
    tape = loss.tape
    for t in tape._tensors:
        t.grad = np.zeros_like(t.data)
    loss.grad = np.ones_like(loss.data)
    for out, parents, pull in reversed(tape._records):
        g = out.grad
        if g is None or not g.any():
            continue
        for parent, pg in zip(parents, pull(g)):
            parent.grad = parent.grad + pg
    return {id(t): t.grad for t in tape._tensors}


def finite_difference_grad(f: Callable[[Tensor], "Tensor | float"], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar-valued f at x.

    Independent of the tape machinery; used as the oracle in gradient tests.
    """
    base = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64).copy()
    if not h > 0.0:
        raise ContractError("finite_difference_grad: h must be positive")

    def value(arr):
        out = f(Tensor(arr))
        return out.item() if isinstance(out, Tensor) else float(out)

    grad = np.zeros_like(base)
    flat = grad.reshape(-1)
    for i in range(base.size):
        plus = base.copy()
        minus = base.copy()
        plus.reshape(-1)[i] += h
        minus.reshape(-1)[i] -= h
        flat[i] = (value(plus) - value(minus)) / (2.0 * h)
    return grad


def parameters_on(tape: Tape, params: Iterable[Tensor]) -> None:
    """Attach long-lived parameter tensors to a fresh step tape."""
    for p in params:
        p.tape = tape
        p.grad = None
        tape.watch(p)


def detach_all(params: Iterable[Tensor]) -> None:
    for p in params:
        p.tape = None
