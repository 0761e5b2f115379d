"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray plus an optional gradient buffer. Differentiable
ops build new tensors that remember their parents and a backward closure;
``backward()`` on a scalar walks the recorded graph once in reverse
topological order, accumulating gradients additively so fan-out just works.

Conventions fixed here and relied on throughout the package:
  * dtype is float32 unless float64 is requested explicitly; binary ops
    require matching dtypes (scalars adopt the tensor's dtype)
  * argmax/max ties resolve to the lowest index; elementwise maximum ties
    take the first argument
  * clamp passes gradient through at the boundaries (mask includes equality)
  * forward ops never mutate their inputs
"""

import contextlib

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested op."""


class DomainError(ValueError):
    """An op was evaluated outside its numeric domain (log of <= 0, etc.)."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (pure-numpy forward passes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_float_dtype(dtype):
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise TypeError(f"only float32/float64 tensors are supported, got {dt}")
    return dt


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        dt = _as_float_dtype(np.float32 if dtype is None else dtype)
        self.data = np.array(data, dtype=dt)  # always copies: tensors own their storage
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None

    @classmethod
    def from_op(cls, data: np.ndarray, parents, backward):
        """Build a non-leaf tensor. `backward(g)` must accumulate into parents."""
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    # ---- introspection ----

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """A new leaf sharing no graph history (data is copied)."""
        return Tensor(self.data, requires_grad=False, dtype=self.dtype)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}{flag})"

    # ---- gradient plumbing ----

    def accumulate_grad(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Reverse pass seeded with d(self)/d(self) = 1. Scalar roots only."""
        if self.data.size != 1:
            raise ShapeError(f"backward() root must be scalar, got shape {self.shape}")
        if not self.requires_grad:
            raise ValueError("backward() on a tensor that does not require grad")
        tape = Tape.from_root(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(tape.nodes):
            if node._backward is not None:
                node._backward(node.grad)

    # ---- binary elementwise ----

    def _coerce(self, other, opname):
        """Return (other_tensor_or_None, other_data). None marks a python scalar."""
        if isinstance(other, Tensor):
            if other.dtype != self.dtype:
                raise TypeError(
                    f"{opname}: mixed dtypes {self.dtype.name} vs {other.dtype.name}"
                )
            if other.shape != self.shape:
                raise ShapeError(
                    f"{opname}: shape mismatch {self.shape} vs {other.shape}"
                )
            return other, other.data
        if isinstance(other, (int, float)):
            return None, self.dtype.type(other)
        raise TypeError(f"{opname}: unsupported operand type {type(other).__name__}")

    def __add__(self, other):
        ot, od = self._coerce(other, "add")
        out_data = self.data + od
        parents = (self,) if ot is None else (self, ot)

        def backward(g):
            self.accumulate_grad(g)
            if ot is not None:
                ot.accumulate_grad(g)

        return Tensor.from_op(out_data, parents, backward)

    __radd__ = __add__

    def __sub__(self, other):
        ot, od = self._coerce(other, "sub")
        out_data = self.data - od
        parents = (self,) if ot is None else (self, ot)

        def backward(g):
            self.accumulate_grad(g)
            if ot is not None:
                ot.accumulate_grad(-g)

        return Tensor.from_op(out_data, parents, backward)

    def __rsub__(self, other):
        _, od = self._coerce(other, "sub")
        out_data = od - self.data

        def backward(g):
            self.accumulate_grad(-g)

        return Tensor.from_op(out_data, (self,), backward)

    def __mul__(self, other):
        ot, od = self._coerce(other, "mul")
        out_data = self.data * od
        parents = (self,) if ot is None else (self, ot)
        a_data = self.data

        def backward(g):
            self.accumulate_grad(g * od)
            if ot is not None:
                ot.accumulate_grad(g * a_data)

        return Tensor.from_op(out_data, parents, backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        ot, od = self._coerce(other, "div")
        if np.any(od == 0):
            raise DomainError("div: division by zero")
        out_data = self.data / od
        parents = (self,) if ot is None else (self, ot)
        a_data = self.data

        def backward(g):
            self.accumulate_grad(g / od)
            if ot is not None:
                ot.accumulate_grad(-g * a_data / (od * od))

        return Tensor.from_op(out_data, parents, backward)

    def __rtruediv__(self, other):
        _, od = self._coerce(other, "div")
        if np.any(self.data == 0):
            raise DomainError("div: division by zero")
        out_data = od / self.data
        a_data = self.data

        def backward(g):
            self.accumulate_grad(-g * od / (a_data * a_data))

        return Tensor.from_op(out_data, (self,), backward)

    def __neg__(self):
        out_data = -self.data

        def backward(g):
            self.accumulate_grad(-g)

        return Tensor.from_op(out_data, (self,), backward)

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("pow: exponent must be a python scalar")
        e = float(exponent)
        a_data = self.data
        out_data = a_data ** self.dtype.type(e)
        if not np.all(np.isfinite(out_data)):
            raise DomainError(f"pow: non-finite result for exponent {e}")

        def backward(g):
            if e == 0.0:
                return
            self.accumulate_grad(g * self.dtype.type(e) * a_data ** self.dtype.type(e - 1.0))

        return Tensor.from_op(out_data, (self,), backward)

    def maximum(self, other):
        """Elementwise max; on ties the gradient goes to self (first argument)."""
        ot, od = self._coerce(other, "maximum")
        take_self = self.data >= od
        out_data = np.where(take_self, self.data, od)
        parents = (self,) if ot is None else (self, ot)

        def backward(g):
            self.accumulate_grad(g * take_self)
            if ot is not None:
                ot.accumulate_grad(g * ~take_self)

        return Tensor.from_op(out_data, parents, backward)

    def clamp(self, lo: float, hi: float):
        """Clip to [lo, hi]; gradient passes through wherever lo <= x <= hi."""
        if not lo <= hi:
            raise ValueError(f"clamp: need lo <= hi, got [{lo}, {hi}]")
        a_data = self.data
        out_data = np.clip(a_data, self.dtype.type(lo), self.dtype.type(hi))
        inside = (a_data >= lo) & (a_data <= hi)

        def backward(g):
            self.accumulate_grad(g * inside)

        return Tensor.from_op(out_data, (self,), backward)

    # ---- unary transcendental ----

    def log(self):
        a_data = self.data
        if np.any(a_data <= 0):
            raise DomainError("log: input must be strictly positive")
        out_data = np.log(a_data)

        def backward(g):
            self.accumulate_grad(g / a_data)

        return Tensor.from_op(out_data, (self,), backward)

    def exp(self):
        with np.errstate(over="ignore"):  # overflow becomes the error below
            out_data = np.exp(self.data)
        if not np.all(np.isfinite(out_data)):
            raise DomainError("exp: overflow to non-finite value")

        def backward(g):
            self.accumulate_grad(g * out_data)

        return Tensor.from_op(out_data, (self,), backward)

    # ---- shape ----

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        new_size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if new_size != self.size or any(d <= 0 for d in shape):
            raise ShapeError(f"reshape: cannot view {self.shape} as {shape}")
        old_shape = self.shape
        out_data = self.data.reshape(shape)

        def backward(g):
            self.accumulate_grad(g.reshape(old_shape))

        return Tensor.from_op(out_data, (self,), backward)

    def matmul(self, other):
        if not isinstance(other, Tensor):
            raise TypeError("matmul: operand must be a Tensor")
        if other.dtype != self.dtype:
            raise TypeError(f"matmul: mixed dtypes {self.dtype.name} vs {other.dtype.name}")
        if self.ndim != 2 or other.ndim != 2:
            raise ShapeError("matmul: both operands must be 2-D")
        if self.shape[1] != other.shape[0]:
            raise ShapeError(f"matmul: inner dims differ, {self.shape} @ {other.shape}")
        a, b = self, other
        out_data = a.data @ b.data

        def backward(g):
            a.accumulate_grad(g @ b.data.T)
            b.accumulate_grad(a.data.T @ g)

        return Tensor.from_op(out_data, (a, b), backward)

    __matmul__ = matmul

    # ---- reductions ----

    def _check_axis(self, axis, opname):
        if axis is not None and not (-self.ndim <= axis < self.ndim):
            raise ShapeError(f"{opname}: axis {axis} out of range for shape {self.shape}")

    def sum(self, axis: int | None = None):
        self._check_axis(axis, "sum")
        shape = self.shape
        out_data = self.data.sum(axis=axis)

        def backward(g):
            if axis is None:
                self.accumulate_grad(np.broadcast_to(g, shape))
            else:
                self.accumulate_grad(np.broadcast_to(np.expand_dims(g, axis), shape))

        return Tensor.from_op(out_data, (self,), backward)

    def mean(self, axis: int | None = None):
        self._check_axis(axis, "mean")
        shape = self.shape
        k = self.size if axis is None else shape[axis]
        if k == 0:
            raise ShapeError("mean: reduction over zero elements")
        inv = self.dtype.type(1.0 / k)
        out_data = self.data.mean(axis=axis, dtype=self.dtype)

        def backward(g):
            if axis is None:
                self.accumulate_grad(np.broadcast_to(g * inv, shape))
            else:
                self.accumulate_grad(np.broadcast_to(np.expand_dims(g * inv, axis), shape))

        return Tensor.from_op(out_data, (self,), backward)

    def max(self, axis: int | None = None):
        """Max reduction; gradient routes to the lowest-index maximum only."""
        self._check_axis(axis, "max")
        if self.size == 0:
            raise ShapeError("max: empty tensor")
        a_data = self.data
        if axis is None:
            flat_idx = int(np.argmax(a_data))
            out_data = a_data.reshape(-1)[flat_idx].reshape(())

            def backward(g):
                full = np.zeros_like(a_data)
                full.reshape(-1)[flat_idx] = g.reshape(())
                self.accumulate_grad(full)

        else:
            idx = np.argmax(a_data, axis=axis)
            out_data = np.max(a_data, axis=axis)

            def backward(g):
                full = np.zeros_like(a_data)
                np.put_along_axis(
                    full, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis
                )
                self.accumulate_grad(full)

        return Tensor.from_op(out_data, (self,), backward)

    def argmax(self, axis: int | None = None):
        """Index of the first maximum (plain ndarray/int, not differentiable)."""
        self._check_axis(axis, "argmax")
        if self.size == 0:
            raise ShapeError("argmax: empty tensor")
        if axis is None:
            return int(np.argmax(self.data))
        return np.argmax(self.data, axis=axis)


class Tape:
    """Topologically ordered op record for one backward pass.

    nodes[i] appears after every tensor it depends on, so a single reversed
    walk sees each node's output gradient fully accumulated before use.
    """

    def __init__(self, nodes: list):
        self.nodes = nodes

    @classmethod
    def from_root(cls, root: Tensor) -> "Tape":
        # iterative post-order DFS: robust against deep op chains
        nodes: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, int]] = [(root, 0)]
        visited.add(id(root))
        while stack:
            node, child_i = stack[-1]
            if child_i < len(node._parents):
                stack[-1] = (node, child_i + 1)
                child = node._parents[child_i]
                if child.requires_grad and id(child) not in visited:
                    visited.add(id(child))
                    stack.append((child, 0))
            else:
                stack.pop()
                nodes.append(node)
        return cls(nodes)
