"""Reverse-mode gradient tape over a small, closed op vocabulary.

The model needs roughly a dozen primitives (sparse-dense matmul, dense
matmul, elementwise arithmetic, ReLU, sigmoid, row-broadcast add, column
concat, grouped row mean/sum, row gather, rowwise L1 distance, scalar ops,
full sum), so instead of a general autodiff system each primitive carries an
explicit hand-written backward rule. Ops record onto a Tape in execution
order; `Tape.backward` replays that order reversed. Values are 2-D numpy
arrays in the tape's dtype (float64 for verification, float32 for training).

Subgradient conventions: ReLU uses 0 at exactly 0, and the L1 distance uses
0 at a zero coordinate difference.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import NumericalError, ShapeError, StructuralError


class SparseMatrix:
    """Immutable sparse matrix in sorted, duplicate-free coordinate form."""

    def __init__(self, rows: int, cols: int, row_idx, col_idx, values):
        row_idx = np.asarray(row_idx, dtype=np.int64)
        col_idx = np.asarray(col_idx, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if not (row_idx.shape == col_idx.shape == values.shape) or row_idx.ndim != 1:
            raise ShapeError("coordinate arrays must be 1-D and equally sized")
        if len(row_idx) and (row_idx.min() < 0 or row_idx.max() >= rows or col_idx.min() < 0 or col_idx.max() >= cols):
            raise StructuralError("sparse entry index out of range")
        if not np.all(np.isfinite(values)):
            raise StructuralError("sparse entries must be finite")
        order = np.lexsort((col_idx, row_idx))
        row_idx, col_idx, values = row_idx[order], col_idx[order], values[order]
        if len(row_idx) > 1:
            same = (row_idx[1:] == row_idx[:-1]) & (col_idx[1:] == col_idx[:-1])
            if same.any():
                k = int(np.argmax(same))
                raise StructuralError(f"duplicate sparse entry at ({row_idx[k]},{col_idx[k]})")
        self.rows = int(rows)
        self.cols = int(cols)
        self.row_idx = row_idx
        self.col_idx = col_idx
        self.values = values
        self._csr: dict[np.dtype, sp.csr_matrix] = {}
        self._csr_t: dict[np.dtype, sp.csr_matrix] = {}

    @property
    def nnz(self) -> int:
        return len(self.values)

    def csr(self, dtype=np.float64) -> sp.csr_matrix:
        dtype = np.dtype(dtype)
        if dtype not in self._csr:
            m = sp.csr_matrix(
                (self.values.astype(dtype), (self.row_idx, self.col_idx)),
                shape=(self.rows, self.cols),
            )
            self._csr[dtype] = m
        return self._csr[dtype]

    def csr_t(self, dtype=np.float64) -> sp.csr_matrix:
        dtype = np.dtype(dtype)
        if dtype not in self._csr_t:
            self._csr_t[dtype] = self.csr(dtype).T.tocsr()
        return self._csr_t[dtype]

    def to_dense(self, dtype=np.float64) -> np.ndarray:
        return np.asarray(self.csr(dtype).todense())

    @classmethod
    def from_dense(cls, dense) -> "SparseMatrix":
        dense = np.asarray(dense, dtype=np.float64)
        r, c = np.nonzero(dense)
        return cls(dense.shape[0], dense.shape[1], r, c, dense[r, c])

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        idx = np.arange(n)
        return cls(n, n, idx, idx, np.ones(n))

    def dump_coo(self, path) -> None:
        """Debug dump, one `row col value` triple per line."""
        with open(path, "w", encoding="utf-8") as fh:
            for r, c, v in zip(self.row_idx, self.col_idx, self.values):
                fh.write(f"{r} {c} {float(v)!r}\n")


class GroupMap:
    """Static grouping of input rows, shared by the grouped mean/sum ops.

    `groups[i]` lists the input-row indices aggregated into output row i.
    Aggregation is linear, so both directions are sparse matmuls with fixed
    0/1 (or 1/|group|) matrices that never receive gradient themselves.
    """

    def __init__(self, groups: Sequence[Sequence[int]], n_rows: int):
        self.n_rows = int(n_rows)
        self.n_groups = len(groups)
        owners, members = [], []
        sizes = np.zeros(self.n_groups, dtype=np.int64)
        for i, g in enumerate(groups):
            g = np.asarray(list(g), dtype=np.int64)
            if len(g) and (g.min() < 0 or g.max() >= self.n_rows):
                raise StructuralError(f"group {i} references row outside [0, {self.n_rows})")
            sizes[i] = len(g)
            owners.append(np.full(len(g), i, dtype=np.int64))
            members.append(g)
        self.sizes = sizes
        self._owner = np.concatenate(owners) if owners else np.zeros(0, dtype=np.int64)
        self._member = np.concatenate(members) if members else np.zeros(0, dtype=np.int64)
        self._mats: dict[tuple[str, np.dtype], tuple[sp.csr_matrix, sp.csr_matrix]] = {}

    @property
    def has_empty_group(self) -> bool:
        return bool((self.sizes == 0).any())

    def matrices(self, mode: str, dtype) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        dtype = np.dtype(dtype)
        key = (mode, dtype)
        if key not in self._mats:
            if mode == "mean":
                w = (1.0 / self.sizes[self._owner]).astype(dtype)
            else:
                w = np.ones(len(self._owner), dtype=dtype)
            m = sp.csr_matrix((w, (self._owner, self._member)), shape=(self.n_groups, self.n_rows))
            self._mats[key] = (m, m.T.tocsr())
        return self._mats[key]


class Node:
    """One tape entry: cached forward value plus its gradient accumulator."""

    __slots__ = ("value", "grad", "requires_grad", "name", "_backward")

    def __init__(self, value: np.ndarray, requires_grad: bool, name: str):
        self.value = value
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape


_L1_CHUNK = 16384


class Tape:
    """Execution-ordered record of primitive ops with reverse-mode backward."""

    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        if self.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
            raise ValueError("tape dtype must be float32 or float64")
        self._nodes: list[Node] = []

    # -- leaves ----------------------------------------------------------

    def var(self, value, name: str = "var") -> Node:
        """Trainable leaf; receives a gradient on backward."""
        return self._leaf(value, True, name)

    def const(self, value, name: str = "const") -> Node:
        return self._leaf(value, False, name)

    def _leaf(self, value, requires_grad: bool, name: str) -> Node:
        arr = np.ascontiguousarray(np.asarray(value, dtype=self.dtype))
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise ShapeError(f"{name}: tape values are 2-D matrices, got ndim={arr.ndim}")
        node = Node(arr, requires_grad, name)
        self._nodes.append(node)
        return node

    def _emit(self, value: np.ndarray, parents: Sequence[Node], backward, name: str) -> Node:
        node = Node(value, any(p.requires_grad for p in parents), name)
        if node.requires_grad:
            node._backward = backward
        self._nodes.append(node)
        return node

    @staticmethod
    def _accum(parent: Node, delta: np.ndarray) -> None:
        if not parent.requires_grad:
            return
        if parent.grad is None:
            parent.grad = np.zeros_like(parent.value)
        parent.grad += delta

    # -- primitive ops ----------------------------------------------------

    def matmul(self, a: Node, b: Node, name: str = "matmul") -> Node:
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"{name}: {a.shape} @ {b.shape}")
        out = a.value @ b.value

        def backward(g):
            self._accum(a, g @ b.value.T)
            self._accum(b, a.value.T @ g)

        return self._emit(out, (a, b), backward, name)

    def spmm(self, a: SparseMatrix, b: Node, name: str = "spmm") -> Node:
        """Sparse-dense product; the sparse factor is constant structure."""
        if a.cols != b.shape[0]:
            raise ShapeError(f"{name}: sparse {a.rows}x{a.cols} @ {b.shape}")
        csr = a.csr(self.dtype)
        out = csr @ b.value

        def backward(g):
            self._accum(b, a.csr_t(self.dtype) @ g)

        return self._emit(out, (b,), backward, name)

    def add(self, a: Node, b: Node, name: str = "add") -> Node:
        if a.shape != b.shape:
            raise ShapeError(f"{name}: {a.shape} + {b.shape}")

        def backward(g):
            self._accum(a, g)
            self._accum(b, g)

        return self._emit(a.value + b.value, (a, b), backward, name)

    def sub(self, a: Node, b: Node, name: str = "sub") -> Node:
        if a.shape != b.shape:
            raise ShapeError(f"{name}: {a.shape} - {b.shape}")

        def backward(g):
            self._accum(a, g)
            self._accum(b, -g)

        return self._emit(a.value - b.value, (a, b), backward, name)

    def mul(self, a: Node, b: Node, name: str = "mul") -> Node:
        if a.shape != b.shape:
            raise ShapeError(f"{name}: {a.shape} * {b.shape}")

        def backward(g):
            self._accum(a, g * b.value)
            self._accum(b, g * a.value)

        return self._emit(a.value * b.value, (a, b), backward, name)

    def relu(self, a: Node, name: str = "relu") -> Node:
        out = np.maximum(a.value, 0)

        def backward(g):
            self._accum(a, g * (a.value > 0))

        return self._emit(out, (a,), backward, name)

    def sigmoid(self, a: Node, name: str = "sigmoid") -> Node:
        # split by sign for numerical stability at large |x|
        v = a.value
        out = np.empty_like(v)
        pos = v >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
        ev = np.exp(v[~pos])
        out[~pos] = ev / (1.0 + ev)

        def backward(g):
            self._accum(a, g * out * (1.0 - out))

        return self._emit(out, (a,), backward, name)

    def add_row(self, a: Node, row: Node, name: str = "add_row") -> Node:
        """Broadcast-add one row vector (shape (1,d) or (d,1)) to every row of a."""
        rv = row.value.reshape(1, -1)
        if rv.shape[1] != a.shape[1]:
            raise ShapeError(f"{name}: row of width {rv.shape[1]} onto {a.shape}")

        def backward(g):
            self._accum(a, g)
            self._accum(row, g.sum(axis=0).reshape(row.value.shape))

        return self._emit(a.value + rv, (a, row), backward, name)

    def concat_cols(self, a: Node, b: Node, name: str = "concat_cols") -> Node:
        if a.shape[0] != b.shape[0]:
            raise ShapeError(f"{name}: {a.shape} || {b.shape}")
        split = a.shape[1]

        def backward(g):
            self._accum(a, g[:, :split])
            self._accum(b, g[:, split:])

        return self._emit(np.hstack([a.value, b.value]), (a, b), backward, name)

    def mean_rows(self, a: Node, gm: GroupMap, name: str = "mean_rows") -> Node:
        """Per-group mean of input rows; one output row per group."""
        if gm.n_rows != a.shape[0]:
            raise ShapeError(f"{name}: grouping over {gm.n_rows} rows applied to {a.shape}")
        if gm.has_empty_group:
            raise StructuralError(f"{name}: mean over an empty group is undefined")
        fwd, bwd = gm.matrices("mean", self.dtype)
        out = fwd @ a.value

        def backward(g):
            self._accum(a, bwd @ g)

        return self._emit(out, (a,), backward, name)

    def sum_rows_by_group(self, a: Node, gm: GroupMap, name: str = "sum_rows_by_group") -> Node:
        """Per-group sum of input rows; empty groups yield zero rows."""
        if gm.n_rows != a.shape[0]:
            raise ShapeError(f"{name}: grouping over {gm.n_rows} rows applied to {a.shape}")
        fwd, bwd = gm.matrices("sum", self.dtype)
        out = fwd @ a.value

        def backward(g):
            self._accum(a, bwd @ g)

        return self._emit(out, (a,), backward, name)

    def gather_rows(self, a: Node, idx, name: str = "gather_rows") -> Node:
        idx = np.asarray(idx, dtype=np.int64)
        if idx.ndim != 1:
            raise ShapeError(f"{name}: index must be 1-D")
        if len(idx) and (idx.min() < 0 or idx.max() >= a.shape[0]):
            raise ShapeError(f"{name}: row index out of range for {a.shape}")
        out = a.value[idx]

        def backward(g):
            if a.requires_grad:
                if a.grad is None:
                    a.grad = np.zeros_like(a.value)
                np.add.at(a.grad, idx, g)

        return self._emit(out, (a,), backward, name)

    def l1_rowdist(self, a: Node, left, right, name: str = "l1_rowdist") -> Node:
        """Column vector of L1 distances between row pairs of one matrix."""
        left = np.asarray(left, dtype=np.int64)
        right = np.asarray(right, dtype=np.int64)
        if left.shape != right.shape or left.ndim != 1:
            raise ShapeError(f"{name}: index vectors must be 1-D and equally sized")
        for idx in (left, right):
            if len(idx) and (idx.min() < 0 or idx.max() >= a.shape[0]):
                raise ShapeError(f"{name}: row index out of range for {a.shape}")
        m = len(left)
        out = np.empty((m, 1), dtype=self.dtype)
        v = a.value
        for s in range(0, m, _L1_CHUNK):
            e = min(s + _L1_CHUNK, m)
            out[s:e, 0] = np.abs(v[left[s:e]] - v[right[s:e]]).sum(axis=1)

        def backward(g):
            if not a.requires_grad:
                return
            if a.grad is None:
                a.grad = np.zeros_like(a.value)
            for s in range(0, m, _L1_CHUNK):
                e = min(s + _L1_CHUNK, m)
                sign = np.sign(v[left[s:e]] - v[right[s:e]])
                sign *= g[s:e]
                np.add.at(a.grad, left[s:e], sign)
                np.subtract.at(a.grad, right[s:e], sign)

        return self._emit(out, (a,), backward, name)

    def add_scalar(self, a: Node, c: float, name: str = "add_scalar") -> Node:
        def backward(g):
            self._accum(a, g)

        return self._emit(a.value + self.dtype.type(c), (a,), backward, name)

    def mul_scalar(self, a: Node, c: float, name: str = "mul_scalar") -> Node:
        c = self.dtype.type(c)

        def backward(g):
            self._accum(a, g * c)

        return self._emit(a.value * c, (a,), backward, name)

    def scalar_minus(self, c: float, a: Node, name: str = "scalar_minus") -> Node:
        """Elementwise c - a."""

        def backward(g):
            self._accum(a, -g)

        return self._emit(self.dtype.type(c) - a.value, (a,), backward, name)

    def sum_all(self, a: Node, name: str = "sum_all") -> Node:
        out = np.array([[a.value.sum()]], dtype=self.dtype)

        def backward(g):
            self._accum(a, np.full_like(a.value, g[0, 0]))

        return self._emit(out, (a,), backward, name)

    # -- reverse pass ------------------------------------------------------

    def backward(self, loss: Node) -> None:
        """Accumulate d loss / d leaf into every reachable node's .grad."""
        if loss.value.size != 1:
            raise ShapeError(f"backward target must be scalar, got {loss.shape}")
        for n in self._nodes:
            n.grad = None
        loss.grad = np.ones_like(loss.value)
        for node in reversed(self._nodes):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def first_nonfinite(self) -> Node | None:
        """Earliest node whose cached value contains NaN or inf, if any."""
        for node in self._nodes:
            if not np.all(np.isfinite(node.value)):
                return node
        return None

    def check_finite(self) -> None:
        node = self.first_nonfinite()
        if node is not None:
            raise NumericalError(f"non-finite value produced by op '{node.name}'")


class GradCheckReport:
    def __init__(self, per_input: list[float], tol: float):
        self.per_input = per_input
        self.tol = tol
        self.max_rel_error = max(per_input) if per_input else 0.0
        self.passed = self.max_rel_error < tol

    def __repr__(self):
        return f"GradCheckReport(max_rel_error={self.max_rel_error:.3e}, passed={self.passed})"


def _rel_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    if denom < 1e-10:
        return float(np.linalg.norm(a - b))
    return float(np.linalg.norm(a - b) / denom)


def grad_check(f, inputs: Sequence[np.ndarray], eps: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare tape gradients of a scalar-valued builder against central differences.

    `f(tape, nodes)` must rebuild the computation from scratch on the given
    tape and return the scalar output node; inputs are float64 matrices.
    """
    inputs = [np.asarray(x, dtype=np.float64) for x in inputs]

    def evaluate(arrays) -> float:
        tape = Tape(np.float64)
        nodes = [tape.var(x, name=f"input{i}") for i, x in enumerate(arrays)]
        out = f(tape, nodes)
        tape.check_finite()
        return float(out.value[0, 0])

    tape = Tape(np.float64)
    nodes = [tape.var(x, name=f"input{i}") for i, x in enumerate(inputs)]
    out = f(tape, nodes)
    tape.check_finite()
    if out.value.size != 1:
        raise ShapeError("grad_check target must be scalar-valued")
    tape.backward(out)

    errors = []
    for i, x in enumerate(inputs):
        analytic = nodes[i].grad
        if analytic is None:
            analytic = np.zeros_like(x)
        fd = np.zeros_like(x)
        flat = x.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            hi = evaluate(inputs)
            flat[j] = orig - eps
            lo = evaluate(inputs)
            flat[j] = orig
            fd.reshape(-1)[j] = (hi - lo) / (2.0 * eps)
        errors.append(_rel_error(analytic, fd))
    return GradCheckReport(errors, tol)
