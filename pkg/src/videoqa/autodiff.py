"""Dense float64 tensors with tape-based reverse-mode differentiation.

The kernel is deliberately small: rank-1/rank-2 tensors, a closed set of
primitives with hand-derived backward rules, an explicit Tape recording each
executed operation, and a central-difference gradient checker. Ops record
onto the thread-local active tape; with no tape active they run forward-only,
which is the fast path used for inference.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError

__all__ = [
    "GradCheckReport",
    "Tape",
    "Tensor",
    "add",
    "affine",
    "backward",
    "concat",
    "cross_entropy",
    "embed_lookup",
    "grad_check",
    "hadamard",
    "mean_rows",
    "op_output",
    "sigmoid_map",
    "slice_reshape",
    "softmax_vec",
    "stack_rows",
    "sum_all",
    "tanh_map",
    "vecmat",
    "zero_grads",
]

_TLS = threading.local()


def _active_tape() -> "Tape | None":
    return getattr(_TLS, "tape", None)


class Tensor:
    """A dense float64 array of rank 1 or 2 with an optional gradient slot.

    ``grad`` is present (a same-shape zero-initialized accumulator) iff the
    tensor participates in differentiation: either it was built with
    ``requires_grad=True`` or it is the output of an op recorded on a tape.
    Tensors without a gradient slot are treated as immutable constants and
    may be shared freely.
    """

    __slots__ = ("values", "grad", "tape")

    def __init__(self, values, requires_grad: bool = False):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if arr.ndim not in (1, 2):
            raise DimensionError(f"tensors are rank 1 or 2, got shape {arr.shape}")
        self.values: np.ndarray = arr
        self.grad: np.ndarray | None = np.zeros_like(arr) if requires_grad else None
        self.tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, grad={'on' if self.grad is not None else 'off'})"


class Tape:
    """Ordered record of executed operations.

    ``backward`` replays the record in reverse, visiting each recorded
    operation exactly once; a tensor consumed by several operations receives
    the sum of their gradient contributions. A tape can be consumed only
    once; build a fresh tape per differentiated forward pass.
    """

    __slots__ = ("_nodes", "_spent")

    def __init__(self):
        self._nodes: list[Callable[[], None]] = []
        self._spent = False

    def __enter__(self) -> "Tape":
        if _active_tape() is not None:
            raise ContractError("a tape is already active in this thread")
        _TLS.tape = self
        return self

    def __exit__(self, *exc) -> None:
        _TLS.tape = None

    def __len__(self) -> int:
        return len(self._nodes)

    def record(self, backward_fn: Callable[[], None]) -> None:
        self._nodes.append(backward_fn)

    def backward(self, root: Tensor) -> None:
        if self._spent:
            raise ContractError("backward already ran on this tape; build a new tape")
        if root.values.shape != (1,):
            raise ContractError(f"backward root must have shape (1,), got {root.shape}")
        if root.tape is not self:
            raise ContractError("root tensor was not recorded on this tape")
        self._spent = True
        root.grad[...] = 1.0
        for fn in reversed(self._nodes):
            fn()


def backward(t: Tensor) -> None:
    """Run reverse-mode accumulation from scalar ``t`` over its recording tape."""
    if t.tape is None:
        raise ContractError("tensor is not attached to a tape; run the forward pass under a Tape")
    t.tape.backward(t)


def zero_grads(tensors) -> None:
    """Reset the gradient accumulators of every tensor that has one."""
    for t in tensors:
        if t.grad is not None:
            t.grad[...] = 0.0


def op_output(values: np.ndarray, inputs: Sequence[Tensor]) -> tuple[Tensor, "Tape | None"]:
    """Build an op output tensor, wiring it to the active tape when tracking.

    Returns ``(out, tape)``; ``tape`` is None when no recording is needed
    (no active tape, or no differentiable input). Fused ops use this to
    allocate outputs before recording a single joint backward closure.
    """
    out = Tensor(values)
    tape = _active_tape()
    if tape is not None and any(t.grad is not None for t in inputs):
        out.grad = np.zeros_like(out.values)
        out.tape = tape
        return out, tape
    return out, None


# ---------------------------------------------------------------------------
# primitives


def affine(w: Tensor, x: Tensor, b: Tensor) -> Tensor:
    """w @ x + b for w of shape [m, n], x of shape [n], b of shape [m]."""
    wv, xv, bv = w.values, x.values, b.values
    if wv.ndim != 2 or xv.ndim != 1 or bv.ndim != 1 \
            or wv.shape[1] != xv.shape[0] or wv.shape[0] != bv.shape[0]:
        raise DimensionError(f"affine: incompatible shapes W{wv.shape} x{xv.shape} b{bv.shape}")
    out, tape = op_output(wv @ xv + bv, (w, x, b))
    if tape is not None:
        def bw():
            g = out.grad
            if w.grad is not None:
                w.grad += np.outer(g, xv)
            if x.grad is not None:
                x.grad += wv.T @ g
            if b.grad is not None:
                b.grad += g
        tape.record(bw)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two same-shape tensors."""
    if a.values.shape != b.values.shape:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} differ")
    out, tape = op_output(a.values + b.values, (a, b))
    if tape is not None:
        def bw():
            g = out.grad
            if a.grad is not None:
                a.grad += g
            if b.grad is not None:
                b.grad += g
        tape.record(bw)
    return out


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two same-shape tensors."""
    if a.values.shape != b.values.shape:
        raise DimensionError(f"hadamard: shapes {a.shape} and {b.shape} differ")
    av, bv = a.values, b.values
    out, tape = op_output(av * bv, (a, b))
    if tape is not None:
        def bw():
            g = out.grad
            if a.grad is not None:
                a.grad += g * bv
            if b.grad is not None:
                b.grad += g * av
        tape.record(bw)
    return out


def tanh_map(x: Tensor) -> Tensor:
    """Elementwise tanh."""
    y = np.tanh(x.values)
    out, tape = op_output(y, (x,))
    if tape is not None:
        def bw():
            x.grad += (1.0 - y * y) * out.grad
        tape.record(bw)
    return out


def sigmoid_map(x: Tensor) -> Tensor:
    """Elementwise logistic sigmoid, overflow-safe on both tails."""
    y = _sigmoid(x.values)
    out, tape = op_output(y, (x,))
    if tape is not None:
        def bw():
            x.grad += y * (1.0 - y) * out.grad
        tape.record(bw)
    return out


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # overflow-free on both tails: sigma(v) = (1 + tanh(v/2)) / 2
    return 0.5 * (np.tanh(0.5 * v) + 1.0)


def softmax_vec(s: Tensor) -> Tensor:
    """Softmax over a rank-1 tensor, computed with max-subtraction."""
    sv = s.values
    if sv.ndim != 1 or sv.shape[0] < 1:
        raise DimensionError(f"softmax_vec: needs a nonempty rank-1 tensor, got shape {sv.shape}")
    e = np.exp(sv - sv.max())
    y = e / e.sum()
    out, tape = op_output(y, (s,))
    if tape is not None:
        def bw():
            g = out.grad
            s.grad += y * (g - float(np.dot(g, y)))
        tape.record(bw)
    return out


def mean_rows(m: Tensor) -> Tensor:
    """Columnwise arithmetic mean of a rank-2 tensor with at least one row."""
    mv = m.values
    if mv.ndim != 2 or mv.shape[0] < 1:
        raise DimensionError(f"mean_rows: needs a rank-2 tensor with rows, got shape {mv.shape}")
    k = mv.shape[0]
    out, tape = op_output(mv.sum(axis=0) / k, (m,))
    if tape is not None:
        def bw():
            m.grad += out.grad / k
        tape.record(bw)
    return out


def concat(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate two rank-1 tensors."""
    if a.values.ndim != 1 or b.values.ndim != 1:
        raise DimensionError(f"concat: needs rank-1 tensors, got shapes {a.shape} and {b.shape}")
    p = a.values.shape[0]
    out, tape = op_output(np.concatenate((a.values, b.values)), (a, b))
    if tape is not None:
        def bw():
            g = out.grad
            if a.grad is not None:
                a.grad += g[:p]
            if b.grad is not None:
                b.grad += g[p:]
        tape.record(bw)
    return out


def stack_rows(rows: Sequence[Tensor]) -> Tensor:
    """Stack same-length rank-1 tensors into a rank-2 tensor, one per row."""
    if len(rows) < 1:
        raise DimensionError("stack_rows: needs at least one row")
    d = rows[0].values.shape[0]
    for r in rows:
        if r.values.ndim != 1 or r.values.shape[0] != d:
            raise DimensionError(f"stack_rows: row shape {r.shape} does not match ({d},)")
    out, tape = op_output(np.stack([r.values for r in rows]), tuple(rows))
    if tape is not None:
        def bw():
            g = out.grad
            for i, r in enumerate(rows):
                if r.grad is not None:
                    r.grad += g[i]
        tape.record(bw)
    return out


def vecmat(x: Tensor, m: Tensor) -> Tensor:
    """Row vector times matrix: sum_i x_i * m[i] for x [k], m [k, d]."""
    xv, mv = x.values, m.values
    if xv.ndim != 1 or mv.ndim != 2 or xv.shape[0] != mv.shape[0]:
        raise DimensionError(f"vecmat: incompatible shapes x{xv.shape} m{mv.shape}")
    out, tape = op_output(xv @ mv, (x, m))
    if tape is not None:
        def bw():
            g = out.grad
            if x.grad is not None:
                x.grad += mv @ g
            if m.grad is not None:
                m.grad += np.outer(xv, g)
        tape.record(bw)
    return out


def embed_lookup(table: Tensor, idx: int) -> Tensor:
    """Fetch row ``idx`` of a rank-2 embedding table."""
    tv = table.values
    if tv.ndim != 2:
        raise DimensionError(f"embed_lookup: table must be rank 2, got shape {tv.shape}")
    i = int(idx)
    if not 0 <= i < tv.shape[0]:
        raise IndexError(f"embed_lookup: token id {i} outside table of {tv.shape[0]} rows")
    out, tape = op_output(tv[i].copy(), (table,))
    if tape is not None:
        def bw():
            table.grad[i] += out.grad
        tape.record(bw)
    return out


def slice_reshape(x: Tensor, start: int, shape: tuple[int, ...]) -> Tensor:
    """View a segment of a rank-1 tensor as a tensor of the given shape."""
    if x.values.ndim != 1:
        raise DimensionError(f"slice_reshape: source must be rank 1, got shape {x.shape}")
    n = 1
    for e in shape:
        n *= e
    stop = start + n
    if start < 0 or stop > x.values.shape[0]:
        raise IndexError(f"slice_reshape: segment [{start}:{stop}] outside length {x.values.shape[0]}")
    out, tape = op_output(x.values[start:stop].reshape(shape).copy(), (x,))
    if tape is not None:
        def bw():
            x.grad[start:stop] += out.grad.reshape(-1)
        tape.record(bw)
    return out


def sum_all(x: Tensor) -> Tensor:
    """Sum of all entries, as a shape-(1,) tensor."""
    out, tape = op_output(np.array([x.values.sum()]), (x,))
    if tape is not None:
        def bw():
            x.grad += out.grad[0]
        tape.record(bw)
    return out


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """Negative log softmax probability of ``target``, as a shape-(1,) tensor.

    Gradient w.r.t. logits is softmax(logits) minus the one-hot target.
    """
    lv = logits.values
    if lv.ndim != 1 or lv.shape[0] < 2:
        raise DimensionError(f"cross_entropy: needs >= 2 classes in rank 1, got shape {lv.shape}")
    t = int(target)
    if not 0 <= t < lv.shape[0]:
        raise IndexError(f"cross_entropy: target {t} outside {lv.shape[0]} classes")
    z = lv - lv.max()
    lse = float(np.log(np.exp(z).sum()))
    out, tape = op_output(np.array([lse - z[t]]), (logits,))
    if tape is not None:
        p = np.exp(z - lse)
        def bw():
            g = out.grad[0]
            logits.grad += g * p
            logits.grad[t] -= g
        tape.record(bw)
    return out


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckReport:
    """Outcome of a central-difference gradient check."""

    max_rel_error: float
    max_abs_error: float
    tol: float
    passed: bool
    analytic: np.ndarray
    numeric: np.ndarray

    def __str__(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return f"grad_check {status}: max_rel_error={self.max_rel_error:.3e} tol={self.tol:.1e}"


def grad_check(f: Callable[[Tensor], Tensor], x0: Tensor,
               eps: float = 1e-5, tol: float = 1e-6) -> GradCheckReport:
    """Compare tape gradients of scalar-valued ``f`` at ``x0`` against central differences.

    ``f`` must be deterministic; two forward evaluations at ``x0`` are
    compared bitwise and a mismatch raises ContractError. The relative error
    per coordinate is |analytic - numeric| / max(1, |analytic|, |numeric|),
    so near-zero gradients are compared absolutely.
    """
    base_vals = np.array(x0.values, dtype=np.float64, copy=True)
    probe = Tensor(base_vals.copy(), requires_grad=True)
    with Tape() as tape:
        out = f(probe)
        if out.values.shape != (1,):
            raise ContractError(f"grad_check: f must be scalar-valued, got shape {out.shape}")
    base = out.item()
    backward(out)
    analytic = probe.grad.copy()

    repeat = f(Tensor(base_vals.copy())).item()
    if repeat != base:
        raise ContractError(f"grad_check: f is not deterministic ({base!r} != {repeat!r})")

    numeric = np.zeros_like(base_vals)
    flat = base_vals.reshape(-1)
    nflat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(Tensor(base_vals.copy())).item()
        flat[i] = orig - eps
        lo = f(Tensor(base_vals.copy())).item()
        flat[i] = orig
        nflat[i] = (hi - lo) / (2.0 * eps)

    abs_err = np.abs(analytic - numeric)
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    rel = abs_err / denom
    max_rel = float(rel.max()) if rel.size else 0.0
    max_abs = float(abs_err.max()) if abs_err.size else 0.0
    return GradCheckReport(max_rel, max_abs, tol, max_rel <= tol, analytic, numeric)
