"""LSTM cell and sequence runners.

The cell is a single fused tape node: gates are computed in one shot and the
backward closure applies the hand-derived chain rule for all four gates. A
gate-by-gate reference built from kernel primitives lives in the test suite
and pins this implementation down to 1e-12.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, concat, op_output, _sigmoid
from .errors import DataError, DimensionError

GATES = ("i", "f", "o", "c")


class LSTMCellParams:
    """Weights for one cell: per gate, a matrix over [x; h_prev] and a bias."""

    __slots__ = ("input_dim", "hidden_dim", "w_i", "b_i", "w_f", "b_f", "w_o", "b_o", "w_c", "b_c")

    def __init__(self, input_dim: int, hidden_dim: int, tensors: dict[str, Tensor]):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        for gate in GATES:
            w = tensors[f"w_{gate}"]
            b = tensors[f"b_{gate}"]
            if w.shape != (hidden_dim, input_dim + hidden_dim) or b.shape != (hidden_dim,):
                raise DimensionError(
                    f"lstm cell ({input_dim}->{hidden_dim}): bad shapes w_{gate}{w.shape} b_{gate}{b.shape}")
            setattr(self, f"w_{gate}", w)
            setattr(self, f"b_{gate}", b)

    def tensors(self) -> list[Tensor]:
        out = []
        for gate in GATES:
            out.append(getattr(self, f"w_{gate}"))
            out.append(getattr(self, f"b_{gate}"))
        return out


def lstm_step(cell: LSTMCellParams, x: Tensor, h_prev: Tensor, c_prev: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM update: sigmoid input/forget/output gates, tanh candidate."""
    xv, hv, cv = x.values, h_prev.values, c_prev.values
    if xv.shape != (cell.input_dim,) or hv.shape != (cell.hidden_dim,) or cv.shape != (cell.hidden_dim,):
        raise DimensionError(
            f"lstm_step: got x{xv.shape} h{hv.shape} c{cv.shape} for a "
            f"{cell.input_dim}->{cell.hidden_dim} cell")

    z = np.concatenate((xv, hv))
    gi = _sigmoid(cell.w_i.values @ z + cell.b_i.values)
    gf = _sigmoid(cell.w_f.values @ z + cell.b_f.values)
    go = _sigmoid(cell.w_o.values @ z + cell.b_o.values)
    cand = np.tanh(cell.w_c.values @ z + cell.b_c.values)
    c_new = gf * cv + gi * cand
    tc = np.tanh(c_new)
    h_new = go * tc

    inputs = (x, h_prev, c_prev, *cell.tensors())
    h_out, tape = op_output(h_new, inputs)
    c_out, _ = op_output(c_new, inputs)
    if tape is not None:
        c_out.grad = np.zeros_like(c_new)
        c_out.tape = tape
        n_in = cell.input_dim

        def bw():
            dh = h_out.grad
            dc = c_out.grad + dh * go * (1.0 - tc * tc)
            d_go = dh * tc
            d_gi = dc * cand
            d_cand = dc * gi
            d_gf = dc * cv
            da_i = d_gi * gi * (1.0 - gi)
            da_f = d_gf * gf * (1.0 - gf)
            da_o = d_go * go * (1.0 - go)
            da_c = d_cand * (1.0 - cand * cand)
            dz = np.zeros_like(z)
            for da, w, b in ((da_i, cell.w_i, cell.b_i), (da_f, cell.w_f, cell.b_f),
                             (da_o, cell.w_o, cell.b_o), (da_c, cell.w_c, cell.b_c)):
                if w.grad is not None:
                    w.grad += np.outer(da, z)
                if b.grad is not None:
                    b.grad += da
                dz += w.values.T @ da
            if x.grad is not None:
                x.grad += dz[:n_in]
            if h_prev.grad is not None:
                h_prev.grad += dz[n_in:]
            if c_prev.grad is not None:
                c_prev.grad += dc * gf

        tape.record(bw)
    return h_out, c_out


def lstm_run(cell: LSTMCellParams, xs: list[Tensor]) -> list[Tensor]:
    """Run a cell over a sequence from zero initial state; returns all hidden states."""
    h = Tensor(np.zeros(cell.hidden_dim))
    c = Tensor(np.zeros(cell.hidden_dim))
    states = []
    for x in xs:
        h, c = lstm_step(cell, x, h, c)
        states.append(h)
    return states


def bilstm_states(fwd: LSTMCellParams, bwd: LSTMCellParams,
                  xs: list[Tensor]) -> tuple[list[Tensor], list[Tensor]]:
    """Forward states over ``xs`` and backward states over reversed ``xs``.

    Backward states are indexed by the backward cell's own step count: entry
    t has consumed the last t+1 elements of the original sequence.
    """
    if not xs:
        raise DataError("bilstm: empty input sequence")
    return lstm_run(fwd, xs), lstm_run(bwd, xs[::-1])


def bilstm_rows(fwd_states: list[Tensor], bwd_states: list[Tensor]) -> list[Tensor]:
    """Per-position fused states: row t is [fwd_t ; bwd_{L-t-1}].

    Both halves of row t have consumed the sequence up to and including
    position t from their respective directions.
    """
    length = len(fwd_states)
    return [concat(fwd_states[t], bwd_states[length - 1 - t]) for t in range(length)]
