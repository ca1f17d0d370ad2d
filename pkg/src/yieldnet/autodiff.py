"""Dense tensors with taped reverse-mode differentiation.

A :class:`Tape` records every primitive applied to tensors that live on it,
in execution order. Replaying the records backwards visits operations in
reverse topological order, accumulating chain-rule contributions into each
tensor's ``grad``. Tapes run in one of two modes:

* ``STANDARD`` - ordinary reverse mode.
* ``GUIDED``   - identical except at ReLU nodes, where gradient flows only
  where the forward input was positive AND the upstream gradient is positive.

All storage and accumulation is float64. A tape and its tensors belong to a
single execution context; independent tapes may run concurrently. Reductions
use numpy's fixed evaluation order, so repeated runs are bit-reproducible.

Every op accepts the single-sample shapes from its contract and, where noted,
the same shape with one extra leading batch axis.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ContractViolation

STANDARD = "standard"
GUIDED = "guided"


class Tensor:
    """A dense float64 array, optionally attached to a tape.

    ``grad`` is populated by :meth:`Tape.backward`; it is ``None`` before the
    first backward pass and for tensors that received no gradient.
    """

    __slots__ = ("data", "grad", "tape")

    def __init__(self, data, tape=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.tape = tape

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, taped={self.tape is not None})"


class Tape:
    """Ordered record of primitive operations for one forward pass."""

    def __init__(self, mode=STANDARD):
        if mode not in (STANDARD, GUIDED):
            raise ContractViolation(f"unknown tape mode {mode!r}")
        self.mode = mode
        self._tensors: list[Tensor] = []
        self._backs: list = []

    def leaf(self, data) -> Tensor:
        """Register an input tensor (no backward rule of its own)."""
        t = Tensor(data, self)
        self._tensors.append(t)
        self._backs.append(None)
        return t

    def _emit(self, data, back) -> Tensor:
        t = Tensor(data, self)
        self._tensors.append(t)
        self._backs.append(back)
        return t

    def backward(self, output: Tensor, seed=None):
        """Accumulate gradients of ``output`` into every recorded tensor.

        ``seed`` assigns the starting gradient on the output's entries
        (defaults to all ones). Tensors on the tape have their ``grad``
        reset before accumulation.
        """
        if output.tape is not self:
            raise ContractViolation("seeded tensor is not recorded on this tape")
        if seed is None:
            seed = np.ones_like(output.data)
        seed = np.asarray(seed, dtype=np.float64)
        if seed.shape != output.data.shape:
            raise ContractViolation(
                f"seed shape {seed.shape} does not match output shape {output.data.shape}"
            )
        for t in self._tensors:
            t.grad = None
        output.grad = seed.copy()
        for t, back in zip(reversed(self._tensors), reversed(self._backs)):
            if back is not None and t.grad is not None:
                back(t.grad)


def _accum(t: Tensor, g):
    # constants (no tape) accept no gradient
    if t.tape is None:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)  # owned copy; g may be a view
    else:
        t.grad += g


def _accum_new(t: Tensor, g):
    # like _accum, but g is freshly allocated by the caller and may be kept
    if t.tape is None:
        return
    if t.grad is None:
        t.grad = g
    else:
        t.grad += g


def _join(*tensors) -> Tape:
    tape = None
    for t in tensors:
        if t.tape is not None:
            if tape is None:
                tape = t.tape
            elif tape is not t.tape:
                raise ContractViolation("operands live on different tapes")
    if tape is None:
        raise ContractViolation("at least one operand must live on a tape")
    return tape


def constant(data) -> Tensor:
    """A tensor that participates in ops but never receives gradient."""
    return Tensor(data)


def _as_batched(a):
    """(shape) -> (1, shape) when no batch axis is present."""
    return (a[None], False) if a.ndim == 2 else (a, True)


# ---------------------------------------------------------------------------
# primitives


def conv1d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Length-preserving 1D cross-correlation with zero padding.

    x: (C_in, L) or (B, C_in, L); w: (C_out, C_in, K) with K odd; b: (C_out,).
    """
    if x.ndim not in (2, 3) or w.ndim != 3 or b.ndim != 1:
        raise ContractViolation("conv1d expects x (C,L)|(B,C,L), w (O,C,K), b (O,)")
    if w.shape[2] % 2 == 0:
        raise ContractViolation("conv1d kernel width must be odd")
    xin, batched = _as_batched(x.data)
    if xin.shape[1] != w.shape[1]:
        raise ContractViolation(
            f"conv1d channel mismatch: input {xin.shape[1]} vs kernels {w.shape[1]}"
        )
    if b.shape[0] != w.shape[0]:
        raise ContractViolation("conv1d bias length must equal output channels")
    xin = np.ascontiguousarray(xin)
    y = kernels.conv1d_forward(xin, w.data, b.data)
    tape = _join(x, w, b)

    def back(g):
        gb3 = np.ascontiguousarray(g if batched else g[None])
        gx, gw, gbias = kernels.conv1d_backward(xin, w.data, gb3)
        _accum_new(x, gx if batched else gx[0])
        _accum_new(w, gw)
        _accum_new(b, gbias)

    return tape._emit(y if batched else y[0], back)


def avgpool1d(x: Tensor) -> Tensor:
    """Window-2 stride-2 average pooling along the last axis.

    Requires L >= 2; when L is odd the trailing element is dropped.
    """
    if x.ndim not in (2, 3):
        raise ContractViolation("avgpool1d expects (C,L) or (B,C,L)")
    length = x.shape[-1]
    if length < 2:
        raise ContractViolation("avgpool1d needs input length >= 2")
    xin, batched = _as_batched(x.data)
    y = kernels.avgpool2_forward(np.ascontiguousarray(xin))
    tape = _join(x)

    def back(g):
        gx = kernels.avgpool2_backward(np.ascontiguousarray(g if batched else g[None]), length)
        _accum_new(x, gx if batched else gx[0])

    return tape._emit(y if batched else y[0], back)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """out = w @ x + b for x (n,) or (B, n); w (m, n); b (m,)."""
    if w.ndim != 2 or b.ndim != 1 or x.ndim not in (1, 2):
        raise ContractViolation("affine expects x (n,)|(B,n), w (m,n), b (m,)")
    if x.shape[-1] != w.shape[1] or b.shape[0] != w.shape[0]:
        raise ContractViolation(
            f"affine shape mismatch: x {x.shape}, w {w.shape}, b {b.shape}"
        )
    y = x.data @ w.data.T + b.data
    tape = _join(x, w, b)
    batched = x.ndim == 2

    def back(g):
        _accum_new(x, g @ w.data)
        if batched:
            _accum_new(w, g.T @ x.data)
            _accum_new(b, g.sum(axis=0))
        else:
            _accum_new(w, np.outer(g, x.data))
            _accum(b, g)

    return tape._emit(y, back)


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x). Backward rule depends on the tape mode."""
    tape = _join(x)
    pos = x.data > 0

    def back(g):
        if tape.mode == GUIDED:
            _accum_new(x, np.where(pos & (g > 0), g, 0.0))
        else:
            _accum_new(x, np.where(pos, g, 0.0))

    return tape._emit(np.maximum(x.data, 0.0), back)


def sigmoid(x: Tensor) -> Tensor:
    tape = _join(x)
    # stable on both tails: sig(x) = (1 + tanh(x/2)) / 2
    out = 0.5 * (np.tanh(0.5 * x.data) + 1.0)

    def back(g):
        _accum_new(x, g * (out * (1.0 - out)))

    return tape._emit(out, back)


def tanh(x: Tensor) -> Tensor:
    tape = _join(x)
    out = np.tanh(x.data)

    def back(g):
        _accum_new(x, g * (1.0 - out * out))

    return tape._emit(out, back)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ContractViolation(f"add shape mismatch: {a.shape} vs {b.shape}")
    tape = _join(a, b)

    def back(g):
        _accum(a, g)
        _accum(b, g)

    return tape._emit(a.data + b.data, back)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ContractViolation(f"sub shape mismatch: {a.shape} vs {b.shape}")
    tape = _join(a, b)

    def back(g):
        _accum(a, g)
        _accum_new(b, -g)

    return tape._emit(a.data - b.data, back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ContractViolation(f"mul shape mismatch: {a.shape} vs {b.shape}")
    tape = _join(a, b)

    def back(g):
        _accum_new(a, g * b.data)
        _accum_new(b, g * a.data)

    return tape._emit(a.data * b.data, back)


def mean(x: Tensor) -> Tensor:
    """Mean over all entries, returning a scalar tensor."""
    tape = _join(x)
    n = x.data.size

    def back(g):
        _accum_new(x, np.full(x.shape, float(g) / n))

    return tape._emit(np.asarray(x.data.mean()), back)


def concat(parts, axis=-1) -> Tensor:
    """Concatenate tensors along ``axis``; backward splits by the offsets."""
    parts = list(parts)
    if not parts:
        raise ContractViolation("concat needs at least one part")
    nd = parts[0].ndim
    if any(p.ndim != nd for p in parts):
        raise ContractViolation("concat parts must share rank")
    tape = _join(*parts)
    ax = axis % nd
    sizes = [p.shape[ax] for p in parts]
    out = np.concatenate([p.data for p in parts], axis=ax)

    def back(g):
        off = 0
        idx = [slice(None)] * nd
        for p, s in zip(parts, sizes):
            idx[ax] = slice(off, off + s)
            _accum(p, g[tuple(idx)])
            off += s

    return tape._emit(out, back)


def reshape(x: Tensor, shape) -> Tensor:
    tape = _join(x)
    src_shape = x.shape

    def back(g):
        _accum(x, g.reshape(src_shape))

    return tape._emit(x.data.reshape(shape), back)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean, running_var,
               training, momentum=0.9, eps=1e-5) -> Tensor:
    """Per-feature batch normalization over a (B, F) batch.

    Training mode normalizes by batch statistics (population variance, floored
    by ``eps``) and updates the running buffers in place; inference mode uses
    the running buffers.
    """
    if x.ndim != 2:
        raise ContractViolation("batch_norm expects a (B, F) input")
    tape = _join(x, gamma, beta)
    d = x.data
    if training:
        mu = d.mean(axis=0)
        var = d.var(axis=0)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mu = running_mean
        var = running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (d - mu) * inv
    out = gamma.data * xhat + beta.data

    def back(g):
        _accum(gamma, (g * xhat).sum(axis=0))
        _accum(beta, g.sum(axis=0))
        if training:
            n = d.shape[0]
            gh = g * gamma.data
            _accum(x, inv * (gh - gh.mean(axis=0) - xhat * (gh * xhat).sum(axis=0) / n))
        else:
            _accum(x, g * gamma.data * inv)

    return tape._emit(out, back)


class LstmParams:
    """Gate parameters for one LSTM cell: weights (H, D+H) and biases (H,)."""

    __slots__ = ("w_i", "b_i", "w_f", "b_f", "w_g", "b_g", "w_o", "b_o")

    def __init__(self, w_i, b_i, w_f, b_f, w_g, b_g, w_o, b_o):
        self.w_i, self.b_i = w_i, b_i
        self.w_f, self.b_f = w_f, b_f
        self.w_g, self.b_g = w_g, b_g
        self.w_o, self.b_o = w_o, b_o


def lstm_cell_step(x: Tensor, h_prev: Tensor, c_prev: Tensor, params: LstmParams):
    """One LSTM step; x (d,)|(B,d), states (H,)|(B,H). Returns (h, c).

    i = sig(W_i [x;h] + b_i), f = sig(W_f [x;h] + b_f),
    g = tanh(W_g [x;h] + b_g), o = sig(W_o [x;h] + b_o),
    c = f*c_prev + i*g, h = o*tanh(c).
    """
    hidden = params.w_i.shape[0]
    expect = x.shape[-1] + hidden
    for w in (params.w_i, params.w_f, params.w_g, params.w_o):
        if w.shape != (hidden, expect):
            raise ContractViolation(
                f"lstm gate weights must be ({hidden}, {expect}); got {w.shape}"
            )
    if h_prev.shape[-1] != hidden or c_prev.shape[-1] != hidden:
        raise ContractViolation("lstm state width must match gate weights")
    xh = concat([x, h_prev], axis=-1)
    i = sigmoid(affine(xh, params.w_i, params.b_i))
    f = sigmoid(affine(xh, params.w_f, params.b_f))
    g = tanh(affine(xh, params.w_g, params.b_g))
    o = sigmoid(affine(xh, params.w_o, params.b_o))
    c = add(mul(f, c_prev), mul(i, g))
    h = mul(o, tanh(c))
    return h, c


# ---------------------------------------------------------------------------
# numerical verification


def grad_check(f, point, eps=1e-5, mode=STANDARD):
    """Max relative error between taped and central-difference gradients.

    ``f`` maps a list of leaf tensors to one output tensor; the backward pass
    is seeded with ones. For each coordinate of every input, the analytic
    gradient is compared against (f(x+eps) - f(x-eps)) / (2 eps) summed over
    output entries, and |analytic - numeric| / max(1, |analytic|) is returned
    maximized over coordinates. Inputs whose function has ReLU kinks must sit
    at least ~10*eps away from the kinks.
    """
    arrays = [np.array(p, dtype=np.float64) for p in point]

    def run(vals):
        tape = Tape(mode)
        leaves = [tape.leaf(v) for v in vals]
        out = f(*leaves)
        return tape, leaves, out

    tape, leaves, out = run(arrays)
    if not np.all(np.isfinite(out.data)):
        raise ContractViolation("grad_check: function value is not finite at the point")
    tape.backward(out, np.ones_like(out.data))
    analytic = [
        leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data) for leaf in leaves
    ]

    worst = 0.0
    for ai, base in enumerate(arrays):
        flat = base.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            hi = run(arrays)[2].data.sum()
            flat[j] = orig - eps
            lo = run(arrays)[2].data.sum()
            flat[j] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise ContractViolation("grad_check: non-finite evaluation near the point")
            numeric = (hi - lo) / (2.0 * eps)
            a = analytic[ai].reshape(-1)[j]
            err = abs(a - numeric) / max(1.0, abs(a))
            if err > worst:
                worst = err
    return worst
