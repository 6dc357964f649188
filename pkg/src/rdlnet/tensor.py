"""Minimal deterministic tensor engine with reverse-mode autodiff.

Values are dense row-major numpy arrays (float32 or float64). Operations
executed while a Tape is active are recorded as TapeNodes; Tape.backward
replays them in reverse to accumulate gradients into Parameters. Without
an active tape the same functions run in plain inference mode.

Every published operation checks its result for NaN/Inf and raises
NonFiniteError on the first bad value, so numerical blow-ups surface at
the op that produced them instead of corrupting downstream state.
"""

import threading

import numpy as np

DEFAULT_DTYPE = np.float64

_state = threading.local()

_finite_checks = True


class NonFiniteError(ArithmeticError):
    """An operation produced NaN or Inf."""


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


def set_finite_checks(enabled: bool) -> None:
    global _finite_checks
    _finite_checks = bool(enabled)


def _check(data: np.ndarray, op: str) -> np.ndarray:
    if _finite_checks and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values produced by {op}")
    return data


class Tensor:
    """Array value plus autodiff bookkeeping (gradient filled by backward)."""

    __slots__ = ("data", "grad")

    def __init__(self, data, dtype=None):
        self.data = np.asarray(data, dtype=dtype if dtype is not None else DEFAULT_DTYPE)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


class Parameter(Tensor):
    """Trainable leaf tensor with a persistent gradient buffer and unique name."""

    __slots__ = ("name",)

    def __init__(self, name: str, data, dtype=None):
        super().__init__(data, dtype=dtype)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


class TapeNode:
    """One recorded operation: id, inputs, and the saved backward closure."""

    __slots__ = ("op", "inputs", "out", "backward_fn")

    def __init__(self, op, inputs, out, backward_fn):
        self.op = op
        self.inputs = inputs
        self.out = out
        self.backward_fn = backward_fn


class Tape:
    """Forward-order operation record for one forward/backward cycle.

    Use as a context manager; operations executed inside record themselves.
    Tapes are thread-local, so independent model instances may run on
    separate threads, but a single tape is not reentrant.
    """

    def __init__(self):
        self.nodes = []
        self._consumed = False

    def __enter__(self):
        if getattr(_state, "tape", None) is not None:
            raise RuntimeError("a tape is already active on this thread")
        _state.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _state.tape = None
        return False

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(input) into .grad of every recorded input.

        loss must be a scalar produced by operations recorded on this tape.
        Parameters not reachable from loss keep whatever gradient they had
        (zero after zero_grad), satisfying the unreachable-is-zero contract.
        """
        if self._consumed:
            raise RuntimeError("tape already consumed by a previous backward call")
        if loss.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {loss.data.shape}")
        self._consumed = True
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            if node.out.grad is None:
                continue
            node.backward_fn(node.out.grad)
        # intermediate grads are not needed once parameters are populated
        for node in self.nodes:
            if not isinstance(node.out, Parameter):
                node.out.grad = None


def active_tape():
    return getattr(_state, "tape", None)


def _record(op, inputs, out, backward_fn):
    tape = active_tape()
    if tape is not None:
        tape.nodes.append(TapeNode(op, inputs, out, backward_fn))
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


# ---------------------------------------------------------------------------
# operations

def causal_dilated_conv1d(x: Tensor, kernel: Parameter, bias: Parameter, dilation: int) -> Tensor:
    """1D causal dilated convolution over frames.

    x: (T, Cin); kernel: (k, Cin, Cout); bias: (Cout,). The input is
    implicitly left-padded with (k-1)*dilation zero frames, so the output
    has T frames and out[t] depends only on frames <= t. kernel[k-1] is
    the tap applied to the current frame.
    """
    if x.data.ndim != 2 or kernel.data.ndim != 3:
        raise ShapeError("conv expects x (T, Cin) and kernel (k, Cin, Cout)")
    k, cin, cout = kernel.data.shape
    if x.data.shape[1] != cin:
        raise ShapeError(f"conv channel mismatch: input has {x.data.shape[1]}, kernel expects {cin}")
    if bias.data.shape != (cout,):
        raise ShapeError("conv bias shape must be (Cout,)")
    if k < 1 or dilation < 1:
        raise ShapeError("kernel size and dilation must be >= 1")

    t_len = x.data.shape[0]
    pad = (k - 1) * dilation
    if pad:
        xp = np.zeros((t_len + pad, cin), dtype=x.data.dtype)
        xp[pad:] = x.data
    else:
        xp = x.data
    w2 = kernel.data.reshape(k * cin, cout)
    if k == 1:
        cols = xp
    else:
        cols = np.empty((t_len, k * cin), dtype=x.data.dtype)
        for j in range(k):
            # kernel tap j sees the frame lagged by (k-1-j)*dilation
            cols[:, j * cin:(j + 1) * cin] = xp[j * dilation:j * dilation + t_len]
    out = Tensor(_check(cols @ w2 + bias.data, "causal_dilated_conv1d"), dtype=x.data.dtype)

    def backward(g):
        _accum(kernel, (cols.T @ g).reshape(k, cin, cout))
        _accum(bias, g.sum(axis=0))
        gcols = g @ w2.T
        if k == 1:
            gx = gcols
        else:
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[j * dilation:j * dilation + t_len] += gcols[:, j * cin:(j + 1) * cin]
            gx = gxp[pad:]
        _accum(x, gx)

    return _record("conv1d", (x, kernel, bias), out, backward)


def layer_norm(x: Tensor, gain: Parameter, shift: Parameter, eps: float = 1e-5) -> Tensor:
    """Normalise each frame over its channel axis, then scale and shift."""
    if x.data.ndim != 2:
        raise ShapeError("layer_norm expects (T, C)")
    c = x.data.shape[1]
    if gain.data.shape != (c,) or shift.data.shape != (c,):
        raise ShapeError("layer_norm gain/shift must have shape (C,)")
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = np.mean(xc * xc, axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    out = Tensor(_check(xhat * gain.data + shift.data, "layer_norm"), dtype=x.data.dtype)

    def backward(g):
        _accum(gain, (g * xhat).sum(axis=0))
        _accum(shift, g.sum(axis=0))
        gxhat = g * gain.data
        # d/dx of (x - mean) / sqrt(var + eps) with per-frame statistics
        gx = inv_std / c * (c * gxhat
                            - gxhat.sum(axis=1, keepdims=True)
                            - xhat * (gxhat * xhat).sum(axis=1, keepdims=True))
        _accum(x, gx)

    return _record("layer_norm", (x, gain, shift), out, backward)


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0), dtype=x.data.dtype)

    def backward(g):
        _accum(x, g * (x.data > 0))

    return _record("relu", (x,), out, backward)


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out_data = np.empty_like(d)
    pos = d >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out_data[~pos] = ex / (1.0 + ex)
    out = Tensor(_check(out_data, "sigmoid"), dtype=d.dtype)

    def backward(g):
        _accum(x, g * out.data * (1.0 - out.data))

    return _record("sigmoid", (x,), out, backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")
    out = Tensor(_check(a.data + b.data, "add"), dtype=a.data.dtype)

    def backward(g):
        _accum(a, g)
        _accum(b, g)

    return _record("add", (a, b), out, backward)


def concat_channels(parts) -> Tensor:
    """Concatenate (T, Ci) tensors along channels, preserving operand order."""
    parts = list(parts)
    if not parts:
        raise ShapeError("concat_channels needs at least one operand")
    if len(parts) == 1:
        return parts[0]
    t_len = parts[0].data.shape[0]
    for p in parts:
        if p.data.ndim != 2 or p.data.shape[0] != t_len:
            raise ShapeError("concat_channels operands must share the frame axis")
    out = Tensor(np.concatenate([p.data for p in parts], axis=1), dtype=parts[0].data.dtype)
    widths = [p.data.shape[1] for p in parts]

    def backward(g):
        off = 0
        for p, w in zip(parts, widths):
            _accum(p, g[:, off:off + w])
            off += w

    return _record("concat", tuple(parts), out, backward)


def dense_layer(x: Tensor, weights: Parameter, bias: Parameter) -> Tensor:
    """Per-frame fully connected layer: (T, Cin) @ (Cin, Cout) + bias."""
    if x.data.shape[1] != weights.data.shape[0]:
        raise ShapeError(f"dense shape mismatch: input {x.data.shape} vs weights {weights.data.shape}")
    out = Tensor(_check(x.data @ weights.data + bias.data, "dense_layer"), dtype=x.data.dtype)

    def backward(g):
        _accum(weights, x.data.T @ g)
        _accum(bias, g.sum(axis=0))
        _accum(x, g @ weights.data.T)

    return _record("dense", (x, weights, bias), out, backward)


def dense_layer_nobias(x: Tensor, weights: Parameter) -> Tensor:
    """Per-frame linear map without bias (weighted residual projections)."""
    if x.data.shape[1] != weights.data.shape[0]:
        raise ShapeError(f"projection shape mismatch: input {x.data.shape} vs weights {weights.data.shape}")
    out = Tensor(_check(x.data @ weights.data, "dense_layer_nobias"), dtype=x.data.dtype)

    def backward(g):
        _accum(weights, x.data.T @ g)
        _accum(x, g @ weights.data.T)

    return _record("dense_nobias", (x, weights), out, backward)


def tsum(x: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    out = Tensor(np.asarray(x.data.sum(), dtype=x.data.dtype))

    def backward(g):
        _accum(x, np.broadcast_to(g, x.data.shape).astype(x.data.dtype))

    return _record("sum", (x,), out, backward)


BCE_EPS = 1e-7


def binary_cross_entropy(pred: Tensor, target: np.ndarray) -> Tensor:
    """Cross-entropy of (0,1) predictions, summed over channels and averaged
    over frames. Predictions are clamped to [BCE_EPS, 1-BCE_EPS] so saturated
    sigmoid outputs cannot produce log(0)."""
    t = np.asarray(target, dtype=pred.data.dtype)
    if pred.data.shape != t.shape:
        raise ShapeError(f"loss shape mismatch: {pred.data.shape} vs {t.shape}")
    n_frames = pred.data.shape[0] if pred.data.ndim > 0 else 1
    p = np.clip(pred.data, BCE_EPS, 1.0 - BCE_EPS)
    per_elem = -(t * np.log(p) + (1.0 - t) * np.log1p(-p))
    out = Tensor(np.asarray(per_elem.sum() / n_frames, dtype=pred.data.dtype))

    def backward(g):
        _accum(pred, (g / n_frames) * (p - t) / (p * (1.0 - p)))

    return _record("bce", (pred,), out, backward)


# ---------------------------------------------------------------------------
# optimisation

class Adam:
    """Adam with bias correction; first/second moments persist across steps.

    update: theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {p.name: np.zeros_like(p.data) for p in self.params}
        self.v = {p.name: np.zeros_like(p.data) for p in self.params}

    def step(self):
        self.step_count += 1
        b1t = 1.0 - self.beta1 ** self.step_count
        b2t = 1.0 - self.beta2 ** self.step_count
        for p in self.params:
            m = self.m[p.name]
            v = self.v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * (p.grad * p.grad)
            p.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def clip_grad_norm(params, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        total += float(np.sum(p.grad * p.grad))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for p in params:
            p.grad *= scale
    return norm
