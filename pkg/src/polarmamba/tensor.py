"""Minimal dense-tensor computation graph with reverse-mode differentiation.

Tensors wrap row-major numpy arrays (float64 for verification, float32 for
training runs). Each differentiable operation records a graph node; calling
``backward`` on a scalar node accumulates gradients into every requires-grad
leaf. A registry of primitive kinds powers ``primitive_forward`` and the
finite-difference ``gradcheck`` harness.
"""

from __future__ import annotations

import numpy as np

from . import _scankernels as _K

__all__ = [
    "Tensor",
    "no_grad",
    "backward",
    "primitive_forward",
    "gradcheck",
    "registered_kinds",
]

_GRAD_ENABLED = True


class no_grad:
    """Context manager suppressing graph construction."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class Tensor:
    """A dense array plus optional gradient accumulator and graph linkage.

    ``data`` is always a numpy array; ``grad`` (same shape) is lazily
    allocated by backward. Non-leaf tensors carry ``op`` (the primitive kind
    that produced them), parent references and a backward rule.
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype if dtype is not None else None)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.op = "leaf"
        self._parents = ()
        self._backward = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, op={self.op!r}{flag})"

    def item(self):
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)))

    def __rsub__(self, other):
        return add(neg(self), _as_tensor(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self):
        return backward(self)


def _as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _node(data, parents, backward_rule, op):
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad or p._parents for p in parents):
        out._parents = tuple(parents)
        out._backward = backward_rule
        out.op = op
    return out


def _unbroadcast(grad, shape):
    """Reduce a broadcast gradient back to the original operand shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcast(kind, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{kind}: incompatible shapes {a.shape} and {b.shape}")


# -- element-wise primitives --------------------------------------------------


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("add", a.data, b.data)
    out = a.data + b.data

    def rule(go):
        return _unbroadcast(go, a.shape), _unbroadcast(go, b.shape)

    return _node(out, (a, b), rule, "add")


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("mul", a.data, b.data)
    out = a.data * b.data

    def rule(go):
        return (_unbroadcast(go * b.data, a.shape),
                _unbroadcast(go * a.data, b.shape))

    return _node(out, (a, b), rule, "mul")


def neg(a):
    a = _as_tensor(a)
    return _node(-a.data, (a,), lambda go: (-go,), "neg")


def exp(a):
    a = _as_tensor(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda go: (go * out,), "exp")


def log(a):
    a = _as_tensor(a)
    return _node(np.log(a.data), (a,), lambda go: (go / a.data,), "log")


def maximum(a, floor):
    """Element-wise max against a scalar floor; gradient is zero where clamped."""
    a = _as_tensor(a)
    floor = float(floor)
    out = np.maximum(a.data, floor)
    mask = a.data > floor
    return _node(out, (a,), lambda go: (go * mask,), "maximum")


def _sigmoid(x):
    # the clamp only suppresses overflow warnings; sigmoid saturates to
    # machine precision well inside +-60
    out = np.clip(x, -60.0, 60.0)
    np.negative(out, out=out)
    np.exp(out, out=out)
    out += 1.0
    np.reciprocal(out, out=out)
    return out


def silu(a):
    a = _as_tensor(a)
    sig = _sigmoid(a.data)
    out = a.data * sig

    def rule(go):
        g = 1.0 - sig
        g *= a.data
        g += 1.0
        g *= sig
        g *= go
        return (g,)

    return _node(out, (a,), rule, "silu")


def softplus(a):
    a = _as_tensor(a)
    # log1p(exp(-|x|)) + max(x, 0) is stable for large |x|
    out = np.abs(a.data)
    np.negative(out, out=out)
    np.exp(out, out=out)
    np.log1p(out, out=out)
    out += np.maximum(a.data, 0.0)

    def rule(go):
        return (go * _sigmoid(a.data),)

    return _node(out, (a,), rule, "softplus")


def softmax(a, axis=-1):
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def rule(go):
        inner = (go * out).sum(axis=axis, keepdims=True)
        return ((go - inner) * out,)

    return _node(out, (a,), rule, "softmax")


def rmsnorm(a, gain, eps=1e-5):
    """Root-mean-square normalization over the last axis with learned gain."""
    a, gain = _as_tensor(a), _as_tensor(gain)
    if gain.shape != a.shape[-1:]:
        raise ValueError(f"rmsnorm: gain shape {gain.shape} does not match last axis of {a.shape}")
    d = a.shape[-1]
    inv = 1.0 / np.sqrt((a.data * a.data).mean(axis=-1, keepdims=True) + eps)
    out = a.data * inv * gain.data

    def rule(go):
        u = go * gain.data
        dot = (u * a.data).mean(axis=-1, keepdims=True)
        ga = inv * u - a.data * (inv ** 3) * dot
        ggain = (go * a.data * inv).reshape(-1, d).sum(axis=0)
        return ga, ggain

    return _node(out, (a, gain), rule, "rmsnorm")


# -- shape / structure primitives ---------------------------------------------


def reshape(a, shape):
    a = _as_tensor(a)
    out = a.data.reshape(shape)
    return _node(out, (a,), lambda go: (go.reshape(a.shape),), "reshape")


def transpose(a, axes):
    a = _as_tensor(a)
    inv = np.argsort(axes)
    out = a.data.transpose(axes)
    return _node(out, (a,), lambda go: (go.transpose(inv),), "transpose")


def flip(a, axis):
    a = _as_tensor(a)
    out = np.flip(a.data, axis=axis)
    return _node(out.copy(), (a,), lambda go: (np.flip(go, axis=axis),), "flip")


def broadcast_to(a, shape):
    a = _as_tensor(a)
    try:
        out = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise ValueError(f"broadcast_to: cannot broadcast {a.shape} to {tuple(shape)}")
    return _node(out, (a,), lambda go: (_unbroadcast(go, a.shape),), "broadcast_to")


def concat(tensors, axis):
    tensors = [_as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def rule(go):
        return tuple(np.split(go, splits, axis=axis))

    return _node(out, tuple(tensors), rule, "concat")


def narrow(a, axis, start, length):
    """Contiguous slice [start, start+length) along one axis."""
    a = _as_tensor(a)
    if start < 0 or start + length > a.shape[axis]:
        raise ValueError(f"narrow: [{start}, {start + length}) out of range for axis {axis} of {a.shape}")
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = a.data[idx].copy()

    def rule(go):
        g = np.zeros_like(a.data)
        g[idx] = go
        return (g,)

    return _node(out, (a,), rule, "narrow")


def permute_axis(a, perm, axis):
    """Reorder one axis by a permutation index array (bijection required)."""
    a = _as_tensor(a)
    perm = np.asarray(perm, dtype=np.int64)
    if perm.ndim != 1 or perm.shape[0] != a.shape[axis]:
        raise ValueError(f"permute_axis: permutation of length {perm.shape} does not fit axis {axis} of {a.shape}")
    inv = np.argsort(perm)
    out = np.take(a.data, perm, axis=axis)
    return _node(out, (a,), lambda go: (np.take(go, inv, axis=axis),), "permute_axis")


def tsum(a, axis=None):
    a = _as_tensor(a)
    out = a.data.sum(axis=axis)

    def rule(go):
        if axis is None:
            return (np.full(a.shape, go, dtype=a.data.dtype),)
        return (np.broadcast_to(np.expand_dims(go, axis), a.shape).copy(),)

    return _node(out, (a,), rule, "sum")


def tmean(a, axis=None):
    a = _as_tensor(a)
    out = a.data.mean(axis=axis)
    n = a.size if axis is None else a.shape[axis]

    def rule(go):
        if axis is None:
            return (np.full(a.shape, go / n, dtype=a.data.dtype),)
        return (np.broadcast_to(np.expand_dims(go / n, axis), a.shape).copy(),)

    return _node(out, (a,), rule, "mean")


# -- linear algebra primitives -------------------------------------------------


def matmul(a, b):
    """Matrix product; ``b`` must be 2-D, ``a`` may carry leading batch axes."""
    a, b = _as_tensor(a), _as_tensor(b)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = a.data @ b.data

    def rule(go):
        ga = go @ b.data.T
        gb = a.data.reshape(-1, a.shape[-1]).T @ go.reshape(-1, b.shape[1])
        return ga, gb

    return _node(out, (a, b), rule, "matmul")


def linear(x, w, b=None):
    """Affine map on the last axis: x @ w (+ b)."""
    y = matmul(x, w)
    if b is None:
        return y
    return add(y, b)


def conv2d(x, w, b, stride):
    """Non-overlapping 2-D convolution (stride equals the square kernel size).

    x: (B, C, H, W), w: (D, C, k, k), b: (D,). Returns (B, D, H/k, W/k).
    """
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    bs, c, h, wd = x.shape
    dout, cin, kh, kw = w.shape
    if cin != c or kh != stride or kw != stride:
        raise ValueError(f"conv2d: weight {w.shape} incompatible with input {x.shape} at stride {stride}")
    if h % kh or wd % kw:
        raise ValueError(f"conv2d: input {h}x{wd} not divisible by kernel {kh}")
    ho, wo = h // kh, wd // kw
    cols = (x.data.reshape(bs, c, ho, kh, wo, kw)
            .transpose(0, 2, 4, 1, 3, 5)
            .reshape(bs, ho * wo, c * kh * kw))
    wflat = w.data.reshape(dout, -1)
    out = (cols @ wflat.T + b.data).reshape(bs, ho, wo, dout).transpose(0, 3, 1, 2)

    def rule(go):
        g2 = go.transpose(0, 2, 3, 1).reshape(bs, ho * wo, dout)
        gcols = g2 @ wflat
        gx = (gcols.reshape(bs, ho, wo, c, kh, kw)
              .transpose(0, 3, 1, 4, 2, 5)
              .reshape(bs, c, h, wd))
        gw = (g2.reshape(-1, dout).T @ cols.reshape(-1, c * kh * kw)).reshape(w.shape)
        gb = g2.sum(axis=(0, 1))
        return gx, gw, gb

    return _node(out, (x, w, b), rule, "conv2d")


def conv1d_depthwise(x, w, b):
    """Causal per-channel 1-D convolution along the length axis.

    x: (B, L, D), w: (D, K), b: (D,). Output t depends on inputs t-K+1 .. t
    with zero left padding.
    """
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    bs, length, d = x.shape
    dk, k = w.shape
    if dk != d:
        raise ValueError(f"conv1d_depthwise: weight {w.shape} incompatible with input {x.shape}")
    # time-major padded buffer keeps the shifted windows contiguous
    xp = np.zeros((length + k - 1, bs, d), dtype=x.data.dtype)
    xp[k - 1:] = x.data.transpose(1, 0, 2)
    out = np.empty((length, bs, d), dtype=x.data.dtype)
    out[:] = b.data
    tmp = np.empty_like(out)
    for j in range(k):
        np.multiply(xp[j:j + length], w.data[:, j], out=tmp)
        out += tmp

    def rule(go):
        got = np.ascontiguousarray(go.transpose(1, 0, 2))
        gxp = np.zeros_like(xp)
        gw = np.empty_like(w.data)
        buf = np.empty_like(got)
        for j in range(k):
            np.multiply(got, w.data[:, j], out=buf)
            gxp[j:j + length] += buf
            np.multiply(got, xp[j:j + length], out=buf)
            gw[:, j] = buf.sum(axis=(0, 1))
        gb = got.sum(axis=(0, 1))
        return np.ascontiguousarray(gxp[k - 1:].transpose(1, 0, 2)), gw, gb

    return _node(np.ascontiguousarray(out.transpose(1, 0, 2)), (x, w, b),
                 rule, "conv1d_depthwise")


def selective_scan_zoh(x, delta, a, b_seq, c_seq):
    """Fused zero-order-hold discretization plus scan.

    Computes abar = exp(delta (x) a), bbar = delta (x) b and runs the same
    recurrence as ``selective_scan`` in one node, with time-major internals.
    x/delta: (B, L, D), a: (D, N), b_seq/c_seq: (B, L, N). Equivalent to the
    composed discretize-then-scan path; exists so the training loop avoids
    materializing per-node gradients of (B, L, D, N) intermediates.
    """
    x, delta, a, b_seq, c_seq = (_as_tensor(t) for t in (x, delta, a, b_seq, c_seq))
    bs, length, d = x.shape
    n = a.shape[1]
    if delta.shape != (bs, length, d) or a.shape != (d, n) \
            or b_seq.shape != (bs, length, n) or c_seq.shape != (bs, length, n):
        raise ValueError(
            f"selective_scan_zoh: inconsistent shapes x={x.shape} delta={delta.shape} "
            f"a={a.shape} b={b_seq.shape} c={c_seq.shape}")
    # exact zeros are tolerated: float32 softplus underflows for very
    # negative logits, and the recurrence degenerates cleanly there
    # (gain 1, input gated off); negative steps remain a hard error
    if np.any(delta.data < 0):
        raise ValueError("selective_scan_zoh: delta must be non-negative")

    # internal layout is (L, B, N, D): the long channel axis stays innermost
    # and contiguous; the sequential sweep runs compiled when numba is present
    dt = np.ascontiguousarray(delta.data.transpose(1, 0, 2))        # (L, B, D)
    xt = np.ascontiguousarray(x.data.transpose(1, 0, 2))
    bt = np.ascontiguousarray(b_seq.data.transpose(1, 0, 2))        # (L, B, N)
    ct = np.ascontiguousarray(c_seq.data.transpose(1, 0, 2))
    at = np.ascontiguousarray(a.data.T)                              # (N, D)
    abar = dt[:, :, None, :] * at
    np.exp(abar, out=abar)                                           # (L, B, N, D)
    dx = dt * xt

    if _K.HAVE_NUMBA:
        hs, y = _K.scan_fwd(abar, dx, bt, ct)
    else:
        bx = dx[:, :, None, :] * bt[..., None]
        hs = np.empty((length + 1, bs, n, d), dtype=x.data.dtype)
        hs[0] = 0
        for t in range(length):
            np.multiply(abar[t], hs[t], out=hs[t + 1])
            hs[t + 1] += bx[t]
        y = np.matmul(ct[:, :, None, :], hs[1:])[:, :, 0, :]         # (L, B, D)
    out = np.ascontiguousarray(y.transpose(1, 0, 2))

    def rule(go):
        got = np.ascontiguousarray(go.transpose(1, 0, 2))            # (L, B, D)
        if _K.HAVE_NUMBA:
            gx, gdelta, gat, gb, gc = _K.scan_bwd(got, abar, hs, dx, bt, ct,
                                                  at, dt, xt)
            ga = gat.T.copy()
        else:
            gh_all = np.empty_like(hs[1:])
            gh = got[length - 1][:, None, :] * ct[length - 1][..., None]
            gh_all[length - 1] = gh
            buf = np.empty_like(gh)
            for t in range(length - 2, -1, -1):
                np.multiply(gh, abar[t + 1], out=gh)
                np.multiply(got[t][:, None, :], ct[t][..., None], out=buf)
                gh += buf
                gh_all[t] = gh
            gc = np.matmul(hs[1:], got[..., None])[..., 0]           # (L, B, N)
            s = np.matmul(bt[:, :, None, :], gh_all)[:, :, 0, :]     # (L, B, D)
            gx = dt * s
            gdelta = xt * s
            gb = np.matmul(gh_all, dx[..., None])[..., 0]
            w = gh_all * hs[:-1]
            w *= abar                                                # d/d(delta*a)
            gdelta += (w * at).sum(axis=2)
            ga = (w * dt[:, :, None, :]).sum(axis=(0, 1)).T
        return (np.ascontiguousarray(gx.transpose(1, 0, 2)),
                np.ascontiguousarray(gdelta.transpose(1, 0, 2)),
                np.ascontiguousarray(ga),
                np.ascontiguousarray(gb.transpose(1, 0, 2)),
                np.ascontiguousarray(gc.transpose(1, 0, 2)))

    return _node(out, (x, delta, a, b_seq, c_seq), rule, "selective_scan_zoh")


def selective_scan(x, abar, bbar, c):
    """Linear recurrence h_t = abar_t * h_{t-1} + bbar_t * x_t, y_t = <c_t, h_t>.

    x: (B, L, D), abar/bbar: (B, L, D, N), c: (B, L, N). The state h starts at
    zero; the scan is sequential over L and differentiable in all four inputs.
    """
    x, abar, bbar, c = (_as_tensor(t) for t in (x, abar, bbar, c))
    bs, length, d = x.shape
    if abar.shape != (bs, length, d, abar.shape[-1]):
        raise ValueError(f"selective_scan: abar shape {abar.shape} incompatible with input {x.shape}")
    n = abar.shape[-1]
    if bbar.shape != abar.shape or c.shape != (bs, length, n):
        raise ValueError(
            f"selective_scan: inconsistent shapes x={x.shape} abar={abar.shape} "
            f"bbar={bbar.shape} c={c.shape}")

    bx = bbar.data * x.data[..., None]
    y = np.empty_like(x.data)
    keep_states = _GRAD_ENABLED and any(
        t.requires_grad or t._parents for t in (x, abar, bbar, c))
    if keep_states:
        hs = np.zeros((bs, length + 1, d, n), dtype=x.data.dtype)
        for t in range(length):
            np.multiply(abar.data[:, t], hs[:, t], out=hs[:, t + 1])
            hs[:, t + 1] += bx[:, t]
            y[:, t] = np.matmul(hs[:, t + 1], c.data[:, t, :, None])[..., 0]
    else:
        h = np.zeros((bs, d, n), dtype=x.data.dtype)
        for t in range(length):
            h *= abar.data[:, t]
            h += bx[:, t]
            y[:, t] = np.matmul(h, c.data[:, t, :, None])[..., 0]
        return _node(y, (x, abar, bbar, c), None, "selective_scan")

    def rule(go):
        gabar = np.empty_like(abar.data)
        gbbar = np.empty_like(bbar.data)
        gc = np.empty_like(c.data)
        gx = np.empty_like(x.data)
        gh = np.zeros((bs, d, n), dtype=x.data.dtype)
        for t in range(length - 1, -1, -1):
            gh += go[:, t, :, None] * c.data[:, t, None, :]
            gc[:, t] = (go[:, t, :, None] * hs[:, t + 1]).sum(axis=1)
            gabar[:, t] = gh * hs[:, t]
            gbbar[:, t] = gh * x.data[:, t, :, None]
            gx[:, t] = (gh * bbar.data[:, t]).sum(axis=-1)
            gh *= abar.data[:, t]
        return gx, gabar, gbbar, gc

    return _node(y, (x, abar, bbar, c), rule, "selective_scan")


# -- backward pass --------------------------------------------------------------


def backward(loss):
    """Accumulate gradients of a scalar node into every requires-grad leaf.

    Repeated calls without ``zero_grad`` accumulate. Returns a map from leaf
    tensor to its gradient array.
    """
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor")
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")

    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    grads = {id(loss): np.ones_like(loss.data)}
    leaf_map = {}
    for node in reversed(topo):
        go = grads.pop(id(node), None)
        if go is None:
            continue
        if node.requires_grad:
            node.grad = go.copy() if node.grad is None else node.grad + go
            leaf_map[node] = node.grad
        if node._backward is None:
            continue
        for parent, g in zip(node._parents, node._backward(go)):
            if g is None or not (parent.requires_grad or parent._parents):
                continue
            pid = id(parent)
            if pid in grads:
                grads[pid] = grads[pid] + g
            else:
                grads[pid] = g
    return leaf_map


# -- primitive registry and gradcheck --------------------------------------------

_REGISTRY = {
    "add": add,
    "mul": mul,
    "neg": neg,
    "exp": exp,
    "log": log,
    "maximum": maximum,
    "silu": silu,
    "softplus": softplus,
    "softmax": softmax,
    "rmsnorm": rmsnorm,
    "reshape": reshape,
    "transpose": transpose,
    "flip": flip,
    "broadcast_to": broadcast_to,
    "concat": concat,
    "narrow": narrow,
    "permute_axis": permute_axis,
    "sum": tsum,
    "mean": tmean,
    "matmul": matmul,
    "linear": linear,
    "conv2d": conv2d,
    "conv1d_depthwise": conv1d_depthwise,
    "selective_scan": selective_scan,
    "selective_scan_zoh": selective_scan_zoh,
}


def registered_kinds():
    return sorted(_REGISTRY)


def primitive_forward(kind, inputs, attrs=None):
    """Dispatch a primitive by kind tag. Unknown kinds are hard errors."""
    fn = _REGISTRY.get(kind)
    if fn is None:
        raise ValueError(f"unknown primitive kind: {kind!r}")
    attrs = attrs or {}
    if kind == "concat":
        return fn(inputs, **attrs)
    return fn(*inputs, **attrs)


def gradcheck(kind_or_fn, inputs, attrs=None, step=1e-5, seed=0):
    """Max relative error between analytic and central-difference gradients.

    ``inputs`` are numpy arrays; the output is reduced to a scalar through a
    fixed random projection so a single backward pass yields the full
    gradient. Non-finite values report as ``inf``.
    """
    if callable(kind_or_fn):
        fn = kind_or_fn
    else:
        def fn(*ts):
            return primitive_forward(kind_or_fn, list(ts), attrs)

    arrays = [np.asarray(a, dtype=np.float64) for a in inputs]
    rng = np.random.default_rng(seed)

    def scalar(*arrs):
        ts = [Tensor(a, requires_grad=True) for a in arrs]
        out = fn(*ts)
        return ts, out

    ts, out = scalar(*arrays)
    proj = rng.standard_normal(out.shape)

    def evaluate(arrs):
        with no_grad():
            _, o = scalar(*arrs)
        return float((o.data * proj).sum())

    loss = tsum(mul(out, Tensor(proj)))
    backward(loss)

    worst = 0.0
    for i, t in enumerate(ts):
        analytic = t.grad if t.grad is not None else np.zeros_like(arrays[i])
        flat = arrays[i].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = evaluate(arrays)
            flat[j] = orig - step
            down = evaluate(arrays)
            flat[j] = orig
            numeric = (up - down) / (2.0 * step)
            a = analytic.reshape(-1)[j]
            if not np.isfinite(numeric) or not np.isfinite(a):
                return np.inf
            err = abs(a - numeric) / max(abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
