"""Selective state-space machinery.

Input-dependent parameter selection, zero-order-hold discretization, the
linear scan recurrence, and an independent convolutional-form oracle used to
verify the recurrence on time-invariant parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass
class SSMParams:
    """Learnable parameter set of one scan direction.

    ``a_log`` stores log magnitudes; the continuous transition is
    A = -exp(a_log), so discrete gains exp(delta * A) stay in (0, 1) for any
    positive delta. ``w_delta`` projects channels to a single step-size
    logit that is broadcast back to all channels before the softplus.
    """
    a_log: Tensor
    w_b: Tensor
    w_c: Tensor
    w_delta: Tensor
    delta_bias: Tensor

    @property
    def d(self):
        return self.a_log.shape[0]

    @property
    def n(self):
        return self.a_log.shape[1]

    @staticmethod
    def init(d, n, rng, dtype=np.float64):
        """S4-style init: integer-ramp transition magnitudes, small random
        projections, delta bias placed so softplus lands in [0.001, 0.1]."""
        a_log = np.log(np.tile(np.arange(1, n + 1, dtype=dtype), (d, 1)))
        scale = 1.0 / np.sqrt(d)
        w_b = rng.uniform(-scale, scale, (d, n)).astype(dtype)
        w_c = rng.uniform(-scale, scale, (d, n)).astype(dtype)
        w_delta = rng.uniform(-scale, scale, (d, 1)).astype(dtype)
        target = rng.uniform(0.001, 0.1, d).astype(dtype)
        delta_bias = np.log(np.expm1(target))
        return SSMParams(
            a_log=Tensor(a_log.astype(dtype), requires_grad=True),
            w_b=Tensor(w_b, requires_grad=True),
            w_c=Tensor(w_c, requires_grad=True),
            w_delta=Tensor(w_delta, requires_grad=True),
            delta_bias=Tensor(delta_bias.astype(dtype), requires_grad=True),
        )

    def named_params(self, prefix):
        return {
            f"{prefix}.a_log": self.a_log,
            f"{prefix}.w_b": self.w_b,
            f"{prefix}.w_c": self.w_c,
            f"{prefix}.w_delta": self.w_delta,
            f"{prefix}.delta_bias": self.delta_bias,
        }


@dataclass
class DiscreteSSM:
    """Per-token discretized system: abar/bbar (B, L, D, N), c (B, L, N)."""
    abar: Tensor
    bbar: Tensor
    c: Tensor


def select_params(x: Tensor, params: SSMParams):
    """Token-wise B, C and delta from the input sequence.

    x: (B, L, D). B and C are linear projections to the state dimension;
    delta is softplus(bias + scalar projection) broadcast over channels, so
    it is strictly positive.
    """
    b_seq = T.matmul(x, params.w_b)
    c_seq = T.matmul(x, params.w_c)
    logit = T.matmul(x, params.w_delta)           # (B, L, 1)
    delta = T.softplus(T.add(logit, params.delta_bias))
    return b_seq, c_seq, delta


def discretize(a: Tensor, b_seq: Tensor, delta: Tensor) -> DiscreteSSM:
    """Zero-order-hold step: abar = exp(delta * A), bbar = delta * B.

    a: (D, N) with all entries <= 0 expected; delta: (B, L, D) strictly
    positive; b_seq: (B, L, N).
    """
    if np.any(delta.data <= 0):
        raise ValueError("discretize: delta must be strictly positive")
    bs, length, d = delta.shape
    n = a.shape[1]
    a4 = T.reshape(a, (1, 1, d, n))
    delta4 = T.reshape(delta, (bs, length, d, 1))
    abar = T.exp(T.mul(delta4, a4))
    bbar = T.mul(delta4, T.reshape(b_seq, (bs, length, 1, n)))
    return DiscreteSSM(abar=abar, bbar=bbar, c=None)


def selective_scan(x: Tensor, d: DiscreteSSM) -> Tensor:
    """Run the recurrence h_t = abar_t h_{t-1} + bbar_t x_t, y_t = <c_t, h_t>."""
    return T.selective_scan(x, d.abar, d.bbar, d.c)


def apply_ssm(x: Tensor, params: SSMParams) -> Tensor:
    """Full selective pass: selection, discretization, scan (fused node)."""
    b_seq, c_seq, delta = select_params(x, params)
    a = T.neg(T.exp(params.a_log))
    return T.selective_scan_zoh(x, delta, a, b_seq, c_seq)


def apply_ssm_composed(x: Tensor, params: SSMParams) -> Tensor:
    """Same computation via the separate discretize and scan contract ops;
    kept as the reference path the fused node is verified against."""
    b_seq, c_seq, delta = select_params(x, params)
    a = T.neg(T.exp(params.a_log))
    disc = discretize(a, b_seq, delta)
    disc.c = c_seq
    return selective_scan(x, disc)


def conv_oracle(x, abar, bbar, c, length=None):
    """Convolutional form of the time-invariant recurrence (oracle only).

    Kernel entry j for channel d is sum_n c[n] * abar[d,n]^j * bbar[d,n];
    the output is the causal convolution of x with that kernel. Accepts
    either constant (D, N)/(N,) parameters or full per-token arrays, which
    must be constant over batch and time (time-varying input is an error).
    """
    x = np.asarray(x, dtype=np.float64)
    abar = np.asarray(abar, dtype=np.float64)
    bbar = np.asarray(bbar, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    bs, ln, d = x.shape
    if length is None:
        length = ln

    def collapse(arr, want_ndim):
        if arr.ndim == want_ndim:
            return arr
        flat = arr.reshape(-1, *arr.shape[-want_ndim:])
        if not np.all(flat == flat[0]):
            raise ValueError("conv_oracle: parameters vary over batch or time")
        return flat[0]

    abar = collapse(abar, 2)
    bbar = collapse(bbar, 2)
    c = collapse(c, 1)
    n = abar.shape[1]
    if abar.shape != (d, n) or bbar.shape != (d, n) or c.shape != (n,):
        raise ValueError(
            f"conv_oracle: inconsistent shapes abar={abar.shape} bbar={bbar.shape} c={c.shape}")

    powers = np.ones((length, d, n), dtype=np.float64)
    for j in range(1, length):
        powers[j] = powers[j - 1] * abar
    kernel = (powers * bbar * c).sum(axis=-1)      # (L, D)

    y = np.zeros_like(x)
    for t in range(length):
        for j in range(t + 1):
            y[:, t] += kernel[j] * x[:, t - j]
    return y
