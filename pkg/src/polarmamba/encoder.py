"""Image patch to token features.

Patch embedding with non-overlapping convolution, spiral-scan reordering
with a class token (tail by default, position configurable for ablations),
fixed sinusoidal positions, and stacked bidirectional selective-scan blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .ssm import SSMParams, apply_ssm
from .tensor import Tensor


@dataclass
class SpiralOrder:
    rows: int
    cols: int
    permutation: np.ndarray


def spiral_permutation(rows: int, cols: int) -> SpiralOrder:
    """Clockwise inward spiral over row-major flat indices.

    Starts top-left moving right, then down, left and up along shrinking
    boundaries until every cell is visited once.
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"spiral_permutation: grid {rows}x{cols} is empty")
    top, bottom, left, right = 0, rows - 1, 0, cols - 1
    order = []
    while top <= bottom and left <= right:
        for c in range(left, right + 1):
            order.append(top * cols + c)
        for r in range(top + 1, bottom + 1):
            order.append(r * cols + right)
        if top < bottom:
            for c in range(right - 1, left - 1, -1):
                order.append(bottom * cols + c)
        if left < right:
            for r in range(bottom - 1, top, -1):
                order.append(r * cols + left)
        top, bottom, left, right = top + 1, bottom - 1, left + 1, right - 1
    return SpiralOrder(rows=rows, cols=cols,
                       permutation=np.asarray(order, dtype=np.int64))


def raster_permutation(rows: int, cols: int) -> SpiralOrder:
    """Identity (row-major) ordering, the baseline scan."""
    return SpiralOrder(rows=rows, cols=cols,
                       permutation=np.arange(rows * cols, dtype=np.int64))


def sinusoidal_positions(length: int, d: int) -> np.ndarray:
    """Fixed positional table: sin on even channels, cos on odd ones."""
    if d % 2:
        raise ValueError(f"sinusoidal_positions: dimension {d} must be even")
    t = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(d // 2, dtype=np.float64)[None, :]
    angle = t / np.power(10000.0, 2.0 * i / d)
    table = np.empty((length, d), dtype=np.float64)
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle)
    return table


@dataclass
class PatchEmbed:
    """Non-overlapping convolution projecting 9-channel pixels to D tokens.

    ``pool`` realizes larger effective kernels while keeping the learned
    weight shape fixed: an average pool of that factor runs before the
    convolution, so the effective tiling size is pool * kernel. This keeps
    local and global branches shape-identical parameter-by-parameter, which
    the momentum (EMA) update requires.
    """
    kernel: int
    pool: int
    weight: Tensor
    bias: Tensor

    @property
    def tile(self):
        return self.kernel * self.pool

    @staticmethod
    def init(kernel, d, rng, pool=1, in_channels=9, dtype=np.float64):
        fan_in = in_channels * kernel * kernel
        scale = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-scale, scale, (d, in_channels, kernel, kernel)).astype(dtype)
        return PatchEmbed(kernel=kernel, pool=pool,
                          weight=Tensor(w, requires_grad=True),
                          bias=Tensor(np.zeros(d, dtype=dtype), requires_grad=True))

    def named_params(self, prefix):
        return {f"{prefix}.weight": self.weight, f"{prefix}.bias": self.bias}


def _avgpool(x: Tensor, factor: int) -> Tensor:
    b, c, h, w = x.shape
    if h % factor or w % factor:
        raise ValueError(f"avgpool: input {h}x{w} not divisible by factor {factor}")
    y = T.reshape(x, (b, c, h // factor, factor, w // factor, factor))
    return T.reshape(T.tmean(T.tmean(y, axis=5), axis=3), (b, c, h // factor, w // factor))


def patchify(patch: Tensor, embed: PatchEmbed) -> Tensor:
    """(B, 9, side, side) -> (B, L, D) with stride = tile size, row-major tiles."""
    side = patch.shape[-1]
    if side % embed.tile:
        raise ValueError(f"patchify: side {side} not divisible by tile size {embed.tile}")
    if embed.pool > 1:
        patch = _avgpool(patch, embed.pool)
    y = T.conv2d(patch, embed.weight, embed.bias, stride=embed.kernel)
    b, d, ho, wo = y.shape
    return T.transpose(T.reshape(y, (b, d, ho * wo)), (0, 2, 1))


def _linear_init(d_in, d_out, rng, dtype):
    scale = 1.0 / np.sqrt(d_in)
    w = rng.uniform(-scale, scale, (d_in, d_out)).astype(dtype)
    return (Tensor(w, requires_grad=True),
            Tensor(np.zeros(d_out, dtype=dtype), requires_grad=True))


@dataclass
class BPSSBlock:
    """Bidirectional gated selective-scan block.

    Forward and backward branches each run depthwise Conv1D + SiLU + a
    selective SSM on an expanded projection; a SiLU gate computed from the
    normalized input multiplies both; the output projection adds back the
    residual.
    """
    w1: Tensor
    b1: Tensor
    conv_f_w: Tensor
    conv_f_b: Tensor
    conv_b_w: Tensor
    conv_b_b: Tensor
    ssm_f: SSMParams
    ssm_b: SSMParams
    norm_gain: Tensor
    w2: Tensor
    b2: Tensor
    w3: Tensor
    b3: Tensor

    @staticmethod
    def init(d, n_state, rng, expand=2, conv_kernel=4, dtype=np.float64):
        d_inner = d * expand
        w1, b1 = _linear_init(d, d_inner, rng, dtype)
        conv_scale = 1.0 / np.sqrt(conv_kernel)
        cf = rng.uniform(-conv_scale, conv_scale, (d_inner, conv_kernel)).astype(dtype)
        cb = rng.uniform(-conv_scale, conv_scale, (d_inner, conv_kernel)).astype(dtype)
        w2, b2 = _linear_init(d, d_inner, rng, dtype)
        w3, b3 = _linear_init(d_inner, d, rng, dtype)
        return BPSSBlock(
            w1=w1, b1=b1,
            conv_f_w=Tensor(cf, requires_grad=True),
            conv_f_b=Tensor(np.zeros(d_inner, dtype=dtype), requires_grad=True),
            conv_b_w=Tensor(cb, requires_grad=True),
            conv_b_b=Tensor(np.zeros(d_inner, dtype=dtype), requires_grad=True),
            ssm_f=SSMParams.init(d_inner, n_state, rng, dtype=dtype),
            ssm_b=SSMParams.init(d_inner, n_state, rng, dtype=dtype),
            norm_gain=Tensor(np.ones(d, dtype=dtype), requires_grad=True),
            w2=w2, b2=b2, w3=w3, b3=b3,
        )

    def named_params(self, prefix):
        out = {
            f"{prefix}.w1": self.w1, f"{prefix}.b1": self.b1,
            f"{prefix}.conv_f_w": self.conv_f_w, f"{prefix}.conv_f_b": self.conv_f_b,
            f"{prefix}.conv_b_w": self.conv_b_w, f"{prefix}.conv_b_b": self.conv_b_b,
            f"{prefix}.norm_gain": self.norm_gain,
            f"{prefix}.w2": self.w2, f"{prefix}.b2": self.b2,
            f"{prefix}.w3": self.w3, f"{prefix}.b3": self.b3,
        }
        out.update(self.ssm_f.named_params(f"{prefix}.ssm_f"))
        out.update(self.ssm_b.named_params(f"{prefix}.ssm_b"))
        return out


def bpss_forward(v_s: Tensor, block: BPSSBlock) -> Tensor:
    """One block pass; output shape equals input shape (B, L+1, D)."""
    s = T.linear(v_s, block.w1, block.b1)
    f_fwd = apply_ssm(T.silu(T.conv1d_depthwise(s, block.conv_f_w, block.conv_f_b)),
                      block.ssm_f)
    s_rev = T.flip(s, axis=1)
    f_bwd = apply_ssm(T.silu(T.conv1d_depthwise(s_rev, block.conv_b_w, block.conv_b_b)),
                      block.ssm_b)
    f_bwd = T.flip(f_bwd, axis=1)
    gate = T.silu(T.linear(T.rmsnorm(v_s, block.norm_gain), block.w2, block.b2))
    mixed = T.add(T.mul(f_fwd, gate), T.mul(f_bwd, gate))
    return T.add(T.linear(mixed, block.w3, block.b3), v_s)


@dataclass
class Encoder:
    """Patch embedding, scan reordering, class token and BPSS stack.

    ``class_index`` is where the class token sits in the output sequence;
    the default tail placement is L. ``order`` carries the token
    permutation (spiral or raster).
    """
    embed: PatchEmbed
    class_token: Tensor
    order: SpiralOrder
    pos: np.ndarray
    blocks: list
    class_index: int

    @property
    def seq_len(self):
        return self.order.permutation.size + 1

    @staticmethod
    def init(side, kernel, d, n_state, depth, rng, pool=1, scan_order="spiral",
             class_index=None, dtype=np.float64):
        tile = kernel * pool
        if side % tile:
            raise ValueError(f"Encoder.init: side {side} not divisible by tile size {tile}")
        grid = side // tile
        if scan_order == "spiral":
            order = spiral_permutation(grid, grid)
        elif scan_order == "raster":
            order = raster_permutation(grid, grid)
        else:
            raise ValueError(f"Encoder.init: unknown scan order {scan_order!r}")
        length = grid * grid
        if class_index is None:
            class_index = length
        if not 0 <= class_index <= length:
            raise ValueError(f"Encoder.init: class index {class_index} outside 0..{length}")
        cls = Tensor((0.02 * rng.standard_normal(d)).astype(dtype), requires_grad=True)
        return Encoder(
            embed=PatchEmbed.init(kernel, d, rng, pool=pool, dtype=dtype),
            class_token=cls,
            order=order,
            pos=sinusoidal_positions(length + 1, d).astype(dtype),
            blocks=[BPSSBlock.init(d, n_state, rng, dtype=dtype) for _ in range(depth)],
            class_index=class_index,
        )

    def named_params(self, prefix):
        out = self.embed.named_params(f"{prefix}.embed")
        out[f"{prefix}.class_token"] = self.class_token
        for i, blk in enumerate(self.blocks):
            out.update(blk.named_params(f"{prefix}.block{i}"))
        return out


def scan_reorder(v: Tensor, order: SpiralOrder, class_token: Tensor,
                 pos: np.ndarray, class_index=None) -> Tensor:
    """Permute tokens, insert the class token, add positional embedding.

    v: (B, L, D); pos must cover L+1 positions. The class token is inserted
    after ``class_index`` tokens (default: appended at the tail).
    """
    b, length, d = v.shape
    if pos.shape[0] != length + 1:
        raise ValueError(f"scan_reorder: pos length {pos.shape[0]} != {length + 1}")
    if class_index is None:
        class_index = length
    ordered = T.permute_axis(v, order.permutation, axis=1)
    cls = T.broadcast_to(T.reshape(class_token, (1, 1, d)), (b, 1, d))
    if class_index == length:
        seq = T.concat([ordered, cls], axis=1)
    elif class_index == 0:
        seq = T.concat([cls, ordered], axis=1)
    else:
        head = T.narrow(ordered, 1, 0, class_index)
        tail = T.narrow(ordered, 1, class_index, length - class_index)
        seq = T.concat([head, cls, tail], axis=1)
    return T.add(seq, Tensor(pos))


def encode(patch: Tensor, encoder: Encoder) -> Tensor:
    """Patch to token sequence (B, L+1, D); the class feature sits at
    ``encoder.class_index``."""
    v = patchify(patch, encoder.embed)
    v_s = scan_reorder(v, encoder.order, encoder.class_token, encoder.pos,
                       encoder.class_index)
    for block in encoder.blocks:
        v_s = bpss_forward(v_s, block)
    return v_s


def class_feature(seq: Tensor, class_index: int) -> Tensor:
    """(B, L+1, D) -> (B, D) at the class-token position."""
    b, _, d = seq.shape
    return T.reshape(T.narrow(seq, 1, class_index, 1), (b, d))
