"""Cross-branch token exchange, classification heads and averaged prediction.

The fusion module swaps the tail class tokens between the local and global
branches, runs further BPSS blocks per branch, and two MLP heads emit
probability vectors whose average is the pixel prediction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .encoder import BPSSBlock, Encoder, bpss_forward, class_feature, encode
from .tensor import Tensor


@dataclass
class CrossMamba:
    """Independent BPSS stacks applied per branch after the token exchange."""
    local_blocks: list
    global_blocks: list

    @staticmethod
    def init(d, n_state, depth, rng, dtype=np.float64):
        return CrossMamba(
            local_blocks=[BPSSBlock.init(d, n_state, rng, dtype=dtype) for _ in range(depth)],
            global_blocks=[BPSSBlock.init(d, n_state, rng, dtype=dtype) for _ in range(depth)],
        )

    def named_params(self, prefix):
        out = {}
        for i, blk in enumerate(self.local_blocks):
            out.update(blk.named_params(f"{prefix}.local{i}"))
        for i, blk in enumerate(self.global_blocks):
            out.update(blk.named_params(f"{prefix}.global{i}"))
        return out


@dataclass
class ClassifierHead:
    """Two-layer perceptron with SiLU, emitting softmax probabilities."""
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @staticmethod
    def init(d, n_classes, rng, dtype=np.float64):
        s1 = 1.0 / np.sqrt(d)
        return ClassifierHead(
            w1=Tensor(rng.uniform(-s1, s1, (d, d)).astype(dtype), requires_grad=True),
            b1=Tensor(np.zeros(d, dtype=dtype), requires_grad=True),
            w2=Tensor(rng.uniform(-s1, s1, (d, n_classes)).astype(dtype), requires_grad=True),
            b2=Tensor(np.zeros(n_classes, dtype=dtype), requires_grad=True),
        )

    @property
    def n_classes(self):
        return self.w2.shape[1]

    def forward(self, feat: Tensor) -> Tensor:
        hidden = T.silu(T.linear(feat, self.w1, self.b1))
        return T.softmax(T.linear(hidden, self.w2, self.b2), axis=-1)

    def named_params(self, prefix):
        return {f"{prefix}.w1": self.w1, f"{prefix}.b1": self.b1,
                f"{prefix}.w2": self.w2, f"{prefix}.b2": self.b2}


def cross_exchange(w: Tensor, big_w: Tensor):
    """Swap the final tokens of the two branch sequences; all other tokens
    pass through untouched."""
    if w.shape[1] != big_w.shape[1] or w.shape[2] != big_w.shape[2]:
        raise ValueError(f"cross_exchange: sequence shapes {w.shape} and {big_w.shape} differ")
    length = w.shape[1] - 1
    w_body = T.narrow(w, 1, 0, length)
    w_last = T.narrow(w, 1, length, 1)
    g_body = T.narrow(big_w, 1, 0, length)
    g_last = T.narrow(big_w, 1, length, 1)
    return T.concat([w_body, g_last], axis=1), T.concat([g_body, w_last], axis=1)


def fuse(w: Tensor, big_w: Tensor, fusion: CrossMamba):
    """Exchange class tokens, then run the per-branch BPSS stacks."""
    w_x, g_x = cross_exchange(w, big_w)
    for blk in fusion.local_blocks:
        w_x = bpss_forward(w_x, blk)
    for blk in fusion.global_blocks:
        g_x = bpss_forward(g_x, blk)
    return w_x, g_x


@dataclass
class Classifier:
    """Two-scale encoder pair with fusion and per-branch heads."""
    local_encoder: Encoder
    global_encoder: Encoder
    fusion: CrossMamba
    head_local: ClassifierHead
    head_global: ClassifierHead

    def named_params(self):
        out = self.local_encoder.named_params("student")
        out.update(self.global_encoder.named_params("teacher"))
        out.update(self.fusion.named_params("fusion"))
        out.update(self.head_local.named_params("head_local"))
        out.update(self.head_global.named_params("head_global"))
        return out

    def params(self):
        return list(self.named_params().values())


def classify(x: Tensor, big_x: Tensor, model: Classifier) -> Tensor:
    """Averaged two-branch probability prediction for a batch of view pairs."""
    if model.head_local.n_classes != model.head_global.n_classes:
        raise ValueError(
            f"classify: heads disagree on class count "
            f"({model.head_local.n_classes} vs {model.head_global.n_classes})")
    w = encode(x, model.local_encoder)
    big_w = encode(big_x, model.global_encoder)
    w_f, g_f = fuse(w, big_w, model.fusion)
    y_local = model.head_local.forward(class_feature(w_f, model.local_encoder.class_index))
    y_global = model.head_global.forward(class_feature(g_f, model.global_encoder.class_index))
    return T.mul(T.add(y_local, y_global), 0.5)
