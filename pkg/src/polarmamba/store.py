"""Model-level checkpointing on top of the raw tensor container.

Architecture metadata rides along as a small tensor so a checkpoint alone
is enough to rebuild the model for prediction.
"""

from __future__ import annotations

import numpy as np

from .fusion import Classifier, ClassifierHead, CrossMamba
from .io import read_checkpoint, write_checkpoint
from .train import PretrainResult, TrainConfig

_SCAN_CODES = {"spiral": 0, "raster": 1}
_SCAN_NAMES = {v: k for k, v in _SCAN_CODES.items()}

_META_FIELDS = ("d", "n_state", "depth_local", "depth_global", "depth_fusion",
                "k", "k_global", "kernel_local", "kernel_global",
                "scan_code", "class_token_position", "n_classes")


def _meta_array(config: TrainConfig, n_classes=0):
    vals = dict(
        d=config.d, n_state=config.n_state,
        depth_local=config.depth_local, depth_global=config.depth_global,
        depth_fusion=config.depth_fusion,
        k=config.k, k_global=config.k_global,
        kernel_local=config.kernel_local, kernel_global=config.kernel_global,
        scan_code=_SCAN_CODES[config.scan_order],
        class_token_position=config.class_token_position,
        n_classes=n_classes,
    )
    return np.array([vals[f] for f in _META_FIELDS], dtype=np.float64)


def _meta_config(arr, precision="f64"):
    vals = {f: int(round(v)) for f, v in zip(_META_FIELDS, arr)}
    cfg = TrainConfig(
        d=vals["d"], n_state=vals["n_state"],
        depth_local=vals["depth_local"], depth_global=vals["depth_global"],
        depth_fusion=vals["depth_fusion"],
        k=vals["k"], k_global=vals["k_global"],
        kernel_local=vals["kernel_local"], kernel_global=vals["kernel_global"],
        scan_order=_SCAN_NAMES[vals["scan_code"]],
        class_token_position=vals["class_token_position"],
        precision=precision,
    )
    return cfg, vals["n_classes"]


def _assign(named, stored):
    for key, tensor in named.items():
        if key not in stored:
            raise ValueError(f"checkpoint missing tensor {key!r}")
        arr = stored[key]
        if tuple(arr.shape) != tuple(tensor.shape):
            raise ValueError(f"checkpoint tensor {key!r} has shape {arr.shape}, "
                             f"expected {tensor.shape}")
        tensor.data = arr.astype(tensor.data.dtype)


def save_pretrain(path, result: PretrainResult, config: TrainConfig):
    tensors = {k: v.data for k, v in result.student.named_params("student").items()}
    tensors.update({k: v.data for k, v in result.teacher.named_params("teacher").items()})
    tensors["center"] = result.center
    tensors["meta"] = _meta_array(config)
    write_checkpoint(path, tensors)


def load_pretrain(path, precision="f64") -> tuple:
    """Returns (PretrainResult, architecture TrainConfig)."""
    stored = read_checkpoint(path)
    arch, _ = _meta_config(stored["meta"], precision)
    rng = np.random.default_rng(0)
    student = arch.make_local_encoder(rng)
    teacher = arch.make_global_encoder(rng)
    _assign(student.named_params("student"), stored)
    _assign(teacher.named_params("teacher"), stored)
    result = PretrainResult(student=student, teacher=teacher,
                            center=stored["center"], losses=[])
    return result, arch


def save_classifier(path, model: Classifier, config: TrainConfig):
    tensors = {k: v.data for k, v in model.named_params().items()}
    tensors["meta"] = _meta_array(config, n_classes=model.head_local.n_classes)
    write_checkpoint(path, tensors)


def load_classifier(path, precision="f64") -> tuple:
    """Returns (Classifier, architecture TrainConfig)."""
    stored = read_checkpoint(path)
    arch, n_classes = _meta_config(stored["meta"], precision)
    rng = np.random.default_rng(0)
    model = Classifier(
        local_encoder=arch.make_local_encoder(rng),
        global_encoder=arch.make_global_encoder(rng),
        fusion=CrossMamba.init(arch.d, arch.n_state, arch.depth_fusion, rng,
                               dtype=arch.dtype),
        head_local=ClassifierHead.init(arch.d, n_classes, rng, dtype=arch.dtype),
        head_global=ClassifierHead.init(arch.d, n_classes, rng, dtype=arch.dtype),
    )
    _assign(model.named_params(), stored)
    return model, arch
