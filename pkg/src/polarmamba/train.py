"""Self-distillation pre-training and polynomial-loss fine-tuning.

Pre-training: a gradient-trained local (student) branch matches sharpened,
centered distributions from a global (teacher) branch that only ever moves
by exponential moving average of the student. Fine-tuning: both branches
plus fresh fusion blocks and heads train jointly on a small labeled subset
under the polynomial cross-entropy loss, with AdamW and cosine schedules
throughout.
"""

from __future__ import annotations

import copy
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import _alloc
from . import tensor as T
from .encoder import Encoder, class_feature, encode
from .fusion import Classifier, ClassifierHead, CrossMamba, classify
from .polsar import LabelMap, augment, extract_window, labeled_centers
from .tensor import Tensor


@dataclass
class TrainConfig:
    """Hyperparameters shared by both training stages."""
    d: int = 192
    n_state: int = 16
    depth_local: int = 1
    depth_global: int = 1
    depth_fusion: int = 1
    k: int = 16
    k_global: int = 32
    kernel_local: int = 1
    kernel_global: int = 2
    scan_order: str = "spiral"
    class_token_position: int = -1        # -1 = tail
    epochs_pretrain: int = 100
    epochs_finetune: int = 100
    batch_size: int = 128
    lr_pretrain: float = 0.0005
    lr_finetune: float = 0.001
    tau_student: float = 0.1
    tau_teacher: float = 0.04
    center_momentum: float = 0.9
    ema_base: float = 0.996
    poly_eps: float = 1.0
    weight_decay: float = 0.01
    seed: int = 0
    precision: str = "f64"

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64

    @property
    def teacher_pool(self):
        return self.kernel_global // self.kernel_local

    @property
    def grid(self):
        return self.k // self.kernel_local

    @property
    def class_index(self):
        if self.class_token_position < 0:
            return self.grid * self.grid
        return self.class_token_position

    def validate(self):
        if self.kernel_global % self.kernel_local:
            raise ValueError(
                f"global kernel {self.kernel_global} must be a multiple of local kernel {self.kernel_local}")
        if self.k // self.kernel_local != self.k_global // self.kernel_global:
            raise ValueError(
                f"branches disagree on token grid: {self.k}/{self.kernel_local} vs "
                f"{self.k_global}/{self.kernel_global}")
        if self.scan_order not in ("spiral", "raster"):
            raise ValueError(f"unknown scan order {self.scan_order!r}")
        return self

    def make_local_encoder(self, rng):
        return Encoder.init(self.k, self.kernel_local, self.d, self.n_state,
                            self.depth_local, rng, scan_order=self.scan_order,
                            class_index=None if self.class_token_position < 0
                            else self.class_token_position,
                            dtype=self.dtype)

    def make_global_encoder(self, rng):
        return Encoder.init(self.k_global, self.kernel_local, self.d, self.n_state,
                            self.depth_global, rng, pool=self.teacher_pool,
                            scan_order=self.scan_order,
                            class_index=None if self.class_token_position < 0
                            else self.class_token_position,
                            dtype=self.dtype)


# -- schedule / loss / optimizer primitives ------------------------------------


def cosine_schedule(step, total, start, end):
    """Half-cosine interpolation from start (step 0) to end (step total)."""
    if total == 0:
        return end
    if not 0 <= step <= total:
        raise ValueError(f"cosine_schedule: step {step} outside 0..{total}")
    return end + (start - end) * (1.0 + np.cos(np.pi * step / total)) / 2.0


def sharpen(logits, tau, center=None):
    """Temperature-sharpened softmax; the teacher path subtracts a center."""
    if tau <= 0:
        raise ValueError(f"sharpen: temperature must be positive, got {tau}")
    t = logits if isinstance(logits, Tensor) else Tensor(np.asarray(logits, dtype=np.float64))
    if center is not None:
        t = T.add(t, Tensor(-np.asarray(center)))
    return T.softmax(T.mul(t, 1.0 / tau), axis=-1)


def update_center(center, teacher_outputs, momentum):
    """EMA of the batch mean of teacher class-token outputs."""
    batch_mean = np.asarray(teacher_outputs).mean(axis=0)
    return momentum * np.asarray(center) + (1.0 - momentum) * batch_mean


def contrastive_loss(student_dist: Tensor, teacher_dist) -> Tensor:
    """Channel-averaged cross entropy between distributions, teacher detached.

    Gradient flows only into the student path; a zero student probability
    opposite teacher mass is clamped at 1e-12 with a warning.
    """
    teacher = teacher_dist.data if isinstance(teacher_dist, Tensor) else np.asarray(teacher_dist)
    if np.any((student_dist.data <= 0.0) & (teacher > 0.0)):
        warnings.warn("contrastive_loss: clamping zero student probabilities")
    d = student_dist.shape[-1]
    logp = T.log(T.maximum(student_dist, 1e-12))
    per = T.tsum(T.mul(Tensor(teacher), logp), axis=-1)
    if per.ndim == 0:
        return T.mul(per, -1.0 / d)
    return T.mul(T.tmean(per), -1.0 / d)


def poly_loss(ybar: Tensor, onehot, eps) -> Tensor:
    """Class-averaged cross entropy plus eps * (1 - target probability).

    ``ybar`` are probability rows; ``onehot`` the target indicators. Reduces
    to (1/N_c) * cross-entropy at eps = 0.
    """
    y = np.asarray(onehot, dtype=ybar.data.dtype)
    n_c = ybar.shape[-1]
    logp = T.log(T.maximum(ybar, 1e-12))
    ce = T.neg(T.tsum(T.mul(Tensor(y), logp), axis=-1))
    polyterm = T.tsum(T.mul(Tensor(y), T.add(T.neg(ybar), 1.0)), axis=-1)
    per = T.add(ce, T.mul(polyterm, float(eps)))
    if per.ndim == 0:
        return T.mul(per, 1.0 / n_c)
    return T.mul(T.tmean(per), 1.0 / n_c)


def ema_update(teacher_params, student_params, lam):
    """In-place convex combination teacher <- lam*teacher + (1-lam)*student."""
    if len(teacher_params) != len(student_params):
        raise ValueError("ema_update: parameter lists differ in length")
    for pt, ps in zip(teacher_params, student_params):
        if pt.shape != ps.shape:
            raise ValueError(f"ema_update: shape mismatch {pt.shape} vs {ps.shape}")
        pt.data *= lam
        pt.data += (1.0 - lam) * ps.data


def adamw_init(params):
    return {
        "step": 0,
        "m": [np.zeros_like(p.data) for p in params],
        "v": [np.zeros_like(p.data) for p in params],
    }


def adamw_step(params, state, lr, beta1=0.9, beta2=0.999, eps=1e-8,
               weight_decay=0.01):
    """Decoupled-weight-decay adaptive step; non-finite gradients skip the
    whole step with a warning."""
    grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    for g in grads:
        if not np.all(np.isfinite(g)):
            warnings.warn("adamw_step: non-finite gradient, skipping step")
            return
    state["step"] += 1
    t = state["step"]
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        if weight_decay:
            p.data *= 1.0 - lr * weight_decay
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


# -- batch assembly -------------------------------------------------------------


class ViewBatcher:
    """Builds augmented local/global view batches from a raster."""

    def __init__(self, raster, k, k_global, dtype=np.float64):
        self.raster = np.asarray(raster, dtype=dtype)
        self.k = k
        self.k_global = k_global

    def batch(self, centers, aug_local=None, aug_global=None):
        n = len(centers)
        x = np.empty((n, self.raster.shape[0], self.k, self.k), dtype=self.raster.dtype)
        big = np.empty((n, self.raster.shape[0], self.k_global, self.k_global),
                       dtype=self.raster.dtype)
        for i, (r, c) in enumerate(centers):
            lv = extract_window(self.raster, (r, c), self.k)
            gv = extract_window(self.raster, (r, c), self.k_global)
            if aug_local is not None:
                lv = augment(lv, int(aug_local[i]))
            if aug_global is not None:
                gv = augment(gv, int(aug_global[i]))
            x[i] = lv
            big[i] = gv
        return x, big


def _zero_grads(params):
    for p in params:
        p.grad = None


def _named_list(named):
    return [named[k] for k in sorted(named)]


# -- training loops -------------------------------------------------------------


@dataclass
class PretrainResult:
    student: Encoder
    teacher: Encoder
    center: np.ndarray
    losses: list


def pretrain(raster, config: TrainConfig, step_callback=None) -> PretrainResult:
    """Self-distillation over every pixel of the raster.

    Per step: sample a batch of view pairs, apply one independent dihedral
    draw per view, push the local view through the student and the global
    view through the gradient-free teacher, sharpen both class tokens,
    minimize the cross-entropy, then AdamW on the student, EMA on the
    teacher and a momentum update of the center. Deterministic per seed.
    """
    _alloc.enable()
    config.validate()
    raster = np.asarray(raster)
    if raster.ndim != 3 or raster.shape[0] != 9:
        raise ValueError(f"pretrain: raster must be (9, H, W), got {raster.shape}")
    h, w = raster.shape[1:]
    if h * w == 0:
        raise ValueError("pretrain: empty dataset")

    seed_seq = np.random.SeedSequence(config.seed)
    rng_init, rng_data = [np.random.default_rng(s) for s in seed_seq.spawn(2)]

    # the teacher starts as an exact copy of the student; with the momentum
    # near 1 it stays a lagged average, which is what makes self-distillation
    # bootstrap instead of chasing a frozen random target
    student = config.make_local_encoder(rng_init)
    teacher = config.make_global_encoder(rng_init)
    s_named = student.named_params("enc")
    t_named = teacher.named_params("enc")
    for key in s_named:
        t_named[key].data = s_named[key].data.copy()
        t_named[key].requires_grad = False

    s_params = _named_list(s_named)
    t_params = _named_list(t_named)
    opt = adamw_init(s_params)
    center = np.zeros(config.d, dtype=np.float64)

    batcher = ViewBatcher(raster, config.k, config.k_global, dtype=config.dtype)
    centers = [(r, c) for r in range(h) for c in range(w)]
    n = len(centers)
    bsz = min(config.batch_size, n)
    steps_per_epoch = (n + bsz - 1) // bsz
    total = config.epochs_pretrain * steps_per_epoch

    losses = []
    step = 0
    for _ in range(config.epochs_pretrain):
        perm = rng_data.permutation(n)
        for b0 in range(0, n, bsz):
            idx = perm[b0:b0 + bsz]
            aug = rng_data.integers(0, 8, size=(idx.size, 2))
            x, big = batcher.batch([centers[i] for i in idx], aug[:, 0], aug[:, 1])

            lam = cosine_schedule(step, total, config.ema_base, 1.0)
            lr = cosine_schedule(step, total, config.lr_pretrain, 0.0)

            w_seq = encode(Tensor(x), student)
            p = class_feature(w_seq, student.class_index)
            p_sharp = sharpen(p, config.tau_student)

            with T.no_grad():
                big_seq = encode(Tensor(big), teacher)
                teacher_logits = class_feature(big_seq, teacher.class_index).data
            teacher_sharp = sharpen(teacher_logits, config.tau_teacher, center=center)

            loss = contrastive_loss(p_sharp, teacher_sharp)
            _zero_grads(s_params)
            T.backward(loss)
            adamw_step(s_params, opt, lr, weight_decay=config.weight_decay)
            ema_update(t_params, s_params, lam)
            center = update_center(center, teacher_logits, config.center_momentum)

            losses.append(loss.item())
            if step_callback is not None:
                step_callback({"step": step, "loss": losses[-1], "lr": lr,
                               "lambda": lam, "student": s_params,
                               "teacher": t_params, "center": center})
            step += 1

    return PretrainResult(student=student, teacher=teacher, center=center,
                          losses=losses)


def _one_hot(labels, n_classes, dtype):
    out = np.zeros((len(labels), n_classes), dtype=dtype)
    for i, lab in enumerate(labels):
        out[i, lab - 1] = 1.0
    return out


def finetune(raster, train_labels: LabelMap, config: TrainConfig,
             pretrained: PretrainResult | None = None,
             step_callback=None) -> Classifier:
    """Joint fine-tuning of both branches, fresh fusion blocks and heads.

    ``pretrained`` supplies encoder weights (copied, never mutated); when
    absent both encoders start fresh. Every parameter trains under AdamW
    with a cosine-annealed learning rate.
    """
    _alloc.enable()
    config.validate()
    raster = np.asarray(raster)
    seed_seq = np.random.SeedSequence(config.seed + 1)
    rng_init, rng_data = [np.random.default_rng(s) for s in seed_seq.spawn(2)]

    if pretrained is not None:
        local_enc = copy.deepcopy(pretrained.student)
        global_enc = copy.deepcopy(pretrained.teacher)
        for p in list(local_enc.named_params("x").values()) + \
                 list(global_enc.named_params("x").values()):
            p.requires_grad = True
            p.grad = None
    else:
        local_enc = config.make_local_encoder(rng_init)
        global_enc = config.make_global_encoder(rng_init)

    n_classes = train_labels.n_classes
    model = Classifier(
        local_encoder=local_enc,
        global_encoder=global_enc,
        fusion=CrossMamba.init(config.d, config.n_state, config.depth_fusion,
                               rng_init, dtype=config.dtype),
        head_local=ClassifierHead.init(config.d, n_classes, rng_init, dtype=config.dtype),
        head_global=ClassifierHead.init(config.d, n_classes, rng_init, dtype=config.dtype),
    )

    samples = labeled_centers(train_labels)
    if not samples:
        raise ValueError("finetune: no labeled pixels")
    present = {lab for _, _, lab in samples}
    for cid in range(1, n_classes + 1):
        if cid not in present:
            warnings.warn(f"finetune: class {cid} absent from the training subset")

    params = _named_list(model.named_params())
    opt = adamw_init(params)
    batcher = ViewBatcher(raster, config.k, config.k_global, dtype=config.dtype)

    n = len(samples)
    bsz = min(config.batch_size, n)
    steps_per_epoch = (n + bsz - 1) // bsz
    total = config.epochs_finetune * steps_per_epoch

    step = 0
    for _ in range(config.epochs_finetune):
        perm = rng_data.permutation(n)
        for b0 in range(0, n, bsz):
            idx = perm[b0:b0 + bsz]
            chosen = [samples[i] for i in idx]
            aug = rng_data.integers(0, 8, size=(len(chosen), 2))
            x, big = batcher.batch([(r, c) for r, c, _ in chosen], aug[:, 0], aug[:, 1])
            onehot = _one_hot([lab for _, _, lab in chosen], n_classes, config.dtype)

            lr = cosine_schedule(step, total, config.lr_finetune, 0.0)
            ybar = classify(Tensor(x), Tensor(big), model)
            loss = poly_loss(ybar, onehot, config.poly_eps)
            _zero_grads(params)
            T.backward(loss)
            adamw_step(params, opt, lr, weight_decay=config.weight_decay)

            if step_callback is not None:
                step_callback({"step": step, "loss": loss.item(), "lr": lr})
            step += 1

    return model
