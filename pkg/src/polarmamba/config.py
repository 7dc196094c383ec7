"""Flat key = value run configuration with strict key checking."""

from __future__ import annotations

from dataclasses import dataclass, fields

from .train import TrainConfig


@dataclass
class RunConfig:
    """Every tunable of the pipeline plus synthetic-scene parameters.

    Values resolve in order: defaults, config file, --set overrides. Unknown
    keys are hard errors so typos never pass silently.
    """
    seed: int = 0
    precision: str = "f64"
    threads: int = 1
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
    class_token_position: int = -1
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
    sr: float = 0.002
    classes: int = 4
    height: int = 64
    width: int = 64
    looks: int = 4
    noise: float = 1.0

    def to_train_config(self) -> TrainConfig:
        return TrainConfig(
            d=self.d, n_state=self.n_state,
            depth_local=self.depth_local, depth_global=self.depth_global,
            depth_fusion=self.depth_fusion,
            k=self.k, k_global=self.k_global,
            kernel_local=self.kernel_local, kernel_global=self.kernel_global,
            scan_order=self.scan_order,
            class_token_position=self.class_token_position,
            epochs_pretrain=self.epochs_pretrain,
            epochs_finetune=self.epochs_finetune,
            batch_size=self.batch_size,
            lr_pretrain=self.lr_pretrain, lr_finetune=self.lr_finetune,
            tau_student=self.tau_student, tau_teacher=self.tau_teacher,
            center_momentum=self.center_momentum, ema_base=self.ema_base,
            poly_eps=self.poly_eps, weight_decay=self.weight_decay,
            seed=self.seed, precision=self.precision,
        ).validate()


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}

TOY_PRESET = {
    "d": 32, "n_state": 8, "k": 8, "k_global": 16,
    "kernel_local": 1, "kernel_global": 2,
    "epochs_pretrain": 30, "epochs_finetune": 50,
    "precision": "f32",
}


def _convert(key, raw):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    if kind in (int, "int"):
        return int(raw)
    if kind in (float, "float"):
        return float(raw)
    return raw


def parse_config_text(text) -> dict:
    """Parse `key = value` lines; '#' starts a comment; unknown keys raise."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _convert(key, raw)
    return out


def parse_set_override(expr) -> tuple:
    """A --set key=value override."""
    if "=" not in expr:
        raise ValueError(f"--set expects key=value, got {expr!r}")
    key, raw = (part.strip() for part in expr.split("=", 1))
    if key not in _FIELD_TYPES:
        raise ValueError(f"--set: unknown key {key!r}")
    return key, _convert(key, raw)


def resolve_config(config_path=None, sets=(), preset=None) -> RunConfig:
    values = {}
    if preset:
        if preset == "toy":
            values.update(TOY_PRESET)
        elif preset != "paper":
            raise ValueError(f"unknown preset {preset!r}")
    if config_path is not None:
        with open(config_path) as fh:
            values.update(parse_config_text(fh.read()))
    for expr in sets:
        key, val = parse_set_override(expr)
        values[key] = val
    return RunConfig(**values)


def config_lines(cfg: RunConfig) -> str:
    return "\n".join(f"{f.name} = {getattr(cfg, f.name)}" for f in fields(RunConfig))


def write_manifest(path, cfg: RunConfig, command):
    with open(path, "w") as fh:
        fh.write(f"# polarmamba {command}\n")
        fh.write(config_lines(cfg))
        fh.write("\n")
