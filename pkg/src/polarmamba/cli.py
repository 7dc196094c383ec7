"""Command-line surface binding the pipeline into reproducible runs.

Commands: synth, pretrain, finetune, predict, eval. Every command echoes its
resolved configuration to the run log and writes a manifest that can be fed
back through --config to reproduce the run bit-exactly.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import io as pio
from . import metrics as M
from . import polsar as P
from . import store
from .config import RunConfig, config_lines, resolve_config, write_manifest
from .train import finetune, pretrain


def _log(msg):
    print(msg, file=sys.stderr)


def _echo_config(cfg: RunConfig, command):
    _log(f"[polarmamba {command}] resolved configuration:")
    for line in config_lines(cfg).splitlines():
        _log(f"  {line}")


def _require(path, kind):
    if not os.path.exists(path):
        _log(f"error: missing {kind} file: {path}")
        raise SystemExit(1)
    return path


def _outdir(path):
    os.makedirs(path, exist_ok=True)
    return path


def cmd_synth(cfg: RunConfig, args):
    out = _outdir(args.out)
    image, labels = P.synth_polsar(cfg.classes, cfg.height, cfg.width,
                                   looks=cfg.looks, noise_scale=cfg.noise,
                                   seed=cfg.seed)
    raster = P.restructure(P.complex_zscore(image))
    pio.write_ptc(os.path.join(out, "synth.ptc"), raster)
    pio.write_plb(os.path.join(out, "synth.plb"), labels)
    write_manifest(os.path.join(out, "synth.manifest"), cfg, "synth")
    _log(f"wrote {out}/synth.ptc and {out}/synth.plb "
         f"({cfg.height}x{cfg.width}, {cfg.classes} classes)")
    return 0


def cmd_pretrain(cfg: RunConfig, args):
    out = _outdir(args.out)
    raster = pio.read_ptc(_require(args.data, "PTC"))
    tc = cfg.to_train_config()
    log_path = os.path.join(out, "pretrain_loss.log")
    with open(log_path, "w") as fh:
        def on_step(info):
            fh.write(f"{info['step']},{info['loss']:.8f},{info['lr']:.8f},"
                     f"{info['lambda']:.8f}\n")
        result = pretrain(raster, tc, step_callback=on_step)
    ckpt = os.path.join(out, "pretrain.ecpw")
    store.save_pretrain(ckpt, result, tc)
    write_manifest(os.path.join(out, "pretrain.manifest"), cfg, "pretrain")
    _log(f"wrote {ckpt}; final loss {result.losses[-1]:.6f}")
    return 0


def cmd_finetune(cfg: RunConfig, args):
    out = _outdir(args.out)
    raster = pio.read_ptc(_require(args.data, "PTC"))
    labels = pio.read_plb(_require(args.labels, "PLB"))
    tc = cfg.to_train_config()

    pretrained = None
    if args.pretrained:
        pretrained, arch = store.load_pretrain(_require(args.pretrained, "checkpoint"),
                                               precision=cfg.precision)
        for field in ("d", "n_state", "k", "k_global", "kernel_local",
                      "kernel_global", "scan_order"):
            if getattr(arch, field) != getattr(tc, field):
                _log(f"error: checkpoint architecture mismatch on {field}: "
                     f"{getattr(arch, field)} vs {getattr(tc, field)}")
                raise SystemExit(1)

    subset = P.sample_labels(labels, cfg.sr, seed=cfg.seed) if args.sr_sample else labels
    pio.write_plb(os.path.join(out, "train_subset.plb"), subset)

    log_path = os.path.join(out, "finetune_loss.log")
    with open(log_path, "w") as fh:
        def on_step(info):
            fh.write(f"{info['step']},{info['loss']:.8f},{info['lr']:.8f}\n")
        model = finetune(raster, subset, tc, pretrained=pretrained,
                         step_callback=on_step)
    ckpt = os.path.join(out, "classifier.ecpw")
    store.save_classifier(ckpt, model, tc)
    write_manifest(os.path.join(out, "finetune.manifest"), cfg, "finetune")
    _log(f"wrote {ckpt}")
    return 0


def cmd_predict(cfg: RunConfig, args):
    out = _outdir(args.out)
    raster = pio.read_ptc(_require(args.data, "PTC"))
    model, arch = store.load_classifier(_require(args.model, "checkpoint"),
                                        precision=cfg.precision)
    pred = M.predict_map(model, raster, arch.k, arch.k_global,
                         batch=cfg.batch_size, threads=cfg.threads)
    n_classes = model.head_local.n_classes
    pred_labels = P.LabelMap(ids=pred.astype(np.int32), n_classes=n_classes)
    pio.write_plb(os.path.join(out, "pred.plb"), pred_labels)
    ppm = M.render_map(pred, M.default_palette(n_classes))
    with open(os.path.join(out, "pred.ppm"), "wb") as fh:
        fh.write(ppm)
    write_manifest(os.path.join(out, "predict.manifest"), cfg, "predict")
    _log(f"wrote {out}/pred.plb and {out}/pred.ppm")
    return 0


def cmd_eval(cfg: RunConfig, args):
    pred = pio.read_plb(_require(args.pred, "PLB"))
    truth = pio.read_plb(_require(args.truth, "PLB"))
    cm = M.confusion(pred.ids, truth)
    oa, aa, kappa = M.metrics(cm)
    record = M.metrics_record(oa, aa, kappa)
    print(record)
    print(M.metrics_table(cm, oa, aa, kappa))
    if args.out:
        out = _outdir(args.out)
        with open(os.path.join(out, "metrics.txt"), "w") as fh:
            fh.write(record + "\n")
        write_manifest(os.path.join(out, "eval.manifest"), cfg, "eval")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="polarmamba",
        description="Spiral-scan selective state-space classifier for "
                    "polarimetric SAR rasters")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--set", dest="sets", action="append", default=[],
                       metavar="KEY=VALUE", help="override one configuration key")
        p.add_argument("--preset", choices=["paper", "toy"],
                       help="base configuration preset")
        p.add_argument("--seed", type=int, help="shortcut for --set seed=N")

    p = sub.add_parser("synth", help="generate a synthetic PTC/PLB pair")
    common(p)
    p.add_argument("--classes", type=int, help="number of classes")
    p.add_argument("--size", help="HxW, e.g. 64x64")
    p.add_argument("--out", required=True)

    p = sub.add_parser("pretrain", help="self-distillation pre-training")
    common(p)
    p.add_argument("--data", required=True, help="input PTC raster")
    p.add_argument("--out", required=True)

    p = sub.add_parser("finetune", help="classification fine-tuning")
    common(p)
    p.add_argument("--data", required=True, help="input PTC raster")
    p.add_argument("--labels", required=True, help="PLB label map")
    p.add_argument("--pretrained", help="pretrain checkpoint to start from")
    p.add_argument("--sr-sample", action="store_true",
                   help="subsample labels at the configured rate first")
    p.add_argument("--out", required=True)

    p = sub.add_parser("predict", help="pixel-wise prediction map")
    common(p)
    p.add_argument("--data", required=True, help="input PTC raster")
    p.add_argument("--model", required=True, help="classifier checkpoint")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="OA/AA/Kappa against a truth map")
    common(p)
    p.add_argument("--pred", required=True, help="prediction PLB")
    p.add_argument("--truth", required=True, help="ground-truth PLB")
    p.add_argument("--out", help="optional directory for metrics.txt")

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    sets = list(args.sets)
    if args.seed is not None:
        sets.append(f"seed={args.seed}")
    if args.command == "synth":
        if args.classes is not None:
            sets.append(f"classes={args.classes}")
        if args.size:
            try:
                h, w = args.size.lower().split("x")
                sets += [f"height={int(h)}", f"width={int(w)}"]
            except ValueError:
                _log(f"error: --size expects HxW, got {args.size!r}")
                return 2
    try:
        cfg = resolve_config(args.config, sets, preset=args.preset)
        if "ECP_THREADS" in os.environ and not any(s.startswith("threads=") for s in sets):
            cfg.threads = int(os.environ["ECP_THREADS"])
    except FileNotFoundError as exc:
        _log(f"error: missing config file: {exc.filename}")
        return 1
    except ValueError as exc:
        _log(f"error: {exc}")
        return 2

    _echo_config(cfg, args.command)
    handler = {
        "synth": cmd_synth,
        "pretrain": cmd_pretrain,
        "finetune": cmd_finetune,
        "predict": cmd_predict,
        "eval": cmd_eval,
    }[args.command]
    try:
        return handler(cfg, args)
    except SystemExit as exc:
        return exc.code
    except ValueError as exc:
        _log(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
