"""Whole-image prediction, confusion-matrix metrics and map rendering."""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import tensor as T
from .fusion import Classifier, classify
from .polsar import LabelMap
from .tensor import Tensor
from .train import ViewBatcher

# reference fixture from the strongest published configuration; used only to
# exercise report formatting, never asserted against model output
REFERENCE_RESULTS = {"flevoland_1989": {"oa": 0.9970, "aa": 0.9964, "kappa": 0.9962}}


def predict_map(model: Classifier, raster, k, k_global, batch=256, threads=1):
    """Argmax class for every pixel using un-augmented views.

    Pixels are processed in batches; batch boundaries and thread count never
    change the result because predictions are per-pixel independent.
    """
    raster = np.asarray(raster)
    h, w = raster.shape[1], raster.shape[2]
    dtype = model.local_encoder.embed.weight.dtype
    batcher = ViewBatcher(raster, k, k_global, dtype=dtype)
    centers = [(r, c) for r in range(h) for c in range(w)]
    out = np.zeros(h * w, dtype=np.int32)

    def run(span):
        lo, hi = span
        x, big = batcher.batch(centers[lo:hi])
        ybar = classify(Tensor(x), Tensor(big), model)
        out[lo:hi] = np.argmax(ybar.data, axis=1) + 1

    spans = [(lo, min(lo + batch, len(centers))) for lo in range(0, len(centers), batch)]
    with T.no_grad():
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(run, spans))
        else:
            for span in spans:
                run(span)
    return out.reshape(h, w)


def confusion(pred, truth: LabelMap) -> np.ndarray:
    """Counts[true-1][pred-1] over labeled pixels; unlabeled truth skipped."""
    pred = np.asarray(pred)
    if pred.shape != truth.ids.shape:
        raise ValueError(f"confusion: shapes differ {pred.shape} vs {truth.ids.shape}")
    n_c = truth.n_classes
    mask = truth.ids > 0
    p = pred[mask]
    t = truth.ids[mask]
    if p.size and (p.min() < 1 or p.max() > n_c):
        raise ValueError(f"confusion: prediction ids outside 1..{n_c}")
    cm = np.zeros((n_c, n_c), dtype=np.int64)
    np.add.at(cm, (t - 1, p - 1), 1)
    return cm


def metrics(cm) -> tuple:
    """(overall accuracy, average per-class recall, Cohen's kappa)."""
    cm = np.asarray(cm, dtype=np.float64)
    total = cm.sum()
    if total <= 0:
        raise ValueError("metrics: empty confusion matrix")
    oa = np.trace(cm) / total

    row_tot = cm.sum(axis=1)
    present = row_tot > 0
    if not present.all():
        absent = [int(i) + 1 for i in np.nonzero(~present)[0]]
        warnings.warn(f"metrics: classes {absent} have no ground truth, excluded from AA")
    recalls = np.diag(cm)[present] / row_tot[present]
    aa = recalls.mean()

    col_tot = cm.sum(axis=0)
    pe = (row_tot * col_tot).sum() / (total * total)
    if pe >= 1.0 - 1e-15:
        warnings.warn("metrics: expected agreement is 1, kappa degenerate")
        kappa = 1.0 if oa >= 1.0 - 1e-15 else 0.0
    else:
        kappa = (oa - pe) / (1.0 - pe)
    return float(oa), float(aa), float(kappa)


def metrics_record(oa, aa, kappa) -> str:
    """Flat machine-readable record with raw fractions."""
    return f"oa={oa:.6f},aa={aa:.6f},kappa={kappa:.6f}"


def metrics_table(cm, oa, aa, kappa) -> str:
    """Aligned console table; kappa shown in the x100 convention."""
    lines = ["class   recall%    truth    pred"]
    row_tot = cm.sum(axis=1)
    col_tot = cm.sum(axis=0)
    for i in range(cm.shape[0]):
        recall = 100.0 * cm[i, i] / row_tot[i] if row_tot[i] else float("nan")
        lines.append(f"{i + 1:>5}   {recall:7.2f}  {int(row_tot[i]):>7}  {int(col_tot[i]):>6}")
    lines.append(f"OA(%) {100 * oa:7.2f}   AA(%) {100 * aa:6.2f}   Kappa(e-2) {100 * kappa:6.2f}")
    return "\n".join(lines)


def param_count(model) -> int:
    """Total learnable scalars."""
    return sum(p.size for p in model.named_params().values())


def param_breakdown(model: Classifier) -> dict:
    """Per-component learnable scalar counts plus the total."""
    groups = {
        "local_encoder": model.local_encoder.named_params("x"),
        "global_encoder": model.global_encoder.named_params("x"),
        "fusion": model.fusion.named_params("x"),
        "heads": {**model.head_local.named_params("l"),
                  **model.head_global.named_params("g")},
    }
    out = {name: sum(p.size for p in params.values()) for name, params in groups.items()}
    out["total"] = sum(out.values())
    return out


def render_map(label_map, palette) -> bytes:
    """Binary PPM (P6) bytes for a class-id map.

    ``palette`` maps id -> (r, g, b); entry 0 must be black (unlabeled)."""
    ids = np.asarray(label_map)
    max_id = int(ids.max()) if ids.size else 0
    if len(palette) <= max_id:
        raise ValueError(f"render_map: palette of {len(palette)} entries too small for id {max_id}")
    if tuple(palette[0]) != (0, 0, 0):
        raise ValueError("render_map: palette entry 0 is reserved black for unlabeled")
    h, w = ids.shape
    lut = np.asarray(palette, dtype=np.uint8)
    rgb = lut[ids]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + rgb.tobytes()


def default_palette(n_classes) -> list:
    """Black for unlabeled, then evenly spaced saturated colors."""
    palette = [(0, 0, 0)]
    for i in range(n_classes):
        hue = i / max(n_classes, 1)
        palette.append(_hsv_byte(hue))
    return palette


def _hsv_byte(hue, s=0.85, v=0.95):
    i = int(hue * 6) % 6
    f = hue * 6 - int(hue * 6)
    p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
    r, g, b = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]
    return (int(r * 255), int(g * 255), int(b * 255))
