"""Polarimetric data model.

Scattering matrix -> Pauli vector -> multi-look coherence matrix -> complex
Z-score normalization -> 9-channel real raster, plus patch-pair extraction,
dihedral augmentation, synthetic scene generation and per-class label
sampling.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .covariances import class_covariance

RASTER_CHANNELS = ("T11", "T22", "T33", "ReT12", "ReT13", "ReT23",
                   "ImT12", "ImT13", "ImT23")


@dataclass
class ScatteringMatrix:
    """Single-pixel 2x2 scattering response under reciprocity (HV == VH)."""
    s_hh: complex
    s_hv: complex
    s_vv: complex


@dataclass
class CoherenceImage:
    """H x W grid of 3x3 Hermitian coherence matrices.

    ``t`` has shape (H, W, 3, 3) complex; ``looks`` records the multi-look
    count used to build it; ``normalized`` is set by complex_zscore.
    """
    t: np.ndarray
    looks: int = 1
    normalized: bool = False

    @property
    def height(self):
        return self.t.shape[0]

    @property
    def width(self):
        return self.t.shape[1]


@dataclass
class LabelMap:
    """Per-pixel class ids; 0 means unlabeled, valid ids are 1..n_classes."""
    ids: np.ndarray
    n_classes: int

    def __post_init__(self):
        if self.ids.size and int(self.ids.max()) > self.n_classes:
            raise ValueError(f"label id {int(self.ids.max())} exceeds n_classes={self.n_classes}")

    @property
    def height(self):
        return self.ids.shape[0]

    @property
    def width(self):
        return self.ids.shape[1]

    def class_counts(self):
        counts = {}
        for cid in range(1, self.n_classes + 1):
            counts[cid] = int((self.ids == cid).sum())
        return counts


@dataclass
class ViewPair:
    """Local and global patches centered on one pixel, with optional label."""
    local: np.ndarray
    global_: np.ndarray
    center: tuple
    label: int | None = None


def pauli_vector(s: ScatteringMatrix) -> np.ndarray:
    """3-component Pauli decomposition of a reciprocal scattering matrix."""
    return np.array([s.s_hh + s.s_vv, s.s_hh - s.s_vv, 2.0 * s.s_hv],
                    dtype=np.complex128) / np.sqrt(2.0)


def coherence_accumulate(paulis) -> np.ndarray:
    """Multi-look average of outer products p p^H; Hermitian by construction."""
    paulis = list(paulis)
    if not paulis:
        raise ValueError("coherence_accumulate: empty look list")
    t = np.zeros((3, 3), dtype=np.complex128)
    for p in paulis:
        p = np.asarray(p, dtype=np.complex128)
        t += np.outer(p, p.conj())
    return t / len(paulis)


# channel index -> (row, col) of the upper triangle of T
_DIAG = ((0, 0), (1, 1), (2, 2))
_OFFDIAG = ((0, 1), (0, 2), (1, 2))


def complex_zscore(image: CoherenceImage) -> CoherenceImage:
    """Standardize the six independent T-channels over all pixels.

    Diagonal channels are real; off-diagonals are complex with the standard
    deviation taken as the root mean squared modulus of deviations. A
    constant channel divides by a 1e-12 floor with a warning.
    """
    t = image.t.copy()
    for i, j in _DIAG + _OFFDIAG:
        chan = t[:, :, i, j]
        mean = chan.mean()
        dev = chan - mean
        std = float(np.sqrt((dev * dev.conj()).real.mean()))
        if std < 1e-12:
            warnings.warn(f"complex_zscore: channel T{i + 1}{j + 1} is constant, clamping std")
            std = 1e-12
        t[:, :, i, j] = dev / std
    for i, j in _OFFDIAG:
        t[:, :, j, i] = t[:, :, i, j].conj()
    for i, j in _DIAG:
        t[:, :, i, j] = t[:, :, i, j].real
    return CoherenceImage(t=t, looks=image.looks, normalized=True)


def restructure(image: CoherenceImage) -> np.ndarray:
    """Expand T into the 9-channel real raster, shape (9, H, W).

    Channel order: T11 T22 T33 ReT12 ReT13 ReT23 ImT12 ImT13 ImT23.
    """
    t = image.t
    raster = np.empty((9, image.height, image.width), dtype=np.float64)
    for k, (i, j) in enumerate(_DIAG):
        raster[k] = t[:, :, i, j].real
    for k, (i, j) in enumerate(_OFFDIAG):
        raster[3 + k] = t[:, :, i, j].real
        raster[6 + k] = t[:, :, i, j].imag
    return raster


def raster_to_coherence(raster: np.ndarray, looks=1, normalized=True) -> CoherenceImage:
    """Inverse of restructure, rebuilding T by Hermitian completion."""
    _, h, w = raster.shape
    t = np.zeros((h, w, 3, 3), dtype=np.complex128)
    for k, (i, j) in enumerate(_DIAG):
        t[:, :, i, j] = raster[k]
    for k, (i, j) in enumerate(_OFFDIAG):
        t[:, :, i, j] = raster[3 + k] + 1j * raster[6 + k]
        t[:, :, j, i] = raster[3 + k] - 1j * raster[6 + k]
    return CoherenceImage(t=t, looks=looks, normalized=normalized)


def extract_window(raster: np.ndarray, center, size) -> np.ndarray:
    """Window of ``size`` pixels with the center pixel at (size//2, size//2);
    out-of-bounds regions are zero filled."""
    _, h, w = raster.shape
    r, c = center
    out = np.zeros((raster.shape[0], size, size), dtype=raster.dtype)
    r0, c0 = r - size // 2, c - size // 2
    sr0, sc0 = max(r0, 0), max(c0, 0)
    sr1, sc1 = min(r0 + size, h), min(c0 + size, w)
    if sr0 < sr1 and sc0 < sc1:
        out[:, sr0 - r0:sr1 - r0, sc0 - c0:sc1 - c0] = raster[:, sr0:sr1, sc0:sc1]
    return out


def extract_views(raster: np.ndarray, center, k: int, K: int, label=None) -> ViewPair:
    """Local k x k and global K x K patches around one pixel."""
    if k >= K:
        raise ValueError(f"extract_views: local size {k} must be smaller than global size {K}")
    h, w = raster.shape[1], raster.shape[2]
    r, c = center
    if not (0 <= r < h and 0 <= c < w):
        raise ValueError(f"extract_views: center {center} outside {h}x{w} image")
    return ViewPair(local=extract_window(raster, center, k),
                    global_=extract_window(raster, center, K),
                    center=(r, c), label=label)


def augment(patch: np.ndarray, index: int) -> np.ndarray:
    """One of the 8 dihedral transforms of a square patch.

    Index 0..3 rotate clockwise by 0/90/180/270 degrees; 4..7 mirror
    left-right first, then rotate. Works on (..., k, k) arrays.
    """
    if not 0 <= index <= 7:
        raise ValueError(f"augment: index {index} outside 0..7")
    if patch.shape[-1] != patch.shape[-2]:
        raise ValueError(f"augment: patch {patch.shape} is not square")
    out = patch
    if index >= 4:
        out = np.flip(out, axis=-1)
    rot = index % 4
    if rot:
        out = np.rot90(out, k=-rot, axes=(-2, -1))
    return np.ascontiguousarray(out)


def synth_polsar(n_classes, height, width, looks=4, noise_scale=1.0, seed=0):
    """Deterministic synthetic scene: rectangular class regions plus a salt
    of single-pixel intrusions, each pixel a ``looks``-look coherence draw.

    noise_scale interpolates between the exact class covariance (0) and the
    fully sampled multi-look estimate (1); values in [0, 1] keep every T
    positive semidefinite.
    """
    if n_classes < 2:
        raise ValueError("synth_polsar: need at least 2 classes")
    if not 0.0 <= noise_scale <= 1.0:
        raise ValueError(f"synth_polsar: noise_scale {noise_scale} outside [0, 1]")
    rng = np.random.default_rng(seed)

    covs = []
    for cid in range(1, n_classes + 1):
        cov = class_covariance(cid)
        if np.linalg.eigvalsh(cov).min() < -1e-10:
            raise ValueError(f"synth_polsar: class {cid} covariance is not PSD")
        covs.append(cov)

    # contiguous rectangular blocks, near-square grid of regions
    n_rows = int(np.floor(np.sqrt(n_classes)))
    n_cols = int(np.ceil(n_classes / n_rows))
    ids = np.zeros((height, width), dtype=np.int32)
    row_edges = np.linspace(0, height, n_rows + 1).astype(int)
    col_edges = np.linspace(0, width, n_cols + 1).astype(int)
    block = 0
    for i in range(n_rows):
        for j in range(n_cols):
            ids[row_edges[i]:row_edges[i + 1], col_edges[j]:col_edges[j + 1]] = block % n_classes + 1
            block += 1

    # single-pixel intrusions, at most 1% of pixels
    n_salt = int(0.005 * height * width)
    if n_salt:
        flat = rng.choice(height * width, size=n_salt, replace=False)
        for f in flat:
            r, c = divmod(int(f), width)
            ids[r, c] = int(rng.integers(1, n_classes + 1))

    chol = [np.linalg.cholesky(c + 1e-12 * np.eye(3)) for c in covs]
    t = np.empty((height, width, 3, 3), dtype=np.complex128)
    for cid in range(1, n_classes + 1):
        mask = ids == cid
        n_pix = int(mask.sum())
        if n_pix == 0:
            continue
        z = (rng.standard_normal((n_pix, looks, 3)) +
             1j * rng.standard_normal((n_pix, looks, 3))) / np.sqrt(2.0)
        p = z @ chol[cid - 1].T.conj()
        sampled = np.einsum("nli,nlj->nij", p, p.conj()) / looks
        t[mask] = covs[cid - 1] + noise_scale * (sampled - covs[cid - 1])

    image = CoherenceImage(t=t, looks=looks)
    return image, LabelMap(ids=ids, n_classes=n_classes)


def sample_labels(labels: LabelMap, rate: float, seed=0) -> LabelMap:
    """Per-class uniform subsample without replacement.

    Each present class keeps max(1, round(rate * count)) pixels; absent
    classes are skipped with a warning. Returns a LabelMap where only the
    sampled pixels keep their ids.
    """
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"sample_labels: rate {rate} outside (0, 1]")
    rng = np.random.default_rng(seed)
    out = np.zeros_like(labels.ids)
    for cid in range(1, labels.n_classes + 1):
        rows, cols = np.nonzero(labels.ids == cid)
        count = rows.size
        if count == 0:
            warnings.warn(f"sample_labels: class {cid} has no pixels, skipping")
            continue
        n_take = max(1, int(np.floor(rate * count + 0.5)))
        n_take = min(n_take, count)
        pick = rng.choice(count, size=n_take, replace=False)
        out[rows[pick], cols[pick]] = cid
    return LabelMap(ids=out, n_classes=labels.n_classes)


def labeled_centers(labels: LabelMap):
    """(row, col, id) triples for every labeled pixel, row-major order."""
    rows, cols = np.nonzero(labels.ids)
    return [(int(r), int(c), int(labels.ids[r, c])) for r, c in zip(rows, cols)]
