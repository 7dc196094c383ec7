"""Binary on-disk containers: PTC rasters, PLB label maps, weight checkpoints.

All formats are little-endian and designed for bit-exact round trips. The
checkpoint carries a trailing FNV-1a digest over everything between the
magic and the digest itself.
"""

from __future__ import annotations

import struct

import numpy as np

from .polsar import LabelMap

PTC_MAGIC = b"PTC1"
PLB_MAGIC = b"PLB1"
CKPT_MAGIC = b"ECPW"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


# -- PTC: 9-channel float raster -------------------------------------------------


def write_ptc(path, raster):
    """raster (9, H, W) float -> pixel-major float32 container."""
    raster = np.asarray(raster)
    if raster.ndim != 3 or raster.shape[0] != 9:
        raise ValueError(f"write_ptc: raster must be (9, H, W), got {raster.shape}")
    _, h, w = raster.shape
    pixmajor = raster.transpose(1, 2, 0).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(PTC_MAGIC)
        fh.write(struct.pack("<III", h, w, 9))
        fh.write(pixmajor.tobytes())


def read_ptc(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != PTC_MAGIC:
            raise ValueError(f"read_ptc: bad magic {magic!r} in {path}")
        h, w, c = struct.unpack("<III", fh.read(12))
        if c != 9:
            raise ValueError(f"read_ptc: expected 9 channels, got {c}")
        data = np.frombuffer(fh.read(h * w * 9 * 4), dtype="<f4")
    if data.size != h * w * 9:
        raise ValueError(f"read_ptc: truncated payload in {path}")
    return data.reshape(h, w, 9).transpose(2, 0, 1).astype(np.float64)


# -- PLB: label map ---------------------------------------------------------------


def write_plb(path, labels: LabelMap):
    ids = labels.ids.astype("<u2")
    with open(path, "wb") as fh:
        fh.write(PLB_MAGIC)
        fh.write(struct.pack("<IIH", labels.height, labels.width, labels.n_classes))
        fh.write(ids.tobytes())


def read_plb(path) -> LabelMap:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != PLB_MAGIC:
            raise ValueError(f"read_plb: bad magic {magic!r} in {path}")
        h, w, n_c = struct.unpack("<IIH", fh.read(10))
        ids = np.frombuffer(fh.read(h * w * 2), dtype="<u2")
    if ids.size != h * w:
        raise ValueError(f"read_plb: truncated payload in {path}")
    return LabelMap(ids=ids.reshape(h, w).astype(np.int32), n_classes=n_c)


# -- checkpoint: named float32 tensors with digest --------------------------------


def write_checkpoint(path, tensors):
    """tensors: mapping name -> array-like; written sorted by name."""
    payload = bytearray()
    names = sorted(tensors)
    payload += struct.pack("<I", len(names))
    for name in names:
        arr = np.ascontiguousarray(np.asarray(tensors[name]), dtype="<f4")
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"write_checkpoint: name too long: {name[:40]}...")
        if arr.ndim > 0xFF:
            raise ValueError(f"write_checkpoint: rank {arr.ndim} unsupported")
        payload += struct.pack("<H", len(raw)) + raw
        payload += struct.pack("<B", arr.ndim)
        payload += struct.pack(f"<{arr.ndim}I", *arr.shape)
        payload += arr.tobytes()
    digest = fnv1a(bytes(payload))
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(payload)
        fh.write(struct.pack("<Q", digest))


def read_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CKPT_MAGIC:
        raise ValueError(f"read_checkpoint: bad magic {blob[:4]!r} in {path}")
    payload, digest = blob[4:-8], struct.unpack("<Q", blob[-8:])[0]
    if fnv1a(payload) != digest:
        raise ValueError(f"read_checkpoint: digest mismatch in {path}")
    off = 0
    (count,) = struct.unpack_from("<I", payload, off)
    off += 4
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", payload, off)
        off += 2
        name = payload[off:off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<B", payload, off)
        off += 1
        shape = struct.unpack_from(f"<{rank}I", payload, off)
        off += 4 * rank
        n = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(payload, dtype="<f4", count=n, offset=off)
        off += 4 * n
        out[name] = arr.reshape(shape).astype(np.float64)
    if off != len(payload):
        raise ValueError(f"read_checkpoint: trailing bytes in {path}")
    return out


def parse_ppm(data: bytes):
    """Minimal P6 reader used by tests and tooling round trips."""
    if not data.startswith(b"P6"):
        raise ValueError("parse_ppm: not a P6 file")
    parts = data.split(b"\n", 3)
    w, h = map(int, parts[1].split())
    maxval = int(parts[2])
    if maxval != 255:
        raise ValueError(f"parse_ppm: unsupported maxval {maxval}")
    rgb = np.frombuffer(parts[3], dtype=np.uint8, count=h * w * 3)
    return rgb.reshape(h, w, 3)
