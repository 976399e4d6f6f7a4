"""Synthetic Spheres data, IDX image files, CSV point clouds and seeded splits."""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from topoae.exceptions import ConfigError, ParseError, ValidationError
from topoae.persistence import PointCloud

__all__ = [
    "DatasetSplit",
    "sample_sphere",
    "generate_spheres",
    "gaussian_cloud",
    "read_idx",
    "write_idx",
    "load_idx",
    "split",
    "split_sizes",
    "read_csv",
    "write_csv",
    "write_provenance",
    "read_provenance",
]


@dataclass
class DatasetSplit:
    train: Optional[PointCloud]
    validation: Optional[PointCloud]
    test: Optional[PointCloud]
    provenance: dict = field(default_factory=dict)
    indices: tuple = ()


def sample_sphere(n: int, d: int, r: float = 1.0, seed=None) -> PointCloud:
    """n points uniform on the (d-1)-sphere of radius r about the origin.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if n < 1 or d < 2 or r <= 0:
        raise ValidationError(f"need n >= 1, d >= 2, r > 0; got n={n}, d={d}, r={r}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d))
    x *= r / np.linalg.norm(x, axis=1, keepdims=True)
    return PointCloud(x)


def generate_spheres(
    n_per_inner: int = 50,
    seed=0,
    d: int = 101,
    r: float = 5.0,
    n_spheres: int = 10,
    shift_scale=None,
) -> PointCloud:
    """Ten shifted radius-``r`` spheres inside one radius-``5r`` sphere.

    Each inner sphere is translated by a Gaussian vector with per-coordinate
    standard deviation ``shift_scale`` (default ``10 / sqrt(d)``). The outer
    sphere is centred at the origin and holds as many points as all inner
    spheres together. Labels are 0..n_spheres-1 for inner spheres and
    ``n_spheres`` for the outer one.
    """
    if n_per_inner < 1:
        raise ValidationError("n_per_inner must be positive")
    if shift_scale is None:
        shift_scale = 10.0 / np.sqrt(d)
    rng = np.random.default_rng(seed)
    shifts = rng.normal(0.0, shift_scale, size=(n_spheres, d))
    parts, labels = [], []
    for k in range(n_spheres):
        parts.append(sample_sphere(n_per_inner, d, r, rng).data + shifts[k])
        labels.append(np.full(n_per_inner, k))
    parts.append(sample_sphere(n_spheres * n_per_inner, d, 5 * r, rng).data)
    labels.append(np.full(n_spheres * n_per_inner, n_spheres))
    return PointCloud(np.concatenate(parts), np.concatenate(labels))


def gaussian_cloud(n: int, d: int, seed=0) -> PointCloud:
    """n standard-normal points in R^d."""
    return PointCloud(np.random.default_rng(seed).standard_normal((n, d)))


# IDX type code -> big-endian numpy dtype
_IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_IDX_CODES = {v.newbyteorder("="): k for k, v in _IDX_TYPES.items()}


def read_idx(blob: bytes) -> np.ndarray:
    """Decode IDX bytes into an array of the stored shape and type."""
    if len(blob) < 4:
        raise ParseError("truncated header", offset=len(blob))
    if blob[0] != 0 or blob[1] != 0:
        raise ParseError("bad magic: first two bytes must be zero", offset=0)
    code, ndim = blob[2], blob[3]
    if code not in _IDX_TYPES:
        raise ParseError(f"unsupported type code 0x{code:02x}", offset=2)
    if ndim == 0:
        raise ParseError("dimension count must be positive", offset=3)
    header_end = 4 + 4 * ndim
    if len(blob) < header_end:
        raise ParseError("truncated header", offset=len(blob))
    shape = struct.unpack(f">{ndim}I", blob[4:header_end])
    dtype = _IDX_TYPES[code]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    available = len(blob) - header_end
    if available < expected:
        raise ParseError(
            f"truncated payload: expected {expected} bytes, found {available}",
            offset=len(blob),
        )
    if available > expected:
        raise ParseError("trailing bytes after payload", offset=header_end + expected)
    data = np.frombuffer(blob, dtype=dtype, offset=header_end, count=int(np.prod(shape)))
    return data.reshape(shape).astype(dtype.newbyteorder("="))


def write_idx(path, array) -> None:
    arr = np.asarray(array)
    code = _IDX_CODES.get(arr.dtype.newbyteorder("="))
    if code is None:
        raise ValidationError(f"dtype {arr.dtype} has no IDX type code")
    header = bytes([0, 0, code, arr.ndim]) + struct.pack(f">{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + arr.astype(_IDX_TYPES[code]).tobytes())


def _scale_to_unit_interval(raw: np.ndarray) -> np.ndarray:
    if raw.dtype.kind in "iu":
        info = np.iinfo(raw.dtype)
        lo, hi = float(info.min), float(info.max)
    else:
        lo, hi = float(raw.min()), float(raw.max())
        if hi == lo:
            return np.zeros(raw.shape)
    return 2.0 * (raw.astype(np.float64) - lo) / (hi - lo) - 1.0


def load_idx(path, labels_path=None) -> PointCloud:
    """Load IDX images as flattened rows scaled to [-1, 1].

    Integer pixels are scaled by their type's full range (0..255 for unsigned
    bytes); floating point pixels by the observed min and max.
    """
    raw = read_idx(Path(path).read_bytes())
    rows = _scale_to_unit_interval(raw).reshape(raw.shape[0], -1)
    labels = None
    if labels_path is not None:
        labels = read_idx(Path(labels_path).read_bytes()).reshape(-1).astype(np.int64)
    return PointCloud(rows, labels)


def split_sizes(n: int, fractions) -> list:
    """Largest-remainder apportionment of n items.

    Leftover items go to the largest fractional remainders; equal remainders
    favour the part with the smaller quota, then the later part, so held-out
    splits are not shortchanged.
    """
    fractions = [float(f) for f in fractions]
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be nonnegative and sum to 1, got {fractions}")
    quotas = [n * f for f in fractions]
    sizes = [int(np.floor(q + 1e-9)) for q in quotas]
    remainders = [round(q - s, 9) for q, s in zip(quotas, sizes)]
    leftover = n - sum(sizes)
    ranked = sorted(range(len(fractions)), key=lambda k: (-remainders[k], quotas[k], -k))
    for k in ranked[:leftover]:
        sizes[k] += 1
    return sizes


def split(cloud: PointCloud, fractions=(0.765, 0.135, 0.10), seed: int = 0) -> DatasetSplit:
    """Seeded permutation cut into contiguous train/validation/test blocks."""
    if len(fractions) != 3:
        raise ConfigError("expected three fractions (train, validation, test)")
    n = len(cloud)
    sizes = split_sizes(n, fractions)
    perm = np.random.default_rng(seed).permutation(n)
    cuts = np.cumsum([0] + sizes)
    idx = tuple(np.sort(perm[cuts[k]:cuts[k + 1]]) for k in range(3))
    # Empty parts are None: a point cloud has at least one point.
    parts = [cloud.subset(ix) if len(ix) else None for ix in idx]
    provenance = {"n": n, "fractions": list(fractions), "seed": seed, "sizes": sizes}
    return DatasetSplit(*parts, provenance=provenance, indices=idx)


def write_csv(path, cloud: PointCloud) -> None:
    """Header row ``x0..x{d-1}[,label]``; floats written with ``repr`` so reads are exact."""
    d = cloud.dim
    header = [f"x{k}" for k in range(d)]
    if cloud.labels is not None:
        header.append("label")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for k in range(len(cloud)):
            row = [repr(float(v)) for v in cloud.data[k]]
            if cloud.labels is not None:
                row.append(str(int(cloud.labels[k])))
            writer.writerow(row)


def read_csv(path) -> PointCloud:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty CSV file", offset=0) from None
        rows = list(reader)
    has_label = bool(header) and header[-1].strip().lower() == "label"
    try:
        values = np.array([[float(v) for v in row] for row in rows if row], dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"non-numeric CSV value: {exc}") from None
    if values.ndim != 2 or values.shape[1] != len(header):
        raise ParseError(f"CSV rows do not match header width {len(header)}")
    if has_label:
        return PointCloud(values[:, :-1], values[:, -1].astype(np.int64))
    return PointCloud(values)


def write_provenance(path, provenance: dict) -> None:
    Path(path).write_text(json.dumps(provenance, indent=2, sort_keys=True) + "\n")


def read_provenance(path) -> dict:
    return json.loads(Path(path).read_text())
