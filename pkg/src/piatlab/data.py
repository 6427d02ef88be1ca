"""Datasets: synthetic 2-D generators, MNIST-style IDX reader, CSV I/O."""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ConsistencyError, FormatError
from .seeding import generator

__all__ = [
    "Dataset",
    "IDX_IMAGES_MAGIC",
    "IDX_LABELS_MAGIC",
    "iterate_minibatches",
    "load_csv",
    "load_idx",
    "make_blobs",
    "make_two_moons",
    "save_csv",
]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True, eq=False)
class Dataset:
    """Inputs in [0, 1] with integer labels in [0, n_classes)."""

    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        x = np.array(self.inputs, dtype=np.float64, order="C")
        y = np.array(self.labels, dtype=np.int64, order="C")
        if x.ndim != 2:
            raise ConsistencyError(f"inputs must be [n, d], got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise ConsistencyError(f"{x.shape[0]} inputs but {y.size} labels")
        if not np.all(np.isfinite(x)) or (x.size and (x.min() < 0.0 or x.max() > 1.0)):
            raise ConsistencyError("inputs must be finite and lie in [0, 1]")
        if self.n_classes < 2:
            raise ConsistencyError(f"need at least 2 classes, got {self.n_classes}")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise ConsistencyError(f"labels must lie in [0, {self.n_classes})")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.size

    @property
    def dim(self):
        return self.inputs.shape[1]

    def subset(self, idx):
        return Dataset(self.inputs[idx], self.labels[idx], self.n_classes)

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.n_classes)


def make_two_moons(n, noise_sd=0.1, seed=0):
    """Two interleaving half circles, jittered, mapped into the unit square.

    The affine map is fixed given ``noise_sd``: the noise-free moons span
    [-1, 2] x [-0.5, 1]; that box is padded by ``4 * noise_sd`` on every side
    and rescaled onto [0, 1]^2. The rare jittered point that still falls
    outside is clipped.
    """
    if n < 2 or n % 2:
        raise ConfigError([("n", f"must be an even number >= 2, got {n}")])
    if noise_sd < 0:
        raise ConfigError([("noise_sd", f"must be >= 0, got {noise_sd}")])
    rng = generator(seed, "two_moons")
    half = n // 2
    t = np.linspace(0.0, np.pi, half)
    outer = np.column_stack([np.cos(t), np.sin(t)])
    inner = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    pts = np.vstack([outer, inner])
    labels = np.repeat([0, 1], half)
    if noise_sd > 0:
        pts = pts + rng.normal(0.0, noise_sd, size=pts.shape)
    pad = 4.0 * noise_sd
    lo = np.array([-1.0 - pad, -0.5 - pad])
    span = np.array([3.0 + 2 * pad, 1.5 + 2 * pad])
    pts = np.clip((pts - lo) / span, 0.0, 1.0)
    order = rng.permutation(n)
    return Dataset(pts[order], labels[order], 2)


def two_moons_arcs(noise_sd=0.0):
    """The affine map used by :func:`make_two_moons`, as ``(lo, span)``."""
    pad = 4.0 * noise_sd
    return np.array([-1.0 - pad, -0.5 - pad]), np.array([3.0 + 2 * pad, 1.5 + 2 * pad])


def make_blobs(n, centers, spread_sd=0.05, seed=0):
    """Isotropic Gaussian clusters around ``centers`` clipped to the unit box.

    Points are assigned to centers round-robin, so class sizes differ by at
    most one; the label of a point is the index of its center.
    """
    centers = np.asarray(centers, dtype=np.float64)
    problems = []
    if centers.ndim != 2 or centers.shape[0] < 2:
        problems.append(("centers", "need at least 2 centers given as [k, d]"))
    elif np.any(centers < 0.0) or np.any(centers > 1.0):
        problems.append(("centers", "every center must lie inside [0, 1]^d"))
    if spread_sd < 0:
        problems.append(("spread_sd", f"must be >= 0, got {spread_sd}"))
    if n < 1:
        problems.append(("n", f"must be >= 1, got {n}"))
    if problems:
        raise ConfigError(problems)
    rng = generator(seed, "blobs")
    k = centers.shape[0]
    labels = np.arange(n) % k
    pts = centers[labels] + rng.normal(0.0, 1.0, size=(n, centers.shape[1])) * spread_sd
    pts = np.clip(pts, 0.0, 1.0)
    order = rng.permutation(n)
    return Dataset(pts[order], labels[order], k)


def _read_idx(path, magic, ndim):
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 4:
        raise OSError(f"{path}: truncated IDX header")
    found = struct.unpack(">I", raw[:4])[0]
    if found != magic:
        raise FormatError(f"{path}: IDX magic {found:#010x}, expected {magic:#010x}")
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise OSError(f"{path}: truncated IDX header")
    dims = struct.unpack(">" + "I" * ndim, raw[4:head])
    need = int(np.prod(dims))
    if len(raw) - head < need:
        raise OSError(f"{path}: truncated IDX payload ({len(raw) - head} of {need} bytes)")
    return np.frombuffer(raw, dtype=np.uint8, count=need, offset=head).reshape(dims)


def load_idx(images_path, labels_path, limit=None, n_classes=None):
    """Read unsigned-byte IDX image/label files (MNIST layout).

    Images must be 3-D (count, rows, cols) and labels 1-D. Pixels are
    scaled by 1/255 and flattened row-major. ``limit`` keeps the first
    examples; a limit beyond the file count returns everything.
    """
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise ConsistencyError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    if n_classes is None:
        n_classes = max(int(labels.max()) + 1 if labels.size else 2, 2)
    return Dataset(x, labels.astype(np.int64), n_classes)


def write_idx(path, array, magic):
    """Write a uint8 array as an IDX file (used for fixtures and exports)."""
    array = np.asarray(array, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(">" + "I" * array.ndim, *array.shape))
        fh.write(array.tobytes())


def save_csv(dataset, path):
    """CSV with header ``x0,...,x{d-1},label``; floats written with repr."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(dataset.dim)] + ["label"])
        for row, label in zip(dataset.inputs, dataset.labels):
            w.writerow([repr(float(v)) for v in row] + [int(label)])


def load_csv(path, n_classes=None):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][-1] != "label" or any(h != f"x{i}" for i, h in enumerate(rows[0][:-1])):
        raise FormatError(f"{path}: header must be x0,...,x(d-1),label")
    d = len(rows[0]) - 1
    try:
        x = np.array([[float(v) for v in r[:d]] for r in rows[1:]], dtype=np.float64).reshape(-1, d)
        y = np.array([int(r[d]) for r in rows[1:]], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if n_classes is None:
        n_classes = max(int(y.max()) + 1 if y.size else 2, 2)
    return Dataset(x, y, n_classes)


def iterate_minibatches(n, batch_size, seed):
    """Index arrays for one epoch: seeded shuffle, last short batch kept."""
    order = generator(seed, "shuffle").permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]
