"""Point cloud ingestion: LiDAR-style binary sweeps, CSV, synthetic scenes.

The canonical in-memory form is a (P, 5) float32 array with columns
x, y, z, reflectance, timestamp. Point order is preserved exactly as read,
because downstream partitioning is order-dependent under voxel caps.
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np

RECORD_BYTES = 16        # x, y, z, reflectance as little-endian float32
RECORD_BYTES_T = 20      # 5-float variant with a trailing timestamp


@dataclass(frozen=True)
class Point:
    x: float
    y: float
    z: float
    reflectance: float
    timestamp: float = 0.0


class PointCloud:
    """Ordered point sequence with provenance label.

    data: (P, 5) float32, columns x, y, z, reflectance, timestamp.
    """

    def __init__(self, data, source=""):
        data = np.asarray(data, dtype=np.float32)
        if data.size == 0:
            data = data.reshape(0, 5)
        if data.ndim != 2 or data.shape[1] != 5:
            raise ValueError(f"point array must be (P, 5), got {data.shape}")
        if not np.isfinite(data).all():
            raise ValueError("point cloud contains non-finite values")
        self.data = data
        self.source = source

    def __len__(self):
        return self.data.shape[0]

    @property
    def xyz(self):
        return self.data[:, :3]

    @property
    def reflectance(self):
        return self.data[:, 3]

    @property
    def timestamps(self):
        return self.data[:, 4]

    def point(self, i):
        x, y, z, r, t = (float(v) for v in self.data[i])
        return Point(x, y, z, r, t)

    def translated(self, dx, dy, dz):
        out = self.data.copy()
        out[:, 0] += np.float32(dx)
        out[:, 1] += np.float32(dy)
        out[:, 2] += np.float32(dz)
        return PointCloud(out, source=self.source)

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(
            (self.data == other.data).all()
        )


def _pad_timestamp(quads):
    out = np.zeros((quads.shape[0], 5), dtype=np.float32)
    out[:, :4] = quads
    return out


def load_kitti_bin(path, with_timestamp=False):
    """Decode a packed little-endian float32 sweep file.

    Default layout is 4 floats per record (x, y, z, reflectance); pass
    with_timestamp=True for the 5-float variant (.bin5).
    """
    size = os.path.getsize(path)
    rec = RECORD_BYTES_T if with_timestamp else RECORD_BYTES
    if size % rec != 0:
        raise ValueError(
            f"malformed point file {path!r}: {size} bytes is not a multiple of {rec}"
        )
    raw = np.fromfile(path, dtype="<f4")
    width = 5 if with_timestamp else 4
    data = raw.reshape(-1, width)
    if not with_timestamp:
        data = _pad_timestamp(data)
    return PointCloud(data, source=str(path))


def save_bin(cloud, path, with_timestamp=False):
    """Inverse of load_kitti_bin; drops timestamps unless with_timestamp."""
    width = 5 if with_timestamp else 4
    cloud.data[:, :width].astype("<f4").tofile(path)


CSV_HEADER = ["x", "y", "z", "r", "t"]


def load_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ValueError(f"expected CSV header {','.join(CSV_HEADER)!r}")
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.array(rows, dtype=np.float32).reshape(-1, 5)
    return PointCloud(data, source=str(path))


def save_csv(cloud, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in cloud.data:
            # %.9g round-trips float32 exactly
            writer.writerow([f"{float(v):.9g}" for v in row])


@dataclass(frozen=True)
class Blob:
    """Dense cluster placement: points drawn uniformly in center +- extent."""

    center: tuple
    extent: tuple
    density: int


@dataclass(frozen=True)
class SynthSpec:
    """Desk-scale stand-in for a spinning-scanner sweep.

    Concentric rings with a fixed point budget per ring, so areal density
    decays with range the way real sweeps thin out; blobs add dense objects.
    """

    ring_count: int
    points_per_ring: int
    max_range: float
    height_band: tuple = (-2.0, 0.0)
    dropout: float = 0.0
    object_blobs: tuple = field(default=())

    def validate(self):
        if self.ring_count <= 0 or self.points_per_ring <= 0:
            raise ValueError("ring_count and points_per_ring must be positive")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        lo, hi = self.height_band
        if not lo <= hi:
            raise ValueError("height_band must be (low, high)")
        for blob in self.object_blobs:
            if blob.density <= 0:
                raise ValueError("blob density must be positive")


def generate_synthetic(spec, seed):
    """Deterministic synthetic sweep; a pure function of (spec, seed)."""
    spec.validate()
    gen = np.random.Generator(np.random.PCG64(int(seed)))
    lo, hi = spec.height_band
    chunks = []
    per = spec.points_per_ring
    for k in range(spec.ring_count):
        radius = spec.max_range * (k + 1) / spec.ring_count
        base = 2.0 * np.pi * np.arange(per) / per
        ang = base + gen.uniform(-0.5, 0.5, per) * (2.0 * np.pi / per)
        z = gen.uniform(lo, hi, per)
        refl = gen.uniform(0.0, 1.0, per)
        ring = np.zeros((per, 5), dtype=np.float32)
        ring[:, 0] = radius * np.cos(ang)
        ring[:, 1] = radius * np.sin(ang)
        ring[:, 2] = z
        ring[:, 3] = refl
        if spec.dropout > 0.0:
            ring = ring[gen.random(per) >= spec.dropout]
        chunks.append(ring)
    for blob in spec.object_blobs:
        n = int(blob.density)
        offs = (gen.random((n, 3)) * 2.0 - 1.0) * np.asarray(blob.extent)
        pts = np.zeros((n, 5), dtype=np.float32)
        pts[:, :3] = np.asarray(blob.center) + offs
        pts[:, 3] = gen.uniform(0.0, 1.0, n)
        chunks.append(pts)
    data = np.concatenate(chunks, axis=0) if chunks else np.zeros((0, 5), np.float32)
    return PointCloud(data, source=f"synthetic(seed={int(seed)})")
