"""Binary dump formats, all little-endian. Byte layout in docs/formats.md.

RVOX1: magic "RVOX1", u32 voxel count, then per voxel:
       i32 cell x/y/z, u32 count, count * u32 point indices.
RWLK1: magic "RWLK1", u32 voxel count, then per voxel:
       u32 voxel id, then 4 slots of
       (u8 present, u32 final id, u16 trace length, length * u32 trace ids).
RWLK2: magic "RWLK2", same walk records with an extra u8 resolution tag
       after the present flag, then a coarse-grid section that mirrors the
       RVOX1 body (u32 count + records, no magic).
RFEA1: magic "RFEA1", u32 voxel count, u32 width, then per voxel:
       u32 voxel id, width * f32 feature values.
"""

import os
import struct
from dataclasses import dataclass

import numpy as np

RVOX1_MAGIC = b"RVOX1"
RWLK1_MAGIC = b"RWLK1"
RWLK2_MAGIC = b"RWLK2"
RFEA1_MAGIC = b"RFEA1"


def atomic_write(path, data):
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


@dataclass
class RawGrid:
    cells: np.ndarray        # (V, 3) int32
    counts: np.ndarray       # (V,) int64
    point_offsets: np.ndarray
    point_indices: np.ndarray

    def __len__(self):
        return self.cells.shape[0]

    def points_of(self, vid):
        lo, hi = self.point_offsets[vid], self.point_offsets[vid + 1]
        return self.point_indices[lo:hi]


@dataclass
class RawWalks:
    finals: np.ndarray       # (V, 4) int32, -1 absent
    tags: np.ndarray         # (V, 4) uint8, or None for RWLK1
    trace_offsets: np.ndarray
    trace_ids: np.ndarray
    coarse: RawGrid          # None for RWLK1

    def __len__(self):
        return self.finals.shape[0]

    def trace_of(self, vid, slot):
        row = vid * 4 + slot
        lo, hi = self.trace_offsets[row], self.trace_offsets[row + 1]
        return self.trace_ids[lo:hi]


def _grid_body(grid):
    parts = [struct.pack("<I", len(grid))]
    cells = grid.cells
    counts = grid.counts
    for v in range(len(grid)):
        parts.append(struct.pack("<iiiI", int(cells[v, 0]), int(cells[v, 1]),
                                 int(cells[v, 2]), int(counts[v])))
        parts.append(grid.points_of(v).astype("<u4").tobytes())
    return b"".join(parts)


def grid_bytes(grid):
    return RVOX1_MAGIC + _grid_body(grid)


def write_rvox1(grid, path):
    atomic_write(path, grid_bytes(grid))


class _Reader:
    def __init__(self, data, offset=0):
        self.data = data
        self.off = offset

    def take(self, fmt):
        vals = struct.unpack_from(fmt, self.data, self.off)
        self.off += struct.calcsize(fmt)
        return vals

    def take_u32_array(self, n):
        arr = np.frombuffer(self.data, dtype="<u4", count=n, offset=self.off)
        self.off += 4 * n
        return arr.astype(np.int64)


def _read_grid_body(reader):
    (n,) = reader.take("<I")
    cells = np.zeros((n, 3), dtype=np.int32)
    counts = np.zeros(n, dtype=np.int64)
    chunks = []
    offsets = np.zeros(n + 1, dtype=np.int64)
    for v in range(n):
        cx, cy, cz, cnt = reader.take("<iiiI")
        cells[v] = (cx, cy, cz)
        counts[v] = cnt
        chunks.append(reader.take_u32_array(cnt))
        offsets[v + 1] = offsets[v] + cnt
    indices = np.concatenate(chunks) if chunks else np.zeros(0, np.int64)
    return RawGrid(cells, counts, offsets, indices)


def read_rvox1(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:5] != RVOX1_MAGIC:
        raise ValueError(f"{path!r} is not an RVOX1 dump")
    return _read_grid_body(_Reader(data, 5))


def _walk_records(reconfig, tagged):
    parts = [struct.pack("<I", len(reconfig))]
    for v in range(len(reconfig)):
        parts.append(struct.pack("<I", v))
        for k in range(reconfig.n_slots):
            trace = reconfig.trace(v, k)
            if trace is None:
                if tagged:
                    parts.append(struct.pack("<BBIH", 0, 0, 0, 0))
                else:
                    parts.append(struct.pack("<BIH", 0, 0, 0))
                continue
            final = reconfig.finals[v, k]
            n = len(trace)
            if n > 0xFFFF:
                raise ValueError("trace too long for the u16 length field")
            if tagged:
                tag = int(reconfig.final_tags[v, k])
                parts.append(struct.pack("<BBIH", 1, tag, int(final), n))
            else:
                parts.append(struct.pack("<BIH", 1, int(final), n))
            parts.append(trace.visited.astype("<u4").tobytes())
    return parts


def walks_bytes(reconfig):
    if reconfig.n_slots != 4:
        raise ValueError("walk dumps require 4-slot adjacency")
    if reconfig.tagged:
        raise ValueError("tagged reconfigurations dump as RWLK2")
    return b"".join([RWLK1_MAGIC] + _walk_records(reconfig, tagged=False))


def write_rwlk1(reconfig, path):
    atomic_write(path, walks_bytes(reconfig))


def multires_bytes(reconfig, coarse_grid):
    if reconfig.n_slots != 4:
        raise ValueError("walk dumps require 4-slot adjacency")
    if not reconfig.tagged:
        raise ValueError("untagged reconfigurations dump as RWLK1")
    parts = [RWLK2_MAGIC] + _walk_records(reconfig, tagged=True)
    parts.append(_grid_body(coarse_grid))
    return b"".join(parts)


def write_rwlk2(reconfig, coarse_grid, path):
    atomic_write(path, multires_bytes(reconfig, coarse_grid))


def _read_walk_records(reader, tagged):
    (n,) = reader.take("<I")
    finals = np.full((n, 4), -1, dtype=np.int32)
    tags = np.zeros((n, 4), dtype=np.uint8) if tagged else None
    offsets = np.zeros(n * 4 + 1, dtype=np.int64)
    chunks = []
    total = 0
    for expect in range(n):
        (vid,) = reader.take("<I")
        if vid != expect:
            raise ValueError(f"walk records out of order: {vid} != {expect}")
        for k in range(4):
            if tagged:
                present, tag, final, ln = reader.take("<BBIH")
            else:
                present, final, ln = reader.take("<BIH")
                tag = 0
            if present:
                finals[vid, k] = final
                if tagged:
                    tags[vid, k] = tag
                chunks.append(reader.take_u32_array(ln))
                total += ln
            offsets[vid * 4 + k + 1] = total
    # records arrive in id order, so offsets are already cumulative
    ids = np.concatenate(chunks) if chunks else np.zeros(0, np.int64)
    return finals, tags, offsets, ids


def read_rwlk1(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:5] != RWLK1_MAGIC:
        raise ValueError(f"{path!r} is not an RWLK1 dump")
    finals, tags, offsets, ids = _read_walk_records(_Reader(data, 5), tagged=False)
    return RawWalks(finals, tags, offsets, ids, coarse=None)


def read_rwlk2(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:5] != RWLK2_MAGIC:
        raise ValueError(f"{path!r} is not an RWLK2 dump")
    reader = _Reader(data, 5)
    finals, tags, offsets, ids = _read_walk_records(reader, tagged=True)
    coarse = _read_grid_body(reader)
    return RawWalks(finals, tags, offsets, ids, coarse=coarse)


def features_bytes(features):
    if not features:
        return RFEA1_MAGIC + struct.pack("<II", 0, 0)
    width = len(features[0].vector)
    parts = [RFEA1_MAGIC, struct.pack("<II", len(features), width)]
    for feat in features:
        if len(feat.vector) != width:
            raise ValueError("inconsistent feature widths")
        parts.append(struct.pack("<I", feat.voxel_id))
        parts.append(np.asarray(feat.vector, dtype="<f4").tobytes())
    return b"".join(parts)


def write_rfea1(features, path):
    atomic_write(path, features_bytes(features))


def read_rfea1(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:5] != RFEA1_MAGIC:
        raise ValueError(f"{path!r} is not an RFEA1 dump")
    reader = _Reader(data, 5)
    n, width = reader.take("<II")
    ids = np.zeros(n, dtype=np.int64)
    matrix = np.zeros((n, width), dtype=np.float32)
    for i in range(n):
        (ids[i],) = reader.take("<I")
        matrix[i] = np.frombuffer(reader.data, dtype="<f4", count=width,
                                  offset=reader.off)
        reader.off += 4 * width
    return ids, matrix


def write_feature_csv(features, path):
    with open(path, "w") as fh:
        if features:
            width = len(features[0].vector)
            fh.write("id," + ",".join(f"f{i}" for i in range(width)) + "\n")
            for feat in features:
                vals = ",".join(f"{float(v):.9g}" for v in feat.vector)
                fh.write(f"{feat.voxel_id},{vals}\n")
        else:
            fh.write("id\n")
