"""Level layout shared by both hash-encoding backends."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Coordinate primes for the XOR-multiply spatial hash (32-bit wraparound).
HASH_PRIMES = (73856093, 19349663, 83492791)

# Corner offsets of a grid cell, in a fixed order shared by both backends.
CORNERS = np.array(
    [[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=np.int64
)


@dataclass(frozen=True)
class GridLayout:
    """Resolved per-level storage layout of a multiresolution feature grid.

    Levels whose full vertex lattice fits in the hash table are stored dense
    (collision free); finer levels fall back to the spatial hash into a
    power-of-two table.
    """

    level_res: np.ndarray  # int32 [L], cells per axis
    row_offset: np.ndarray  # int64 [L+1], row ranges into the flat table
    hashed: np.ndarray  # uint8 [L], 1 where the level is hash addressed
    lo: np.ndarray  # float64 [3], lower corner of the bounds
    inv_extent: np.ndarray  # float64 [3], 1 / (hi - lo)
    features_per_level: int

    @property
    def levels(self) -> int:
        return int(self.level_res.shape[0])

    @property
    def total_rows(self) -> int:
        return int(self.row_offset[-1])

    @property
    def output_dim(self) -> int:
        return self.levels * self.features_per_level


def build_layout(
    level_res: np.ndarray,
    table_size_log2: int,
    lo: np.ndarray,
    hi: np.ndarray,
    features_per_level: int,
) -> GridLayout:
    level_res = np.asarray(level_res, dtype=np.int32)
    table_rows = 1 << table_size_log2
    rows = []
    hashed = []
    for res in level_res:
        dense_rows = (int(res) + 1) ** 3
        if dense_rows <= table_rows:
            rows.append(dense_rows)
            hashed.append(0)
        else:
            rows.append(table_rows)
            hashed.append(1)
    row_offset = np.zeros(len(rows) + 1, dtype=np.int64)
    np.cumsum(rows, out=row_offset[1:])
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    return GridLayout(
        level_res=level_res,
        row_offset=row_offset,
        hashed=np.asarray(hashed, dtype=np.uint8),
        lo=lo,
        inv_extent=1.0 / (hi - lo),
        features_per_level=features_per_level,
    )


def corner_rows(corners: np.ndarray, res: int, hashed: bool, n_rows: int) -> np.ndarray:
    """Table row of each lattice vertex, dense or hash addressed.

    corners: integer array [..., 3] with coordinates in [0, res].
    """
    if not hashed:
        side = res + 1
        return (corners[..., 0] * side + corners[..., 1]) * side + corners[..., 2]
    mask32 = np.uint64(0xFFFFFFFF)
    acc = (corners[..., 0].astype(np.uint64) * np.uint64(HASH_PRIMES[0])) & mask32
    acc ^= (corners[..., 1].astype(np.uint64) * np.uint64(HASH_PRIMES[1])) & mask32
    acc ^= (corners[..., 2].astype(np.uint64) * np.uint64(HASH_PRIMES[2])) & mask32
    return (acc & np.uint64(n_rows - 1)).astype(np.int64)
