"""Ray-tracing dataset export in the tabular layout the DQN consumes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .raytrace import CoverageMap, PropagationPath
from .scene import GridSpec

HEADER = "x,y,zen_aod,azi_aod,zen_aoa,azi_aoa,theta_re,theta_im,phase,delay"
COLUMNS = tuple(HEADER.split(","))
PER_CELL = "per_cell"
PER_PATH = "per_path"


class DatasetError(ValueError):
    pass


class DatasetRow(NamedTuple):
    x: float
    y: float
    zen_aod: float
    azi_aod: float
    zen_aoa: float
    azi_aoa: float
    theta_re: float
    theta_im: float
    phase: float
    delay: float


@dataclass(frozen=True)
class DatasetStats:
    grid_size: tuple[int, int]
    data_rows: int
    file_bytes: int

    def summary(self) -> str:
        return f"grid [{self.grid_size[0]},{self.grid_size[1]}], rows {self.data_rows}, bytes {self.file_bytes}"


def _row(x: float, y: float, p: PropagationPath | None) -> DatasetRow:
    if p is None:
        return DatasetRow(x, y, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    return DatasetRow(
        x, y, p.zen_aod, p.azi_aod, p.zen_aoa, p.azi_aoa, p.theta.real, p.theta.imag, p.phase, p.delay
    )


def generate_dataset(cmap: CoverageMap, mode: str = PER_CELL) -> list[DatasetRow]:
    """Rows ordered row-major by (j, i).

    ``per_cell``: one row per grid cell from its strongest path (dead cells
    keep their coordinates and zero RF fields).  ``per_path``: one row per
    (cell, path); dead cells contribute nothing.
    """
    if mode not in (PER_CELL, PER_PATH):
        raise ValueError(f"unknown dataset mode {mode!r}")
    g = cmap.grid
    rows = []
    for j in range(g.ny):
        for i in range(g.nx):
            rec = cmap.cell(i, j)
            x, y = g.cell_center(i, j)
            if mode == PER_CELL:
                rows.append(_row(x, y, None if rec.dead else rec.paths[rec.strongest]))
            else:
                rows.extend(_row(x, y, p) for p in rec.paths)
    return rows


def feature_grid(rows: Sequence[DatasetRow], grid: GridSpec) -> np.ndarray:
    """Per-cell rows as an array of shape (nx, ny, 10)."""
    if len(rows) != grid.nx * grid.ny:
        raise DatasetError(f"expected {grid.nx * grid.ny} per-cell rows, got {len(rows)}")
    arr = np.array(rows, dtype=float).reshape(grid.ny, grid.nx, len(COLUMNS))
    return np.ascontiguousarray(arr.transpose(1, 0, 2))


def write_csv(rows: Iterable[DatasetRow]) -> str:
    lines = [HEADER]
    lines.extend(",".join(format(v, ".17g") for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def read_csv(text: str) -> list[DatasetRow]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise DatasetError("line 1: missing or wrong header")
    rows = []
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != len(COLUMNS):
            raise DatasetError(f"line {n}: expected {len(COLUMNS)} columns, got {len(fields)}")
        try:
            rows.append(DatasetRow(*(float(f) for f in fields)))
        except ValueError:
            raise DatasetError(f"line {n}: malformed number") from None
    return rows


def stats(rows: Sequence[DatasetRow], grid: GridSpec | None) -> DatasetStats:
    if grid is None:
        return DatasetStats((0, 0), 0, 0)
    return DatasetStats((grid.nx, grid.ny), len(rows), len(write_csv(rows).encode("utf-8")))
