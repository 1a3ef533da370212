"""Point clouds, CSV interchange and seeded random streams.

Datasets are plain CSV files. Optional metadata rides in leading ``#``
comment lines of the form ``# key=value`` so that the files stay readable
by any plotting tool.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


class DataError(ValueError):
    """Malformed dataset file or container."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Table:
    """A named-column numeric table with string metadata."""

    columns: tuple[str, ...]
    values: np.ndarray
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DataError(f"table values must be 2-D, got shape {values.shape}")
        if values.shape[0] < 1:
            raise DataError("table must contain at least one row")
        if values.shape[1] != len(self.columns):
            raise DataError(
                f"{values.shape[1]} value columns but {len(self.columns)} names"
            )
        if not np.all(np.isfinite(values)):
            raise DataError("table contains non-finite entries")
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "meta", dict(self.meta))

    def __len__(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]


@dataclass(frozen=True)
class PointCloud:
    """N observation vectors in R^m.

    ``meta`` carries provenance such as ``system`` and ``seed``; generator
    parameters are stored under ``param.<name>`` keys.
    """

    points: np.ndarray
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise DataError(f"points must be a 2-D array, got shape {pts.shape}")
        if pts.shape[0] < 1:
            raise DataError("a point cloud needs at least one point")
        if pts.shape[1] < 1:
            raise DataError("points must have at least one coordinate")
        if not np.all(np.isfinite(pts)):
            raise DataError("point cloud contains NaN or infinite entries")
        object.__setattr__(self, "points", _freeze(pts))
        object.__setattr__(self, "meta", {str(k): str(v) for k, v in self.meta.items()})

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n

    def to_table(self) -> Table:
        return Table(tuple(f"x{i}" for i in range(self.dim)), self.points, self.meta)


def format_float(x: float) -> str:
    """Shortest string that round-trips to the same double."""
    return repr(float(x))


def save_table(table: Table, path: str | Path) -> None:
    path = Path(path)
    lines = [f"# {k}={v}" for k, v in sorted(table.meta.items())]
    lines.append(",".join(table.columns))
    for row in table.values:
        lines.append(",".join(format_float(x) for x in row))
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def load_table(path: str | Path) -> Table:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc

    meta: dict[str, str] = {}
    header: list[str] | None = None
    rows: list[list[float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, _, value = body.partition("=")
                meta[key.strip()] = value.strip()
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None:
            header = cells
            continue
        if len(cells) != len(header):
            raise DataError(
                f"{path}:{lineno}: expected {len(header)} fields, got {len(cells)}"
            )
        try:
            row = [float(c) for c in cells]
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric cell in {line!r}") from None
        if not all(math.isfinite(v) for v in row):
            raise DataError(f"{path}:{lineno}: non-finite value")
        rows.append(row)

    if header is None:
        raise DataError(f"{path}: missing header row")
    if not rows:
        raise DataError(f"{path}: no data rows")
    return Table(tuple(header), np.array(rows, dtype=np.float64), meta)


def load_csv(path: str | Path) -> PointCloud:
    """Read a dataset whose header is ``x0,x1,...,x{m-1}``."""
    table = load_table(path)
    expected = tuple(f"x{i}" for i in range(len(table.columns)))
    if table.columns != expected:
        raise DataError(
            f"{path}: header must be {','.join(expected)}, got {','.join(table.columns)}"
        )
    return PointCloud(table.values, table.meta)


def save_csv(cloud: PointCloud, path: str | Path) -> None:
    save_table(cloud.to_table(), path)


def _label_words(label: str) -> list[int]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def rng_stream(seed: int, label: str) -> np.random.Generator:
    """Independent Philox stream for a ``(seed, label)`` pair.

    Philox is counter based, so the stream depends only on the key derived
    from the pair and never on what other streams have consumed.
    """
    seed = int(seed) % 2**64
    entropy = [seed & 0xFFFFFFFF, seed >> 32, *_label_words(label)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def as_meta(values: Mapping[str, object] | Sequence[tuple[str, object]]) -> dict[str, str]:
    items = values.items() if isinstance(values, Mapping) else values
    return {
        k: format_float(v) if isinstance(v, float) else str(v) for k, v in items
    }
