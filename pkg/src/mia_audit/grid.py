"""Score grid container and its interchange formats.

A grid is an M x N matrix of attack-statistic values (rows are models,
columns are samples) plus a boolean membership mask of the same shape.
Two on-disk forms exist: a CSV pair (scores.csv / mask.csv in a directory)
and a little-endian binary ``.miag`` file that round-trips bit-exactly.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["MiaGrid", "GridFormatError", "load_grid", "save_grid", "subset_models"]

_MAGIC = b"MIAG"
_VERSION = 1


class GridFormatError(ValueError):
    """Raised for malformed grid files or inconsistent grid contents."""


@dataclass
class MiaGrid:
    """Immutable-by-convention M x N score grid with membership mask.

    scores : float64 matrix, finite everywhere
    mask   : bool matrix, True where the sample was in that model's training set
    sample_ids : optional per-column identifiers
    meta   : free-form provenance (source, seed, n_full, n_train, ...)
    """

    scores: np.ndarray
    mask: np.ndarray
    sample_ids: list[str] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.scores = np.ascontiguousarray(self.scores, dtype=np.float64)
        self.mask = np.ascontiguousarray(self.mask, dtype=bool)
        if self.scores.ndim != 2:
            raise GridFormatError(f"scores must be 2-D, got shape {self.scores.shape}")
        if self.scores.shape != self.mask.shape:
            raise GridFormatError(
                f"shape mismatch: scores {self.scores.shape} vs mask {self.mask.shape}"
            )
        if self.scores.shape[0] < 1 or self.scores.shape[1] < 1:
            raise GridFormatError(f"grid must be at least 1x1, got {self.scores.shape}")
        bad = np.argwhere(~np.isfinite(self.scores))
        if bad.size:
            r, c = bad[0]
            raise GridFormatError(f"non-finite score at ({r},{c})")
        if self.sample_ids is not None and len(self.sample_ids) != self.scores.shape[1]:
            raise GridFormatError(
                f"{len(self.sample_ids)} sample ids for {self.scores.shape[1]} columns"
            )

    @property
    def n_models(self) -> int:
        return self.scores.shape[0]

    @property
    def n_samples(self) -> int:
        return self.scores.shape[1]

    def column_ids(self) -> list[str]:
        if self.sample_ids is not None:
            return list(self.sample_ids)
        return [f"s{x:06d}" for x in range(self.n_samples)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, MiaGrid):
            return NotImplemented
        return (
            self.scores.shape == other.scores.shape
            and np.array_equal(self.scores, other.scores)
            and np.array_equal(self.mask, other.mask)
            and self.sample_ids == other.sample_ids
        )


def _load_csv_matrix(path: Path) -> tuple[np.ndarray, list[str] | None]:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.strip():
            raise GridFormatError(f"{path}: empty file")
        header = None
        tok = first.split(",")[0].strip()
        try:
            float(tok)
            rows = [first]
        except ValueError:
            header = [t.strip() for t in first.rstrip("\n").split(",")]
            rows = []
        rows.extend(fh)
    parsed = []
    for line in rows:
        line = line.strip()
        if line:
            parsed.append([float(t) for t in line.split(",")])
    if not parsed:
        raise GridFormatError(f"{path}: no data rows")
    widths = {len(r) for r in parsed}
    if len(widths) != 1:
        raise GridFormatError(f"{path}: ragged rows (widths {sorted(widths)})")
    return np.asarray(parsed, dtype=np.float64), header


def _load_csv(directory: Path) -> MiaGrid:
    scores_path = directory / "scores.csv"
    mask_path = directory / "mask.csv"
    if not scores_path.exists() or not mask_path.exists():
        raise GridFormatError(f"{directory}: expected scores.csv and mask.csv")
    scores, ids = _load_csv_matrix(scores_path)
    mask_f, _ = _load_csv_matrix(mask_path)
    if mask_f.shape != scores.shape:
        raise GridFormatError(
            f"shape mismatch: scores {scores.shape} vs mask {mask_f.shape}"
        )
    if not np.isin(mask_f, (0.0, 1.0)).all():
        raise GridFormatError("mask cells must be 0 or 1")
    bad = np.argwhere(~np.isfinite(scores))
    if bad.size:
        r, c = bad[0]
        raise GridFormatError(f"non-finite score at ({r},{c})")
    meta = {}
    meta_path = directory / "meta.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    return MiaGrid(scores, mask_f.astype(bool), sample_ids=ids, meta=meta)


def _save_csv(grid: MiaGrid, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "scores.csv", "w", encoding="utf-8") as fh:
        if grid.sample_ids is not None:
            fh.write(",".join(grid.sample_ids) + "\n")
        for row in grid.scores:
            # 17 significant digits round-trips any double exactly
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    with open(directory / "mask.csv", "w", encoding="utf-8") as fh:
        for row in grid.mask:
            fh.write(",".join("1" if v else "0" for v in row) + "\n")
    if grid.meta:
        (directory / "meta.json").write_text(
            json.dumps(grid.meta, indent=2, sort_keys=True), encoding="utf-8"
        )


def _load_binary(path: Path) -> MiaGrid:
    blob = path.read_bytes()
    if len(blob) < 24:
        raise GridFormatError(f"{path}: truncated header")
    if blob[:4] != _MAGIC:
        raise GridFormatError(f"{path}: bad magic {blob[:4]!r}")
    version, = struct.unpack_from("<I", blob, 4)
    if version != _VERSION:
        raise GridFormatError(f"{path}: unsupported version {version}")
    m, n = struct.unpack_from("<QQ", blob, 8)
    if m < 1 or n < 1:
        raise GridFormatError(f"{path}: invalid dimensions {m}x{n}")
    off = 24
    need = m * n * 8 + m * n + 4
    if len(blob) < off + need:
        raise GridFormatError(f"{path}: truncated payload")
    scores = np.frombuffer(blob, dtype="<f8", count=m * n, offset=off).reshape(m, n)
    off += m * n * 8
    mask_raw = np.frombuffer(blob, dtype=np.uint8, count=m * n, offset=off).reshape(m, n)
    off += m * n
    if not np.isin(mask_raw, (0, 1)).all():
        raise GridFormatError(f"{path}: mask byte outside {{0,1}}")
    meta_len, = struct.unpack_from("<I", blob, off)
    off += 4
    if len(blob) < off + meta_len:
        raise GridFormatError(f"{path}: truncated metadata")
    meta = json.loads(blob[off:off + meta_len].decode("utf-8")) if meta_len else {}
    sample_ids = meta.pop("sample_ids", None)
    bad = np.argwhere(~np.isfinite(scores))
    if bad.size:
        r, c = bad[0]
        raise GridFormatError(f"non-finite score at ({r},{c})")
    return MiaGrid(
        scores.astype(np.float64), mask_raw.astype(bool), sample_ids=sample_ids, meta=meta
    )


def _save_binary(grid: MiaGrid, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = dict(grid.meta)
    if grid.sample_ids is not None:
        meta["sample_ids"] = list(grid.sample_ids)
    meta_blob = json.dumps(meta, sort_keys=True).encode("utf-8") if meta else b""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<QQ", grid.n_models, grid.n_samples))
        fh.write(np.ascontiguousarray(grid.scores, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(grid.mask, dtype=np.uint8).tobytes())
        fh.write(struct.pack("<I", len(meta_blob)))
        fh.write(meta_blob)


def load_grid(path, format: str | None = None) -> MiaGrid:
    """Load a grid from a ``.miag`` file (binary) or a directory with
    scores.csv/mask.csv (csv). The format is inferred from the path when
    not given."""
    path = Path(path)
    if format is None:
        format = "csv" if path.is_dir() else "binary"
    if format == "binary":
        return _load_binary(path)
    if format == "csv":
        return _load_csv(path)
    raise ValueError(f"unknown grid format {format!r}")


def save_grid(grid: MiaGrid, path, format: str | None = None) -> None:
    """Write a grid; binary output is byte-deterministic for a given grid."""
    path = Path(path)
    if format is None:
        format = "binary" if path.suffix == ".miag" else "csv"
    if format == "binary":
        _save_binary(grid, path)
    elif format == "csv":
        _save_csv(grid, path)
    else:
        raise ValueError(f"unknown grid format {format!r}")


def subset_models(
    grid: MiaGrid, m_prime: int, selection: str = "first", seed: int | None = None
) -> MiaGrid:
    """Restrict the grid to m_prime model rows.

    selection="first" takes the leading rows; selection="random" draws rows
    without replacement from a seeded generator (row order preserved), so a
    fixed seed always yields the same subset.
    """
    if not 1 <= m_prime <= grid.n_models:
        raise ValueError(f"m_prime must be in [1, {grid.n_models}], got {m_prime}")
    if selection == "first":
        rows = np.arange(m_prime)
    elif selection == "random":
        if seed is None:
            raise ValueError("selection='random' requires a seed")
        rng = np.random.Generator(np.random.PCG64(seed))
        rows = np.sort(rng.choice(grid.n_models, size=m_prime, replace=False))
    else:
        raise ValueError(f"unknown selection {selection!r}")
    return MiaGrid(
        grid.scores[rows].copy(),
        grid.mask[rows].copy(),
        sample_ids=grid.sample_ids,
        meta=dict(grid.meta),
    )
