"""Serialization of bin grids: PBMAP v1 plain text and binary PGM images."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import SequenceParseError

MAP_FORMAT = "PBMAP v1"

MAP_KINDS = ("height", "empty", "stable")


def save_map_text(cells: np.ndarray, kind: str, path: str | Path) -> None:
    """One row per line, space-separated integers, after a two-line header."""
    if kind not in MAP_KINDS:
        raise ValueError(f"unknown map kind {kind!r}")
    arr = np.asarray(cells).astype(np.int64)
    with open(path, "w") as f:
        f.write(f"{MAP_FORMAT}\n")
        f.write(f"{kind} {arr.shape[0]} {arr.shape[1]}\n")
        for row in arr:
            f.write(" ".join(str(int(v)) for v in row) + "\n")


def load_map_text(path: str | Path) -> tuple[np.ndarray, str]:
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != MAP_FORMAT:
        raise SequenceParseError(f"expected {MAP_FORMAT!r} magic line", 1)
    try:
        kind, nx, ny = lines[1].split()
        nx, ny = int(nx), int(ny)
    except (IndexError, ValueError) as e:
        raise SequenceParseError(f"bad map header: {e}", 2) from e
    if kind not in MAP_KINDS:
        raise SequenceParseError(f"unknown map kind {kind!r}", 2)
    rows = []
    for ln, raw in enumerate(lines[2 : 2 + nx], start=3):
        row = [int(v) for v in raw.split()]
        if len(row) != ny:
            raise SequenceParseError(f"expected {ny} columns, found {len(row)}", ln)
        rows.append(row)
    if len(rows) != nx:
        raise SequenceParseError(f"expected {nx} rows, found {len(rows)}")
    return np.array(rows, dtype=np.int64), kind


def write_pgm(gray: np.ndarray, path: str | Path) -> None:
    """8-bit binary PGM, one cell per pixel. Input must already be 0..255."""
    arr = np.asarray(gray)
    if arr.dtype != np.uint8:
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError("pixel values must be within 0..255")
        arr = arr.astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode())
        f.write(arr.tobytes())


def to_gray(cells: np.ndarray, max_value: int | None = None) -> np.ndarray:
    """Scale integer grid values onto 0..255 (True -> 255 for boolean maps)."""
    arr = np.asarray(cells)
    if arr.dtype == bool:
        return arr.astype(np.uint8) * 255
    top = max_value if max_value is not None else max(int(arr.max()), 1)
    top = max(top, 1)
    return np.clip(arr.astype(np.float64) / top * 255, 0, 255).astype(np.uint8)
