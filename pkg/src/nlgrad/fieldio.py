"""Field files: one-value-per-line CSV for 1-D fields, plain PGM (P2) plus a JSON sidecar for 2-D."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .grid import DomainGrid, ScalarField


def write_csv(u: ScalarField, path: str | Path) -> Path:
    path = Path(path)
    path.write_text("".join(f"{float(v)!r}\n" for v in u.flat))
    return path


def read_csv(path: str | Path, grid: DomainGrid | None = None) -> ScalarField:
    vals = np.array([float(line) for line in Path(path).read_text().split() if line.strip()])
    if grid is None:
        grid = DomainGrid.unit_interval(vals.size)
    return ScalarField(grid, vals)


def write_pgm(u: ScalarField, path: str | Path) -> Path:
    """
    Write a 2-D field as a P2 image rescaled to 0..255.

    The sidecar ``<path>.json`` records the affine rescale and the exact float
    values, so :func:`read_pgm` restores the field bit for bit.
    """
    if u.grid.ndim != 2:
        raise ValueError("PGM output needs a 2-D field")
    path = Path(path)
    lo, hi = float(u.values.min()), float(u.values.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    img = np.rint((u.values - lo) * scale).astype(int)
    rows, cols = u.grid.dims
    lines = ["P2", f"{cols} {rows}", "255"]
    lines += [" ".join(str(v) for v in row) for row in img]
    path.write_text("\n".join(lines) + "\n")
    sidecar = {
        "offset": lo,
        "scale": scale,
        "grid": u.grid.to_dict(),
        "values": [float(v) for v in u.flat],
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar))
    return path


def read_pgm(path: str | Path) -> ScalarField:
    path = Path(path)
    tokens = [t for line in path.read_text().splitlines() if not line.startswith("#") for t in line.split()]
    if tokens[0] != "P2":
        raise ValueError(f"{path}: not a plain PGM file")
    cols, rows = int(tokens[1]), int(tokens[2])
    img = np.array(tokens[4 : 4 + rows * cols], dtype=float).reshape(rows, cols)
    side_path = Path(str(path) + ".json")
    if side_path.exists():
        side = json.loads(side_path.read_text())
        g = side["grid"]
        grid = DomainGrid(tuple(g["dims"]), tuple(g["spacing"]), tuple(g["origin"]))
        if "values" in side:
            return ScalarField(grid, np.array(side["values"]))
        vals = img / side["scale"] + side["offset"] if side["scale"] else np.full(img.shape, side["offset"])
        return ScalarField(grid, vals)
    return ScalarField(DomainGrid.on_box([0, 0], [1, 1], [rows, cols]), img)


def read_field(path: str | Path, grid: DomainGrid | None = None) -> ScalarField:
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    return read_csv(path, grid)


def write_field(u: ScalarField, path: str | Path) -> Path:
    path = Path(path)
    if u.grid.ndim == 2:
        return write_pgm(u, path.with_suffix(".pgm"))
    return write_csv(u, path.with_suffix(".csv"))


def read_pair_csv(path: str | Path, n: int) -> np.ndarray:
    """Dense ``(n, n)`` matrix from ``i,j,value`` lines; pairs not listed are zero."""
    mat = np.zeros((n, n))
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("i"):
            continue
        i, j, v = line.split(",")
        mat[int(i), int(j)] = float(v)
    return mat
