"""Uniform cell-centered tensor grids with zero-flux boundary operators.

Cells are uniform intervals (1D) or axis-aligned rectangles (2D), values live
at cell centers, fluxes live on faces. Boundary faces always carry zero flux
(mirror ghost cells), which makes divergence(gradient_faces(f)) telescope: the
integral of any divergence vanishes to round-off, so the discrete conservation
identities downstream hold exactly rather than to truncation order.

Quadrature is midpoint: integrate(f) = sum(values) * cell_volume. Face-norm
quadrature assigns each interior face one cell volume, which makes
<-laplacian(f), f> equal grad-norm squared exactly (discrete integration by
parts with no boundary term).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Grid",
    "Field",
    "FaceFlux",
    "build_grid",
    "laplacian",
    "gradient_faces",
    "divergence",
    "integrate",
    "mean",
    "lp_norm",
    "neumann_laplacian_matrix",
    "write_field_csv",
    "read_field_csv",
]

FLOAT_FMT = "%.17g"  # round-trips float64 exactly


@dataclass(frozen=True)
class Grid:
    """Static mesh geometry. Use build_grid; the constructor trusts its args.

    Attributes
    ----------
    dim : 1 or 2
    lengths : side length per axis
    cells : cell count per axis
    spacing : lengths[k] / cells[k]
    measure : domain volume (product of lengths)
    convex_flag : intervals and rectangles are convex; overridable only to
        evaluate structural bounds for notional non-convex domains
    """

    dim: int
    lengths: tuple[float, ...]
    cells: tuple[int, ...]
    spacing: tuple[float, ...]
    measure: float
    convex_flag: bool = True

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def max_spacing(self) -> float:
        return max(self.spacing)

    def axis_centers(self, axis: int) -> np.ndarray:
        n = self.cells[axis]
        h = self.spacing[axis]
        return (np.arange(n) + 0.5) * h

    def cell_coordinates(self) -> tuple[np.ndarray, ...]:
        """Flat coordinate arrays (row-major cell order), one per axis."""
        axes = [self.axis_centers(k) for k in range(self.dim)]
        if self.dim == 1:
            return (axes[0],)
        xx, yy = np.meshgrid(axes[0], axes[1], indexing="ij")
        return (xx.ravel(), yy.ravel())


def build_grid(dim, lengths, cells, convex_flag=True) -> Grid:
    """Validate and assemble a Grid. lengths/cells are scalars or per-axis."""
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    lengths = tuple(float(l) for l in np.atleast_1d(lengths))
    cells = tuple(int(c) for c in np.atleast_1d(cells))
    if len(lengths) == 1 and dim == 2:
        lengths = lengths * 2
    if len(cells) == 1 and dim == 2:
        cells = cells * 2
    if len(lengths) != dim or len(cells) != dim:
        raise ValueError(
            f"need {dim} lengths and cell counts, got {lengths} / {cells}"
        )
    if any(l <= 0 or not math.isfinite(l) for l in lengths):
        raise ValueError(f"side lengths must be positive finite, got {lengths}")
    if any(c < 4 for c in cells):
        raise ValueError(f"need at least 4 cells per axis, got {cells}")
    spacing = tuple(l / c for l, c in zip(lengths, cells))
    measure = float(np.prod(lengths))
    return Grid(dim, lengths, cells, spacing, measure, bool(convex_flag))


@dataclass(frozen=True)
class Field:
    """One scalar value per cell, flat row-major, immutable after build.

    validate=False skips the finiteness check: that path is reserved for
    states a run has already flagged as blown up.
    """

    grid: Grid
    values: np.ndarray
    validate: bool = True

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64).ravel()
        if vals.size != self.grid.n_cells:
            raise ValueError(
                f"expected {self.grid.n_cells} values, got {vals.size}"
            )
        if self.validate and not np.all(np.isfinite(vals)):
            raise ValueError("field contains non-finite values")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def shaped(self) -> np.ndarray:
        return self.values.reshape(self.grid.cells)


@dataclass(frozen=True)
class FaceFlux:
    """Interior-face normal fluxes, one array per axis.

    Axis k array has the cell shape with axis k shortened by one; boundary
    faces are implicitly zero (never stored).
    """

    grid: Grid
    axis_fluxes: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.axis_fluxes) != self.grid.dim:
            raise ValueError("one flux array per axis required")
        fluxes = []
        for k, arr in enumerate(self.axis_fluxes):
            want = list(self.grid.cells)
            want[k] -= 1
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != tuple(want):
                raise ValueError(
                    f"axis {k} flux shape {arr.shape}, expected {tuple(want)}"
                )
            fluxes.append(arr)
        object.__setattr__(self, "axis_fluxes", tuple(fluxes))


# ---------------------------------------------------------------------------
# array kernels (shaped arrays in, shaped arrays out; no Field wrapping)

def laplacian_array(vals: np.ndarray, spacing) -> np.ndarray:
    # telescoped face-difference form; mirror ghosts make boundary fluxes zero
    out = np.zeros_like(vals)
    for k, h in enumerate(spacing):
        lo = [slice(None)] * vals.ndim
        hi = [slice(None)] * vals.ndim
        lo[k] = slice(None, -1)
        hi[k] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        d = (vals[hi] - vals[lo]) / (h * h)
        out[lo] += d
        out[hi] -= d
    return out


def gradient_arrays(vals: np.ndarray, spacing) -> list[np.ndarray]:
    return [np.diff(vals, axis=k) / h for k, h in enumerate(spacing)]


def divergence_arrays(fluxes, spacing, shape) -> np.ndarray:
    out = np.zeros(shape)
    for k, (g, h) in enumerate(zip(fluxes, spacing)):
        pad = [(0, 0)] * len(shape)
        pad[k] = (1, 1)
        out += np.diff(np.pad(g, pad), axis=k) / h
    return out


# ---------------------------------------------------------------------------
# public operators

def laplacian(f: Field) -> Field:
    """Second-order zero-flux Laplacian (3/5-point stencil, mirror ghosts)."""
    return Field(f.grid, laplacian_array(f.shaped(), f.grid.spacing))


def gradient_faces(f: Field) -> FaceFlux:
    """Centered normal derivative on each interior face."""
    return FaceFlux(
        f.grid, tuple(gradient_arrays(f.shaped(), f.grid.spacing))
    )


def divergence(flux: FaceFlux) -> Field:
    """Per-cell net outflux divided by cell volume (boundary faces zero)."""
    g = flux.grid
    return Field(
        g, divergence_arrays(flux.axis_fluxes, g.spacing, g.cells)
    )


def neumann_laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    """Sparse matrix form of `laplacian` (flattened ordering), for callers
    that factorize or shift the operator."""
    mats = []
    for n, h in zip(grid.cells, grid.spacing):
        main = -2.0 * np.ones(n)
        main[0] = -1.0  # mirror ghost: boundary row loses one neighbor
        main[-1] = -1.0
        off = np.ones(n - 1)
        mats.append(sp.diags([off, main, off], [-1, 0, 1]) / (h * h))
    if grid.dim == 1:
        return mats[0].tocsr()
    eye0 = sp.identity(grid.cells[0])
    eye1 = sp.identity(grid.cells[1])
    return (sp.kron(mats[0], eye1) + sp.kron(eye0, mats[1])).tocsr()


def integrate(f: Field) -> float:
    return float(np.sum(f.values) * f.grid.cell_volume)


def mean(f: Field) -> float:
    return integrate(f) / f.grid.measure


def lp_norm(f: Field, p) -> float:
    """L^p quadrature norm; p = math.inf gives the cell-wise max norm."""
    if p == math.inf:
        return float(np.max(np.abs(f.values)))
    p = float(p)
    if p < 1.0:
        raise ValueError(f"p must be >= 1 or inf, got {p}")
    s = float(np.sum(np.abs(f.values) ** p) * f.grid.cell_volume)
    return s ** (1.0 / p)


def grad_norm_arrays(fluxes, cell_volume) -> float:
    s = 0.0
    for g in fluxes:
        s += float(np.sum(g * g))
    return math.sqrt(s * cell_volume)


# ---------------------------------------------------------------------------
# serialization

def _grid_header(grid: Grid) -> str:
    lengths = ",".join(FLOAT_FMT % l for l in grid.lengths)
    cells = ",".join(str(c) for c in grid.cells)
    return f"# grid dim={grid.dim} lengths={lengths} cells={cells}"


def write_field_csv(f: Field, path) -> None:
    cols = "index," + ("x" if f.grid.dim == 1 else "x,y") + ",value"
    coords = f.grid.cell_coordinates()
    lines = [_grid_header(f.grid), cols]
    for i, v in enumerate(f.values):
        xy = ",".join(FLOAT_FMT % c[i] for c in coords)
        lines.append(f"{i},{xy},{FLOAT_FMT % v}")
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_field_csv(path) -> Field:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# grid "):
            raise ValueError(f"{path}: missing grid header line")
        meta = dict(tok.split("=", 1) for tok in header[7:].split())
        dim = int(meta["dim"])
        lengths = [float(t) for t in meta["lengths"].split(",")]
        cells = [int(t) for t in meta["cells"].split(",")]
        fh.readline()  # column names
        values = [float(line.rstrip("\n").split(",")[-1]) for line in fh if line.strip()]
    return Field(build_grid(dim, lengths, cells), np.array(values))
