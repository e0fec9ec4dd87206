"""Q1 finite elements for ``-div(K grad u) = f`` on the unit square.

The mesh is a structured ``nx x ny`` grid of rectangles. Nodes are numbered
x-fastest, ``node = j * (nx + 1) + i``; elements likewise. Local element nodes
run counter-clockwise from the lower-left corner.

The diffusion tensor is diagonal and constant per element. Dirichlet data are
eliminated symmetrically, so the assembled matrix is SPD and Dirichlet rows
are decoupled unit rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp

from .sparse import CsrMatrix

__all__ = [
    "StructuredGrid",
    "DiffusionField",
    "Dirichlet",
    "Neumann",
    "BoundarySpec",
    "FractureNetwork",
    "element_stiffness",
    "assemble_operator",
    "load_vector",
    "dirichlet_data",
    "assemble",
    "rasterize_fractures",
    "equivalent_permeability",
    "boundary_flux",
    "SIDES",
]

SIDES = ("left", "right", "bottom", "top")

BoundaryValue = Union[float, Callable[[np.ndarray, np.ndarray], np.ndarray]]

# Reference-square corners in counter-clockwise order, in [0, 1]^2.
_LOCAL_XI = np.array([0.0, 1.0, 1.0, 0.0])
_LOCAL_ETA = np.array([0.0, 0.0, 1.0, 1.0])
_GAUSS = 0.5 + np.array([-1.0, 1.0]) / (2.0 * np.sqrt(3.0))


@dataclass(frozen=True)
class StructuredGrid:
    """Uniform ``nx x ny`` element grid on ``(0, 1)^2``."""

    nx: int
    ny: int

    def __post_init__(self):
        if int(self.nx) < 1 or int(self.ny) < 1:
            raise ValueError(f"grid needs at least one element per axis, got {self.nx}x{self.ny}")

    @property
    def hx(self):
        return 1.0 / self.nx

    @property
    def hy(self):
        return 1.0 / self.ny

    @property
    def n_nodes(self):
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_elements(self):
        return self.nx * self.ny

    def node_index(self, i, j):
        return j * (self.nx + 1) + i

    def node_coordinates(self):
        """Return ``(x, y)`` arrays over all nodes."""
        i, j = np.meshgrid(np.arange(self.nx + 1), np.arange(self.ny + 1))
        return i.ravel() * self.hx, j.ravel() * self.hy

    def element_centers(self):
        i, j = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
        return (i.ravel() + 0.5) * self.hx, (j.ravel() + 0.5) * self.hy

    def element_nodes(self):
        """``(n_elements, 4)`` node indices, counter-clockwise from lower-left."""
        i, j = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
        i, j = i.ravel(), j.ravel()
        n00 = self.node_index(i, j)
        return np.stack([n00, n00 + 1, n00 + self.nx + 2, n00 + self.nx + 1], axis=1)

    def side_nodes(self, side):
        """Node indices on one side of the boundary, ordered along the side."""
        nx, ny = self.nx, self.ny
        if side == "left":
            return self.node_index(0, np.arange(ny + 1))
        if side == "right":
            return self.node_index(nx, np.arange(ny + 1))
        if side == "bottom":
            return self.node_index(np.arange(nx + 1), 0)
        if side == "top":
            return self.node_index(np.arange(nx + 1), ny)
        raise ValueError(f"unknown side {side!r}; expected one of {SIDES}")

    def coarsen(self):
        if self.nx % 2 or self.ny % 2:
            raise ValueError(f"cannot coarsen a {self.nx}x{self.ny} grid by two")
        return StructuredGrid(self.nx // 2, self.ny // 2)


@dataclass(frozen=True)
class DiffusionField:
    """Per-element diagonal diffusion tensor ``diag(kxx, kyy)``."""

    kxx: np.ndarray
    kyy: np.ndarray

    def __post_init__(self):
        kxx = np.asarray(self.kxx, dtype=float).ravel()
        kyy = np.asarray(self.kyy, dtype=float).ravel()
        if kxx.shape != kyy.shape:
            raise ValueError("kxx and kyy must have the same length")
        if np.any(kxx <= 0) or np.any(kyy <= 0):
            raise ValueError("diffusion coefficients must be positive")
        object.__setattr__(self, "kxx", kxx)
        object.__setattr__(self, "kyy", kyy)

    @classmethod
    def uniform(cls, grid, kxx=1.0, kyy=1.0):
        n = grid.n_elements
        return cls(np.full(n, float(kxx)), np.full(n, float(kyy)))

    def scaled(self, factor):
        return DiffusionField(factor * self.kxx, factor * self.kyy)


@dataclass(frozen=True)
class Dirichlet:
    """Prescribed value; a constant or a function ``g(x, y)``."""

    value: BoundaryValue = 0.0


@dataclass(frozen=True)
class Neumann:
    """Prescribed conormal flux ``(K grad u) . n``; constant or ``g(x, y)``."""

    flux: BoundaryValue = 0.0


@dataclass(frozen=True)
class BoundarySpec:
    left: Union[Dirichlet, Neumann] = field(default_factory=Dirichlet)
    right: Union[Dirichlet, Neumann] = field(default_factory=Dirichlet)
    bottom: Union[Dirichlet, Neumann] = field(default_factory=Dirichlet)
    top: Union[Dirichlet, Neumann] = field(default_factory=Dirichlet)

    def __post_init__(self):
        for side in SIDES:
            if not isinstance(getattr(self, side), (Dirichlet, Neumann)):
                raise TypeError(f"{side} condition must be Dirichlet or Neumann")
        if not any(isinstance(getattr(self, s), Dirichlet) for s in SIDES):
            raise ValueError("at least one side must be Dirichlet; the pure Neumann problem is singular")

    @classmethod
    def all_dirichlet(cls, value=0.0):
        d = Dirichlet(value)
        return cls(d, d, d, d)


@dataclass(frozen=True)
class FractureNetwork:
    """Straight fracture segments of uniform thickness in the unit square."""

    segments: np.ndarray
    delta: float = 1e-4
    k_f: float = 1e4
    k_m: float = 1.0

    def __post_init__(self):
        seg = np.asarray(self.segments, dtype=float).reshape(-1, 4)
        if seg.size and (seg.min() < 0.0 or seg.max() > 1.0):
            raise ValueError("fracture endpoints must lie in [0, 1]^2")
        if self.delta <= 0 or self.k_f <= 0 or self.k_m <= 0:
            raise ValueError("delta, k_f and k_m must be positive")
        object.__setattr__(self, "segments", seg)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            raw = json.load(fh)
        return cls(
            segments=raw.get("segments", []),
            delta=raw.get("delta", 1e-4),
            k_f=raw.get("k_f", 1e4),
            k_m=raw.get("k_m", 1.0),
        )

    @classmethod
    def default(cls):
        """The network shipped with the package."""
        ref = resources.files("mgmpcg") / "data" / "fracture_network.json"
        with resources.as_file(ref) as path:
            return cls.from_json(path)

    def to_json(self, path):
        payload = {
            "k_m": self.k_m,
            "k_f": self.k_f,
            "delta": self.delta,
            "segments": self.segments.tolist(),
        }
        Path(path).write_text(json.dumps(payload, indent=2))

    def with_params(self, **kw):
        params = dict(segments=self.segments, delta=self.delta, k_f=self.k_f, k_m=self.k_m)
        params.update(kw)
        return FractureNetwork(**params)


def _directional_stiffness(hx, hy):
    """Element matrices of ``int dphi_a/dx dphi_b/dx`` and the y analogue.

    2x2 Gauss-Legendre is exact for the bilinear shape-function gradients.
    """
    sx = np.zeros((4, 4))
    sy = np.zeros((4, 4))
    sgn_xi = 2.0 * _LOCAL_XI - 1.0
    sgn_eta = 2.0 * _LOCAL_ETA - 1.0
    for xi in _GAUSS:
        for eta in _GAUSS:
            # phi_a = (1 - xi + s_a xi ...) on [0,1]^2; derivatives in reference coords.
            fx = np.where(_LOCAL_ETA > 0, eta, 1.0 - eta)
            fy = np.where(_LOCAL_XI > 0, xi, 1.0 - xi)
            dphi_dx = sgn_xi * fx / hx
            dphi_dy = sgn_eta * fy / hy
            w = 0.25 * hx * hy
            sx += w * np.outer(dphi_dx, dphi_dx)
            sy += w * np.outer(dphi_dy, dphi_dy)
    return sx, sy


def element_stiffness(kxx, kyy, hx, hy):
    """Q1 stiffness matrix of one ``hx x hy`` element with ``K = diag(kxx, kyy)``."""
    if min(kxx, kyy, hx, hy) <= 0:
        raise ValueError("element_stiffness needs positive coefficients and sizes")
    sx, sy = _directional_stiffness(hx, hy)
    return kxx * sx + kyy * sy


def assemble_operator(grid, coeff):
    """Stiffness matrix before boundary conditions (pure Neumann operator)."""
    if coeff.kxx.size != grid.n_elements:
        raise ValueError(
            f"diffusion field has {coeff.kxx.size} elements, grid has {grid.n_elements}"
        )
    sx, sy = _directional_stiffness(grid.hx, grid.hy)
    conn = grid.element_nodes()
    local = coeff.kxx[:, None, None] * sx + coeff.kyy[:, None, None] * sy
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    n = grid.n_nodes
    A = CsrMatrix.from_coo(rows, cols, local.ravel(), (n, n))
    # Scatter order can leave last-bit asymmetry; fold it away.
    S = A.to_scipy()
    return CsrMatrix.from_scipy(0.5 * (S + S.T), symmetric=True)


def load_vector(grid, f=0.0):
    """Consistent load for a source that is constant on each element."""
    f = np.broadcast_to(np.asarray(f, dtype=float), (grid.n_elements,))
    conn = grid.element_nodes()
    contrib = np.repeat(0.25 * grid.hx * grid.hy * f[:, None], 4, axis=1)
    return np.bincount(conn.ravel(), weights=contrib.ravel(), minlength=grid.n_nodes)


def _eval(value, x, y):
    if callable(value):
        return np.broadcast_to(np.asarray(value(x, y), dtype=float), x.shape).copy()
    return np.full(x.shape, float(value))


def _neumann_load(grid, bc):
    b = np.zeros(grid.n_nodes)
    x, y = grid.node_coordinates()
    for side in SIDES:
        cond = getattr(bc, side)
        if not isinstance(cond, Neumann):
            continue
        nodes = grid.side_nodes(side)
        g = _eval(cond.flux, x[nodes], y[nodes])
        h = grid.hy if side in ("left", "right") else grid.hx
        # Trapezoidal rule per boundary edge.
        np.add.at(b, nodes[:-1], 0.5 * h * g[:-1])
        np.add.at(b, nodes[1:], 0.5 * h * g[1:])
    return b


def dirichlet_data(grid, bc):
    """Boolean mask of Dirichlet nodes and their prescribed values.

    A corner takes the condition of the first Dirichlet side in
    ``left, right, bottom, top`` order.
    """
    mask = np.zeros(grid.n_nodes, dtype=bool)
    values = np.zeros(grid.n_nodes)
    x, y = grid.node_coordinates()
    for side in reversed(SIDES):
        cond = getattr(bc, side)
        if isinstance(cond, Dirichlet):
            nodes = grid.side_nodes(side)
            mask[nodes] = True
            values[nodes] = _eval(cond.value, x[nodes], y[nodes])
    return mask, values


def assemble(grid, coeff, bc, f=0.0):
    """Assemble the SPD system ``A x = b``.

    Parameters
    ----------
    grid : StructuredGrid
    coeff : DiffusionField
    bc : BoundarySpec
    f : float or array_like
        Source, constant per element.

    Returns
    -------
    A : CsrMatrix
        Symmetric positive definite; Dirichlet rows and columns are unit rows.
    b : ndarray
    """
    K = assemble_operator(grid, coeff).to_scipy()
    b = load_vector(grid, f) + _neumann_load(grid, bc)
    mask, values = dirichlet_data(grid, bc)

    ud = np.where(mask, values, 0.0)
    b = b - K @ ud
    b[mask] = values[mask]

    keep = (~mask).astype(float)
    K = K.tocoo()
    w = keep[K.row] * keep[K.col]
    w[(K.row == K.col) & mask[K.row]] = 0.0
    data = K.data * w
    data = np.concatenate([data, np.ones(mask.sum())])
    rows = np.concatenate([K.row, np.flatnonzero(mask)])
    cols = np.concatenate([K.col, np.flatnonzero(mask)])
    out = sp.csr_matrix((data, (rows, cols)), shape=K.shape)
    out.eliminate_zeros()
    return CsrMatrix.from_scipy(out, symmetric=True), b


def boundary_flux(grid, coeff, bc, u, f=0.0, side="right"):
    """Outward flux of ``-K grad u`` through one Dirichlet side.

    Computed from nodal reactions of the unconstrained operator, which is the
    conservative flux for the discrete solution.
    """
    if not isinstance(getattr(bc, side), Dirichlet):
        raise ValueError(f"flux by reactions needs a Dirichlet side, {side!r} is Neumann")
    K = assemble_operator(grid, coeff)
    reaction = K @ np.asarray(u, dtype=float) - load_vector(grid, f) - _neumann_load(grid, bc)
    mask, _ = dirichlet_data(grid, bc)
    nodes = grid.side_nodes(side)
    return -float(reaction[nodes[mask[nodes]]].sum())


def _point_segment_distance(px, py, seg):
    x1, y1, x2, y2 = seg
    dx, dy = x2 - x1, y2 - y1
    length2 = dx * dx + dy * dy
    if length2 == 0.0:
        return np.hypot(px - x1, py - y1)
    t = np.clip(((px - x1) * dx + (py - y1) * dy) / length2, 0.0, 1.0)
    return np.hypot(px - (x1 + t * dx), py - (y1 + t * dy))


def equivalent_permeability(net, width):
    """Isotropic permeability of a ``width``-wide cell band holding one fracture.

    Conducting fractures (``k_f >= k_m``) keep their along-fracture
    transmissivity (arithmetic average); blocking fractures keep their
    across-fracture resistance (harmonic average). Returns ``k_f`` when the
    fracture is at least as wide as the band.
    """
    d = min(net.delta, width)
    if net.k_f >= net.k_m:
        return (d * net.k_f + (width - d) * net.k_m) / width
    return width / (d / net.k_f + (width - d) / net.k_m)


RASTER_MODES = ("center", "band", "upscaled")


def rasterize_fractures(grid, net, mode="center"):
    """Per-element permeability of a fracture network.

    Parameters
    ----------
    grid : StructuredGrid
    net : FractureNetwork
    mode : {"center", "band", "upscaled"}
        ``"center"`` marks elements whose center lies within ``delta / 2`` of a
        segment and gives them ``k_f``. ``"band"`` widens the half-width to at
        least ``sqrt(2)/2`` of the element size, so every element a segment
        passes through is marked. ``"upscaled"`` uses the same band but assigns
        the equivalent permeability of a ``delta``-thin fracture inside it,
        which is what keeps the flow physics when ``delta`` is below the mesh
        size.

    Returns
    -------
    DiffusionField
        Isotropic field, ``k_m`` outside the fractures.
    """
    if mode not in RASTER_MODES:
        raise ValueError(f"unknown rasterization mode {mode!r}; expected one of {RASTER_MODES}")
    cx, cy = grid.element_centers()
    half = 0.5 * net.delta
    k_in = net.k_f
    if mode != "center":
        half = max(half, np.sqrt(0.5) * max(grid.hx, grid.hy))
        if mode == "upscaled":
            k_in = equivalent_permeability(net, 2.0 * half)
    inside = np.zeros(grid.n_elements, dtype=bool)
    for seg in net.segments:
        inside |= _point_segment_distance(cx, cy, seg) <= half
    k = np.where(inside, k_in, net.k_m)
    return DiffusionField(k, k.copy())
