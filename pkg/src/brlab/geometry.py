"""
Half-slab grids and quadrature regions.

The computational domain is the box

    [-L_1, L_1] x ... x [-L_n, L_n] x [0, H]

in R^{n+1} (n = 1 or 2).  The last axis is the vertical direction x_{n+1};
the plane x_{n+1} = 0 carries the reaction condition and every other face of
the box carries Dirichlet data.

Fields are plain numpy arrays of shape ``grid.shape`` with the vertical axis
last.  Regions (half-balls, boundary discs, half-annuli, interior balls) are
node weight maps over the same shape, used as quadrature supports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np
from numpy.typing import NDArray

INTERIOR = 0
REACTION_FACE = 1
DIRICHLET = 2

MIN_NODES_PER_AXIS = 3

# relative slack (in units of h) for "node lies exactly on the region boundary"
_TIE_TOL = 1e-9


class RegionError(ValueError):
    """Region does not fit inside the grid box."""


@dataclass(frozen=True)
class GridSpec:
    n: int
    h: float
    half_widths: tuple[float, ...]
    height: float

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError(f"boundary dimension n must be 1 or 2, got {self.n}")
        if not (math.isfinite(self.h) and self.h > 0):
            raise ValueError(f"grid spacing h must be positive, got {self.h}")
        widths = tuple(float(w) for w in self.half_widths)
        if len(widths) != self.n:
            raise ValueError(f"expected {self.n} half widths, got {len(widths)}")
        object.__setattr__(self, "half_widths", widths)
        if any(not (w > 0) for w in widths) or not (self.height > 0):
            raise ValueError("all extents must be positive")

    @classmethod
    def square(cls, n: int, h: float, half_width: float = 1.0, height: float = 1.0) -> GridSpec:
        return cls(n=n, h=h, half_widths=(half_width,) * n, height=height)

    @property
    def shape(self) -> tuple[int, ...]:
        lateral = tuple(int(round(2 * w / self.h)) + 1 for w in self.half_widths)
        return lateral + (int(round(self.height / self.h)) + 1,)


@dataclass(frozen=True)
class Grid:
    spec: GridSpec
    kind: NDArray[np.int8] = field(repr=False)

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def h(self) -> float:
        return self.spec.h

    @property
    def shape(self) -> tuple[int, ...]:
        return self.kind.shape

    @property
    def size(self) -> int:
        return self.kind.size

    @cached_property
    def axes(self) -> tuple[NDArray, ...]:
        """1D node coordinates per axis (lateral axes first, vertical last)."""
        h = self.h
        lateral = tuple(-w + h * np.arange(m) for w, m in zip(self.spec.half_widths, self.shape[:-1]))
        return lateral + (h * np.arange(self.shape[-1]),)

    @cached_property
    def coords(self) -> tuple[NDArray, ...]:
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @property
    def face_coords(self) -> tuple[NDArray, ...]:
        """Coordinates of the x_{n+1} = 0 row, shape ``shape[:-1]``."""
        return tuple(c[..., 0] for c in self.coords[:-1])

    @property
    def interior_mask(self) -> NDArray[np.bool_]:
        return self.kind == INTERIOR

    @property
    def face_mask(self) -> NDArray[np.bool_]:
        return self.kind == REACTION_FACE

    @property
    def dirichlet_mask(self) -> NDArray[np.bool_]:
        return self.kind == DIRICHLET

    @cached_property
    def cell_volume(self) -> NDArray:
        """Volume of each node's dual cell clipped to the box (half at faces)."""
        vol = np.ones(self.shape)
        for axis, m in enumerate(self.shape):
            w = np.full(m, self.h)
            w[0] = w[-1] = 0.5 * self.h
            vol = vol * w.reshape([-1 if a == axis else 1 for a in range(len(self.shape))])
        return vol

    @cached_property
    def face_area(self) -> NDArray:
        """Area of each dual cell of the x_{n+1} = 0 plane, shape ``shape[:-1]``."""
        area = np.ones(self.shape[:-1])
        for axis, m in enumerate(self.shape[:-1]):
            w = np.full(m, self.h)
            w[0] = w[-1] = 0.5 * self.h
            area = area * w.reshape([-1 if a == axis else 1 for a in range(self.n)])
        return area

    def counts(self) -> dict[str, int]:
        return {
            "interior": int(np.count_nonzero(self.kind == INTERIOR)),
            "reaction_face": int(np.count_nonzero(self.kind == REACTION_FACE)),
            "dirichlet": int(np.count_nonzero(self.kind == DIRICHLET)),
        }


def build_grid(spec: GridSpec) -> Grid:
    """Classify every node of the half-slab as interior, reaction face or Dirichlet."""
    shape = spec.shape
    for axis, (m, extent) in enumerate(zip(shape, [2 * w for w in spec.half_widths] + [spec.height])):
        if m < MIN_NODES_PER_AXIS:
            raise ValueError(
                f"grid too coarse: axis {axis} has {m} nodes, need at least {MIN_NODES_PER_AXIS}"
            )
        if abs((m - 1) * spec.h - extent) > 1e-9 * max(extent, 1.0):
            raise ValueError(f"axis {axis}: extent {extent} is not a multiple of h={spec.h}")

    kind = np.full(shape, INTERIOR, dtype=np.int8)
    for axis in range(spec.n):
        idx = [slice(None)] * len(shape)
        idx[axis] = 0
        kind[tuple(idx)] = DIRICHLET
        idx[axis] = -1
        kind[tuple(idx)] = DIRICHLET
    kind[..., -1] = DIRICHLET
    bottom = kind[..., 0]
    bottom[bottom == INTERIOR] = REACTION_FACE
    return Grid(spec=spec, kind=kind)


# --- regions -----------------------------------------------------------------


@dataclass(frozen=True)
class HalfBall:
    """B_r^+(x) with x on the reaction face; ``center`` has n coordinates."""

    center: tuple[float, ...]
    radius: float


@dataclass(frozen=True)
class Disc:
    """D_r(x), the flat part of a half-ball."""

    center: tuple[float, ...]
    radius: float


@dataclass(frozen=True)
class HalfAnnulus:
    center: tuple[float, ...]
    r_inner: float
    r_outer: float


@dataclass(frozen=True)
class Ball:
    """Full ball B_r(x) in the open half-slab; ``center`` has n+1 coordinates."""

    center: tuple[float, ...]
    radius: float


@dataclass(frozen=True)
class WholeDomain:
    pass


RegionKind = Union[HalfBall, Disc, HalfAnnulus, Ball, WholeDomain]


@dataclass(frozen=True)
class Region:
    kind: RegionKind
    weights: NDArray = field(repr=False)

    @property
    def face_weights(self) -> NDArray:
        return self.weights[..., 0]

    def measure(self, grid: Grid) -> float:
        """Volume of the region, or boundary area for a Disc."""
        if isinstance(self.kind, Disc):
            return float(np.sum(self.face_weights * grid.face_area))
        return float(np.sum(self.weights * grid.cell_volume))


def _inclusion(dist: NDArray, radius: float, h: float) -> NDArray:
    # nodes exactly on the sphere count half, so grid-aligned radii integrate exactly
    tol = _TIE_TOL * h
    w = (dist < radius - tol).astype(float)
    w[np.abs(dist - radius) <= tol] = 0.5
    return w


def _face_center(grid: Grid, center) -> tuple[float, ...]:
    c = tuple(float(v) for v in np.atleast_1d(center))
    if len(c) == grid.n + 1:
        if abs(c[-1]) > _TIE_TOL * grid.h:
            raise RegionError(f"center {c} is not on the reaction face")
        c = c[:-1]
    if len(c) != grid.n:
        raise RegionError(f"center needs {grid.n} face coordinates, got {len(c)}")
    return c


def _check_fits(grid: Grid, center: tuple[float, ...], radius: float) -> None:
    slack = _TIE_TOL * grid.h
    if not radius > 0:
        raise RegionError(f"radius must be positive, got {radius}")
    for axis, (c, w) in enumerate(zip(center, grid.spec.half_widths)):
        if abs(c) + radius > w + slack:
            raise RegionError(
                f"region extends outside grid along axis {axis}: |{c}| + {radius} > {w}"
            )
    if radius > grid.spec.height + slack:
        raise RegionError(f"region extends above grid top: radius {radius} > height {grid.spec.height}")


def _distance(grid: Grid, center: tuple[float, ...]) -> NDArray:
    """Distance from a face point to every node."""
    d2 = grid.coords[-1] ** 2
    for c, x in zip(center, grid.coords[:-1]):
        d2 = d2 + (x - c) ** 2
    return np.sqrt(d2)


def max_admissible_radius(grid: Grid, center) -> float:
    """Distance from a face point to the nearest Dirichlet face."""
    c = _face_center(grid, center)
    return min([w - abs(x) for x, w in zip(c, grid.spec.half_widths)] + [grid.spec.height])


def region_weights(grid: Grid, region: RegionKind) -> Region:
    """Node weight map for a region; raises RegionError if it leaves the grid box."""
    h = grid.h
    if isinstance(region, WholeDomain):
        return Region(region, np.ones(grid.shape))

    if isinstance(region, Ball):
        c = tuple(float(v) for v in region.center)
        if len(c) != grid.n + 1:
            raise RegionError(f"Ball center needs {grid.n + 1} coordinates, got {len(c)}")
        _check_fits(grid, c[:-1], region.radius)
        if c[-1] - region.radius <= 0:
            raise RegionError(
                f"ball reaches the reaction face: height {c[-1]} <= radius {region.radius}"
            )
        if c[-1] + region.radius > grid.spec.height + _TIE_TOL * h:
            raise RegionError(f"ball extends above grid top: {c[-1]} + {region.radius}")
        d2 = sum((x - ci) ** 2 for x, ci in zip(grid.coords, c))
        return Region(region, _inclusion(np.sqrt(d2), region.radius, h))

    center = _face_center(grid, region.center)
    if isinstance(region, HalfAnnulus):
        if not 0 < region.r_inner < region.r_outer:
            raise RegionError(f"need 0 < r_inner < r_outer, got {region.r_inner}, {region.r_outer}")
        _check_fits(grid, center, region.r_outer)
        dist = _distance(grid, center)
        w = _inclusion(dist, region.r_outer, h) - _inclusion(dist, region.r_inner, h)
        return Region(HalfAnnulus(center, region.r_inner, region.r_outer), w)

    _check_fits(grid, center, region.radius)
    dist = _distance(grid, center)
    if isinstance(region, HalfBall):
        return Region(HalfBall(center, region.radius), _inclusion(dist, region.radius, h))
    if isinstance(region, Disc):
        w = np.zeros(grid.shape)
        w[..., 0] = _inclusion(dist[..., 0], region.radius, h)
        return Region(Disc(center, region.radius), w)
    raise TypeError(f"unknown region descriptor {region!r}")


def boundary_normal_derivative(u: NDArray, grid: Grid) -> NDArray:
    """du/dnu = -du/dx_{n+1} on the x_{n+1} = 0 row, one-sided second order."""
    dy = (-3.0 * u[..., 0] + 4.0 * u[..., 1] - u[..., 2]) / (2.0 * grid.h)
    return -dy


def gradient(u: NDArray, grid: Grid) -> NDArray:
    """Nodal gradient, shape ``(n+1,) + grid.shape``.

    Centered in the interior, second-order one-sided on every face of the box
    (which on the reaction face is the (-3, 4, -1) stencil).
    """
    return np.stack(np.gradient(u, grid.h, edge_order=2))
