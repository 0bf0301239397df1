"""
Horizontal test vector fields for inner variations.

Every field here is a cubic B-spline bump times a boundary-direction unit
vector, so X_{n+1} = 0 everywhere and DX is available in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .geometry import Grid


def bspline(t):
    """Cubic B-spline, support [-2, 2], peak 2/3 at 0."""
    a = np.abs(np.asarray(t, dtype=float))
    inner = (4.0 - 6.0 * a**2 + 3.0 * a**3) / 6.0
    outer = (2.0 - a) ** 3 / 6.0
    return np.where(a <= 1.0, inner, np.where(a < 2.0, outer, 0.0))


def bspline_derivative(t):
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    inner = -2.0 * t + 1.5 * t * a
    outer = -np.sign(t) * (2.0 - a) ** 2 / 2.0
    return np.where(a <= 1.0, inner, np.where(a < 2.0, outer, 0.0))


@dataclass(frozen=True)
class TestField:
    """X(y) = amplitude * phi(y) * e_direction with phi a tensor B-spline bump.

    ``center`` has n face coordinates; the vertical factor is centred on the
    reaction face so the field is non-zero there.
    """

    __test__ = False  # not a pytest class

    center: tuple[float, ...]
    scale: float
    direction: int
    amplitude: float = 1.0

    @property
    def n(self) -> int:
        return len(self.center)

    def _factors(self, coords: Sequence[NDArray]):
        offsets = [(x - c) / self.scale for x, c in zip(coords[:-1], self.center)]
        offsets.append(coords[-1] / self.scale)
        return [bspline(t) for t in offsets], [bspline_derivative(t) / self.scale for t in offsets]

    def value(self, coords: Sequence[NDArray]) -> NDArray:
        """X at the given coordinate arrays, shape ``(n+1,) + coords[0].shape``."""
        vals, _ = self._factors(coords)
        phi = self.amplitude * np.prod(vals, axis=0)
        out = np.zeros((self.n + 1,) + np.shape(coords[0]))
        out[self.direction] = phi
        return out

    def jacobian(self, coords: Sequence[NDArray]) -> NDArray:
        """DX[i, j] = dX^i / dy_j, shape ``(n+1, n+1) + coords[0].shape``."""
        vals, ders = self._factors(coords)
        out = np.zeros((self.n + 1, self.n + 1) + np.shape(coords[0]))
        for j in range(self.n + 1):
            prod = ders[j]
            for k in range(self.n + 1):
                if k != j:
                    prod = prod * vals[k]
            out[self.direction, j] = self.amplitude * prod
        return out

    def divergence(self, coords: Sequence[NDArray]) -> NDArray:
        jac = self.jacobian(coords)
        return np.trace(jac, axis1=0, axis2=1)

    def c1_norm(self) -> float:
        """sup|X| + sup|DX|_F, evaluated on a dense sample of the support."""
        m = 161 if self.n == 1 else 81
        t = np.linspace(-2.0, 2.0, m)
        lateral = [c + self.scale * t for c in self.center]
        vertical = self.scale * t[t >= 0]
        coords = np.meshgrid(*lateral, vertical, indexing="ij")
        sup_x = float(np.max(np.abs(self.value(coords))))
        jac = self.jacobian(coords)
        sup_dx = float(np.max(np.sqrt(np.sum(jac**2, axis=(0, 1)))))
        return sup_x + sup_dx

    def normalized(self) -> TestField:
        return TestField(self.center, self.scale, self.direction, self.amplitude / self.c1_norm())

    def support_distance(self, points) -> float:
        """Distance from face points (m, n) to the lateral support box of the field."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.size == 0:
            return float("inf")
        gap = np.maximum(np.abs(pts - np.asarray(self.center)) - 2 * self.scale, 0.0)
        return float(np.min(np.sqrt(np.sum(gap**2, axis=-1))))

    def check(self, grid: Grid) -> None:
        """Verify tangency on the face and vanishing on Dirichlet nodes."""
        if len(self.center) != grid.n:
            raise ValueError(f"field center has {len(self.center)} coordinates, grid has n={grid.n}")
        vals = self.value(grid.coords)
        if np.any(vals[-1][..., 0] != 0.0):
            raise ValueError("test field must satisfy X_{n+1} = 0 on the reaction face")
        if np.any(vals[:, grid.dirichlet_mask] != 0.0):
            raise ValueError("test field support reaches a Dirichlet face")


def bump_battery(
    grid: Grid,
    scales: Sequence[float],
    centers: Sequence[Sequence[float]] | None = None,
    normalize: bool = True,
) -> list[TestField]:
    """Bumps at every (center, scale) along every boundary direction.

    Raises ValueError if any support would touch a Dirichlet face.
    """
    if centers is None:
        centers = [(0.0,) * grid.n]
    fields = []
    for c in centers:
        c = tuple(float(v) for v in np.atleast_1d(c))
        for s in scales:
            s = float(s)
            for axis, w in enumerate(grid.spec.half_widths):
                if abs(c[axis]) + 2 * s >= w:
                    raise ValueError(f"bump at {c} with scale {s} reaches the lateral face on axis {axis}")
            if 2 * s >= grid.spec.height:
                raise ValueError(f"bump scale {s} reaches the top face")
            for k in range(grid.n):
                X = TestField(c, s, k)
                fields.append(X.normalized() if normalize else X)
    return fields
