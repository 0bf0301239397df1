"""
Energy, energy measure, scaled energy and the monotonicity identity.

All integrals are node quadratures: a node contributes its dual-cell volume
(halved on box faces) when it lies in the region, and face integrals use the
dual-cell area of the x_{n+1} = 0 plane.  Gradients come from
``geometry.gradient``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .geometry import (
    Disc,
    Grid,
    HalfAnnulus,
    HalfBall,
    Region,
    RegionKind,
    WholeDomain,
    gradient,
    max_admissible_radius,
    region_weights,
)
from .potentials import potential_value
from .solver import Solution
from .vector_fields import TestField


@dataclass(frozen=True)
class EnergyBreakdown:
    dirichlet: float
    potential: float

    @property
    def total(self) -> float:
        return self.dirichlet + self.potential


@dataclass(frozen=True)
class EnergyMeasure:
    """Cell masses 1/2|grad u|^2 dV in the bulk and W(u)/eps dA on the face."""

    grid: Grid
    epsilon: float
    grad: NDArray = field(repr=False)
    interior: NDArray = field(repr=False)
    face: NDArray = field(repr=False)

    @property
    def total(self) -> float:
        return float(self.interior.sum() + self.face.sum())

    def energy(self, region: Region | RegionKind) -> EnergyBreakdown:
        if not isinstance(region, Region):
            region = region_weights(self.grid, region)
        if isinstance(region.kind, Disc):
            dirichlet = 0.0
        else:
            dirichlet = float(np.sum(region.weights * self.interior))
        potential = float(np.sum(region.face_weights * self.face))
        return EnergyBreakdown(dirichlet, potential)

    def mass(self, region: Region | RegionKind) -> float:
        return self.energy(region).total


def energy_measure(sol: Solution) -> EnergyMeasure:
    grid = sol.grid
    grad = gradient(sol.u, grid)
    density = 0.5 * np.sum(grad**2, axis=0)
    face = potential_value(sol.potential, sol.u[..., 0]) / sol.epsilon * grid.face_area
    return EnergyMeasure(grid, sol.epsilon, grad, density * grid.cell_volume, face)


def energy(sol: Solution | EnergyMeasure, region: Region | RegionKind | None = None) -> EnergyBreakdown:
    """E_eps restricted to a region (whole domain by default)."""
    measure = sol if isinstance(sol, EnergyMeasure) else energy_measure(sol)
    return measure.energy(region if region is not None else WholeDomain())


def scaled_energy(sol: Solution | EnergyMeasure, x, r: float) -> float:
    """I(r, x) = r^{1-n} E(u, B_r^+(x))."""
    measure = sol if isinstance(sol, EnergyMeasure) else energy_measure(sol)
    n = measure.grid.n
    return r ** (1 - n) * measure.mass(HalfBall(tuple(np.atleast_1d(x)), r))


@dataclass(frozen=True)
class ScaledEnergyProfile:
    """I(r) at increasing radii plus the two cumulative right-hand-side terms.

    ``term_sphere[k]`` and ``term_disc[k]`` integrate from ``radii[0]`` to
    ``radii[k]`` (both are zero at k = 0).
    """

    center: tuple[float, ...]
    radii: NDArray
    I: NDArray
    term_sphere: NDArray
    term_disc: NDArray

    @property
    def increments(self) -> NDArray:
        return self.I - self.I[0]

    @property
    def identity_defect(self) -> NDArray:
        """I(r_k) - I(r_0) - term_sphere - term_disc; vanishes for exact solutions."""
        return self.increments - self.term_sphere - self.term_disc

    def relative_identity_error(self) -> NDArray:
        inc = self.increments[1:]
        return np.abs(self.identity_defect[1:]) / np.maximum(np.abs(inc), 1e-300)

    def max_violation(self) -> float:
        """Largest decrease of I between consecutive radii (0 if monotone)."""
        return float(max(0.0, -np.min(np.diff(self.I)))) if len(self.I) > 1 else 0.0


def monotonicity_profile(sol: Solution | EnergyMeasure, x, radii: Sequence[float]) -> ScaledEnergyProfile:
    """Scaled energies and both sides of the monotonicity identity.

    The sphere term is evaluated in its coarea form, as the half-annulus
    integral of |y - x|^{-(n+1)} ((y - x) . grad u)^2.  The disc term
    integral over r of r^{-n} int_{D_r} W/eps is evaluated exactly in r by
    exchanging the order of integration.
    """
    measure = sol if isinstance(sol, EnergyMeasure) else energy_measure(sol)
    grid = measure.grid
    n = grid.n
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or radii.size == 0:
        raise ValueError("radii must be a non-empty 1D sequence")
    if np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be strictly increasing")
    if radii[0] <= 0:
        raise ValueError("radii must be positive")
    center = tuple(float(v) for v in np.atleast_1d(x))
    limit = max_admissible_radius(grid, center)
    if radii[-1] > limit + 1e-12:
        raise ValueError(f"radius {radii[-1]} exceeds the distance {limit} to the Dirichlet faces")

    I = np.array([scaled_energy(measure, center, r) for r in radii])

    offset = [c - xc for c, xc in zip(grid.coords[:-1], center)] + [grid.coords[-1]]
    dist = np.sqrt(sum(o**2 for o in offset))
    radial = sum(o * g for o, g in zip(offset, measure.grad))
    with np.errstate(divide="ignore", invalid="ignore"):
        sphere_density = np.where(dist > 0, radial**2 / dist ** (n + 1), 0.0) * grid.cell_volume

    rho = dist[..., 0]
    r0 = radii[0]
    term_sphere = np.zeros_like(radii)
    term_disc = np.zeros_like(radii)
    for k, r in enumerate(radii[1:], start=1):
        w = region_weights(grid, HalfAnnulus(center, r0, r)).weights
        term_sphere[k] = float(np.sum(w * sphere_density))
        lower = np.maximum(rho, r0)
        if n == 1:
            kernel = np.log(r / lower)
        else:
            kernel = 1.0 / lower - 1.0 / r
        kernel = np.where(rho < r, kernel, 0.0)
        term_disc[k] = float(np.sum(kernel * measure.face))
    return ScaledEnergyProfile(center, radii, I, term_sphere, term_disc)


def inner_variation_residual(sol: Solution, X: TestField) -> float:
    """int (1/2|grad u|^2 div X - DX<grad u, grad u>) + (1/eps) int_face W(u) div' X.

    Zero for exact critical points and every admissible (tangential) X.
    """
    measure = energy_measure(sol)
    grid = sol.grid
    X.check(grid)
    return _inner_variation(measure, X, sol)


def _inner_variation(measure: EnergyMeasure, X: TestField, sol: Solution) -> float:
    grid = measure.grid
    jac = X.jacobian(grid.coords)
    grad = measure.grad
    div = np.trace(jac, axis1=0, axis2=1)
    quad = np.einsum("ij...,i...,j...->...", jac, grad, grad)
    bulk = float(np.sum((0.5 * np.sum(grad**2, axis=0) * div - quad) * grid.cell_volume))
    return bulk + boundary_variation(sol, X)


def boundary_variation(sol: Solution, X: TestField) -> float:
    """(1/eps) int_face W(u) div_{R^n} X dH^n."""
    grid = sol.grid
    face_coords = [c[..., :1] for c in grid.coords]
    jac = X.jacobian(face_coords)[..., 0]
    div_face = sum(jac[i, i] for i in range(grid.n))
    W = potential_value(sol.potential, sol.u[..., 0])
    return float(np.sum(W * div_face * grid.face_area)) / sol.epsilon
