"""
Discrete generalized varifolds built from stress-energy tensors.

Each grid cell with non-negligible gradient contributes a sample with weight
1/2|grad u|^2 dV and matrix T = I - 2 nu nu^T, nu = grad u / |grad u|.  T has
trace n-1 and eigenvalues {-1, +1, ..., +1}, so it lies in

    A_{n-1, n+1} = {A symmetric : tr A = n-1, -(n+1) I <= A <= I}.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from .concentration import ConcentrationReport, EpsFamily, LimitField, limit_field
from .energy import boundary_variation, energy, energy_measure
from .geometry import RegionKind, gradient, region_weights
from .solver import Solution
from .vector_fields import TestField

ZERO_GRADIENT_THRESHOLD = 1e-10
SYMMETRY_TOL = 1e-12
MEMBERSHIP_TOL = 1e-9


def stress_tensor(grad, threshold: float = 0.0) -> NDArray:
    """I - 2 nu nu^T for grad != 0, the zero matrix when |grad| <= threshold."""
    g = np.asarray(grad, dtype=float)
    norm = float(np.linalg.norm(g))
    d = g.size
    if norm <= threshold or norm == 0.0:
        return np.zeros((d, d))
    nu = g / norm
    return np.eye(d) - 2.0 * np.outer(nu, nu)


def a_membership(A, k: int) -> bool:
    """Is A in A_{k, m} (m = size of A)?  Raises ValueError if A is not symmetric."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.max(np.abs(A - A.T)) > SYMMETRY_TOL * scale:
        raise ValueError("matrix is not symmetric")
    m = A.shape[0]
    if abs(np.trace(A) - k) > MEMBERSHIP_TOL:
        return False
    eig = np.linalg.eigvalsh(0.5 * (A + A.T))
    return bool(eig.min() >= -m - MEMBERSHIP_TOL and eig.max() <= 1 + MEMBERSHIP_TOL)


@dataclass(frozen=True)
class GeneralizedVarifold:
    n: int
    locations: NDArray = field(repr=False)   # (N, n+1)
    weights: NDArray = field(repr=False)     # (N,)
    tensors: NDArray = field(repr=False)     # (N, n+1, n+1)
    source: Optional[Solution] = field(default=None, repr=False, compare=False)

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    def __len__(self) -> int:
        return len(self.weights)

    def restrict(self, region: RegionKind) -> GeneralizedVarifold:
        """Samples at nodes inside the region, weights scaled by the node weight."""
        if self.source is None:
            raise ValueError("restriction needs the generating solution")
        grid = self.source.grid
        w = region_weights(grid, region).weights
        idx = np.round(self.locations / grid.h).astype(int)
        idx[:, :-1] += np.round(np.array(grid.spec.half_widths) / grid.h).astype(int)
        node_w = w[tuple(idx.T)]
        keep = node_w > 0
        return GeneralizedVarifold(
            self.n, self.locations[keep], self.weights[keep] * node_w[keep], self.tensors[keep], self.source
        )


def build_varifold(sol: Solution, threshold: float = ZERO_GRADIENT_THRESHOLD) -> GeneralizedVarifold:
    """One sample per node whose |grad u| exceeds threshold * max |grad u|."""
    grid = sol.grid
    grad = gradient(sol.u, grid)
    norm = np.sqrt(np.sum(grad**2, axis=0))
    peak = float(norm.max())
    d = grid.n + 1
    if peak == 0.0:
        return GeneralizedVarifold(grid.n, np.zeros((0, d)), np.zeros(0), np.zeros((0, d, d)), sol)
    keep = norm > threshold * peak
    g = grad[:, keep].T
    nu = g / norm[keep][:, None]
    T = np.eye(d)[None] - 2.0 * nu[:, :, None] * nu[:, None, :]
    weights = (0.5 * norm**2 * grid.cell_volume)[keep]
    locations = np.stack([c[keep] for c in grid.coords], axis=-1)
    return GeneralizedVarifold(grid.n, locations, weights, T, sol)


@dataclass(frozen=True)
class AlgebraReport:
    samples: int
    trace_ok: int        # |tr T - (n-1)| <= 1e-12
    membership_ok: int   # T in A_{n-1, n+1}
    spectral_ok: int     # eigenvalues {-1, +1, ..., +1} to 1e-9
    max_trace_error: float
    mass_error: float    # |mass - Dirichlet energy| / Dirichlet energy

    @property
    def all_ok(self) -> bool:
        s = self.samples
        return self.trace_ok == s and self.membership_ok == s and self.spectral_ok == s


def check_algebra(V: GeneralizedVarifold) -> AlgebraReport:
    """Trace, membership and spectral checks on every sample (batched a_membership)."""
    N = len(V)
    d = V.n + 1
    if N == 0:
        return AlgebraReport(0, 0, 0, 0, 0.0, 0.0)
    T = V.tensors
    if np.max(np.abs(T - np.swapaxes(T, 1, 2))) > SYMMETRY_TOL:
        raise ValueError("stress tensor samples are not symmetric")
    tr_err = np.abs(np.trace(T, axis1=1, axis2=2) - (V.n - 1))
    eig = np.linalg.eigvalsh(T)
    member = (tr_err <= MEMBERSHIP_TOL) & (eig[:, 0] >= -d - MEMBERSHIP_TOL) & (eig[:, -1] <= 1 + MEMBERSHIP_TOL)
    expected = np.ones(d)
    expected[0] = -1.0
    spectral = np.all(np.abs(eig - expected) <= MEMBERSHIP_TOL, axis=1)
    mass_error = 0.0
    if V.source is not None:
        dir_energy = energy(V.source).dirichlet
        mass_error = abs(V.mass - dir_energy) / dir_energy if dir_energy > 0 else abs(V.mass)
    return AlgebraReport(
        N,
        int(np.count_nonzero(tr_err <= 1e-12)),
        int(np.count_nonzero(member)),
        int(np.count_nonzero(spectral)),
        float(tr_err.max()),
        float(mass_error),
    )


def pair(V: GeneralizedVarifold, f: Callable, vectorized: bool = False) -> float:
    """<V, f> = sum of w f(T).

    ``f`` takes one (n+1)x(n+1) matrix; with ``vectorized`` it takes the
    whole (N, n+1, n+1) stack and returns N values.
    """
    if len(V) == 0:
        return 0.0
    if vectorized:
        vals = np.asarray(f(V.tensors), dtype=float)
    else:
        vals = np.fromiter((f(T) for T in V.tensors), dtype=float, count=len(V))
    return float(np.sum(V.weights * vals))


def first_variation(V: GeneralizedVarifold, X: TestField) -> float:
    """<delta V, X> = sum of w <T, DX>_F, with DX evaluated in closed form at the samples."""
    if len(V) == 0:
        return 0.0
    coords = [V.locations[:, j] for j in range(V.locations.shape[1])]
    jac = X.jacobian(coords)  # (d, d, N)
    return float(np.sum(V.weights * np.einsum("nij,ijn->n", V.tensors, jac)))


@dataclass(frozen=True)
class StationarityReport:
    raw: float        # max over the battery of |<delta V, X>|
    combined: float   # max of |<delta V, X> + (1/eps) int W div' X|
    per_field: list = field(default_factory=list)


def stationarity_residual(V: GeneralizedVarifold, battery: Sequence[TestField]) -> StationarityReport:
    if not battery:
        raise ValueError("test-field battery is empty")
    if V.source is None:
        raise ValueError("companion residual needs the generating solution")
    rows = []
    for X in battery:
        X.check(V.source.grid)
        fv = first_variation(V, X)
        bv = boundary_variation(V.source, X)
        rows.append((X, fv, fv + bv))
    raw = max(abs(r[1]) for r in rows)
    combined = max(abs(r[2]) for r in rows)
    return StationarityReport(raw, combined, [(X.center, X.scale, X.direction, fv, c) for X, fv, c in rows])


@dataclass(frozen=True)
class SigmaVarifold:
    points: NDArray          # (m, n) face coordinates
    theta: NDArray           # (m,)
    tangents: NDArray        # (m, n+1, n+1) orthogonal projections onto the estimated planes
    label: str = "estimate"

    @property
    def mass_proxy(self) -> float:
        return float(np.sum(self.theta))


def sigma_varifold(report: ConcentrationReport) -> SigmaVarifold:
    """Points of Sigma with multiplicity theta and PCA tangent-plane estimates.

    n = 1: Sigma is 0-dimensional and every tangent plane is {0}.  n = 2: the
    tangent line at each point is the principal direction of the
    theta-weighted Sigma points within 3r.
    """
    pts = np.asarray(report.sigma_points, dtype=float)
    if len(pts) == 0:
        raise ValueError("Sigma is empty")
    theta = np.asarray(report.theta_estimates, dtype=float)
    m, n = pts.shape
    tangents = np.zeros((m, n + 1, n + 1))
    if n == 2:
        for k, p in enumerate(pts):
            near = np.sum((pts - p) ** 2, axis=-1) <= (3 * report.r) ** 2
            q = pts[near]
            w = theta[near]
            mean = np.average(q, axis=0, weights=w)
            cov = ((q - mean) * w[:, None]).T @ (q - mean) / w.sum()
            evals, evecs = np.linalg.eigh(cov)
            t = np.zeros(n + 1)
            t[:n] = evecs[:, -1]
            tangents[k] = np.outer(t, t)
    return SigmaVarifold(pts, theta, tangents)


def tangent_direction(sv: SigmaVarifold, k: int) -> NDArray:
    """Unit vector spanning the k-th tangent estimate (n = 2)."""
    evals, evecs = np.linalg.eigh(sv.tangents[k])
    return evecs[:, -1]


@dataclass(frozen=True)
class Decomposition:
    ball: RegionKind
    v_star: float        # 1/2 int_B |grad u_*|^2
    v_sigma: float       # defect measure of B
    measure_mass: float  # mu_smallest(B)
    varifold_mass: float  # ||V_smallest||(B) = Dirichlet energy of the smallest member in B


def decompose(family: EpsFamily, limit: Optional[LimitField], balls: Sequence[RegionKind]) -> list[Decomposition]:
    """Per-ball masses of V_* and V_Sigma next to the smallest member's masses."""
    limit = limit or limit_field(family)
    small = family.smallest
    if limit.u_star.shape != small.u.shape:
        raise ValueError("limit field does not live on the family grid")
    star = energy_measure(Solution.exact(small.grid, limit.u_star, small.epsilon, small.potential))
    measure = family.measures[-1]
    out = []
    for ball in balls:
        region = region_weights(small.grid, ball)
        e = measure.energy(region)
        v_star = star.energy(region).dirichlet
        out.append(Decomposition(ball, v_star, e.total - v_star, e.total, e.dirichlet))
    return out
