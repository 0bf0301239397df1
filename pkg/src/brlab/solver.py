"""
Critical points of the boundary-reaction energy on a half-slab grid.

The discrete problem is: u harmonic (standard 2(n+1)+1 point stencil) at
interior nodes, Dirichlet data on the lateral and top faces, and on the
reaction face the Neumann condition du/dnu = -W'(u)/eps imposed through a
ghost node

    u_ghost = u_1 - (2h/eps) W'(u_0)

after which the interior stencil is applied on the face row.  Halving the
face-row equations makes the system the gradient of the discrete energy

    E_h(u) = h^{n-1} [ 1/2 sum_edges c_e (du_e)^2 + sum_face (h/eps) W(u) ]

(c_e = 1/2 on edges lying in the face row), so both iterations below descend
the same functional.

Two iterations are provided:

* ``"newton"``: Newton on the sparse system, globalized by pseudo-transient
  continuation (implicit gradient-flow steps whose time step grows until
  the iteration is plain Newton).  Used for production-size grids.
* ``"sor"``: red-black SOR over the unknowns with a scalar Newton solve at
  each face node.  Slower, but every sweep is a descent step for E_h, which
  is checked every 100 sweeps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.typing import NDArray
from scipy.interpolate import RegularGridInterpolator

from .geometry import DIRICHLET, REACTION_FACE, Grid, boundary_normal_derivative
from .potentials import (
    PotentialKind,
    potential_derivative,
    potential_second_derivative,
    potential_value,
)

logger = logging.getLogger(__name__)

ENERGY_CHECK_EVERY = 100

# pseudo-transient continuation controls (time step in units of h^2-scaled residual)
PTC_NEWTON_DT = 1e12
PTC_MIN_DT = 1e-3
PTC_REJECT = 2.0
PTC_GROWTH = 2.0
ITERATIVE_RTOL = 1e-13
ITERATIVE_MAXITER = 20000


class SolverError(RuntimeError):
    """Raised when an iteration produces non-finite values."""

    def __init__(self, message: str, sweep: int | None = None):
        super().__init__(message)
        self.sweep = sweep


@dataclass(frozen=True)
class SolveParams:
    tol: float = 1e-10
    max_sweeps: int = 50
    relaxation: float = 1.9
    newton_iters: int = 5
    method: str = "newton"
    pseudo_time: float = 64.0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if not 0 < self.relaxation < 2:
            raise ValueError(f"relaxation must lie in (0, 2), got {self.relaxation}")
        if self.max_sweeps < 0:
            raise ValueError("max_sweeps must be non-negative")
        if self.newton_iters < 1:
            raise ValueError("newton_iters must be at least 1")
        if not self.pseudo_time > 0:
            raise ValueError("pseudo_time must be positive")
        if self.method not in ("newton", "sor"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass(frozen=True)
class Solution:
    grid: Grid
    u: NDArray = field(repr=False)
    epsilon: float
    potential: PotentialKind
    converged: bool
    final_residual: float
    sweeps_used: int
    method: str = "newton"
    diagnostics: dict = field(default_factory=dict, repr=False)

    @classmethod
    def exact(cls, grid: Grid, u: NDArray, epsilon: float, potential: PotentialKind) -> Solution:
        """Wrap a closed-form field (e.g. an exact layer) as a Solution."""
        return cls(grid, np.asarray(u, dtype=float), float(epsilon), potential, True, 0.0, 0, "exact")

    @property
    def face_trace(self) -> NDArray:
        return self.u[..., 0]


# --- discrete operator -------------------------------------------------------


@dataclass(frozen=True)
class _System:
    grid: Grid
    unknowns: NDArray          # flat indices of non-Dirichlet nodes
    face_local: NDArray        # positions (into unknowns) of reaction-face nodes
    L_uu: sp.csr_matrix        # coupling among unknowns (symmetric, <= 0)
    L_ud: sp.csr_matrix        # coupling unknowns <- Dirichlet nodes
    edges: tuple[NDArray, NDArray, NDArray]  # (p, q, c) over all non-constant edges


_SYSTEM_CACHE: dict = {}


def _build_system(grid: Grid) -> _System:
    key = (grid.spec, grid.shape)
    cached = _SYSTEM_CACHE.get(key)
    if cached is not None:
        return cached

    shape = grid.shape
    flat_kind = grid.kind.ravel()
    index = np.arange(grid.size).reshape(shape)
    ps, qs, cs = [], [], []
    for axis in range(len(shape)):
        lo = [slice(None)] * len(shape)
        hi = [slice(None)] * len(shape)
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        p = index[tuple(lo)]
        q = index[tuple(hi)]
        c = np.ones(p.shape)
        if axis < grid.n:
            c[..., 0] = 0.5  # edge lies in the face row: half cell
        ps.append(p.ravel())
        qs.append(q.ravel())
        cs.append(c.ravel())
    p = np.concatenate(ps)
    q = np.concatenate(qs)
    c = np.concatenate(cs)
    keep = ~((flat_kind[p] == DIRICHLET) & (flat_kind[q] == DIRICHLET))
    p, q, c = p[keep], q[keep], c[keep]

    n_all = grid.size
    rows = np.concatenate([p, q, p, q])
    cols = np.concatenate([q, p, p, q])
    vals = np.concatenate([c, c, -c, -c])
    L = sp.csr_matrix((vals, (rows, cols)), shape=(n_all, n_all))

    unknowns = np.flatnonzero(flat_kind != DIRICHLET)
    dirichlet = np.flatnonzero(flat_kind == DIRICHLET)
    face_local = np.flatnonzero(flat_kind[unknowns] == REACTION_FACE)
    L_u = L[unknowns]
    system = _System(
        grid=grid,
        unknowns=unknowns,
        face_local=face_local,
        L_uu=L_u[:, unknowns].tocsr(),
        L_ud=L_u[:, dirichlet].tocsr(),
        edges=(p, q, c),
    )
    if len(_SYSTEM_CACHE) > 8:
        _SYSTEM_CACHE.clear()
    _SYSTEM_CACHE[key] = system
    return system


def _dirichlet_values(grid: Grid, data: NDArray) -> NDArray:
    return np.asarray(data, dtype=float).ravel()[grid.kind.ravel() == DIRICHLET]


def _equations(system: _System, x: NDArray, b: NDArray, coef: float, kind: PotentialKind) -> NDArray:
    """F(x) = L x + b - (h/eps) W'(x) on face rows; zero at a critical point."""
    F = system.L_uu @ x + b
    xf = x[system.face_local]
    F[system.face_local] -= coef * potential_derivative(kind, xf)
    return F


def discrete_energy(grid: Grid, u: NDArray, epsilon: float, potential: PotentialKind) -> float:
    """The functional E_h whose critical points ``solve`` computes."""
    system = _build_system(grid)
    flat = u.ravel()
    p, q, c = system.edges
    dirichlet_part = 0.5 * float(np.sum(c * (flat[p] - flat[q]) ** 2))
    face = flat[system.unknowns[system.face_local]]
    potential_part = (grid.h / epsilon) * float(np.sum(potential_value(potential, face)))
    return grid.h ** (grid.n - 1) * (dirichlet_part + potential_part)


def _relative(F: NDArray, x: NDArray) -> float:
    if F.size == 0:
        return 0.0
    return float(np.max(np.abs(F))) / max(1.0, float(np.max(np.abs(x))))


def harmonic_extension(grid: Grid, data: NDArray) -> NDArray:
    """Harmonic field with the given Dirichlet data and zero flux on the face."""
    system = _build_system(grid)
    b = system.L_ud @ _dirichlet_values(grid, data)
    u = np.asarray(data, dtype=float).copy().ravel()
    if system.unknowns.size:
        lu = spla.splu(system.L_uu.tocsc(), permc_spec="MMD_AT_PLUS_A")
        u[system.unknowns] = lu.solve(-b)
    return u.reshape(grid.shape)


def solve(
    grid: Grid,
    epsilon: float,
    potential: PotentialKind,
    data: NDArray,
    initial: Optional[NDArray] = None,
    params: Optional[SolveParams] = None,
) -> Solution:
    """Find a discrete critical point of E_eps with the given Dirichlet data.

    ``data`` and ``initial`` are full-grid arrays; only Dirichlet nodes of
    ``data`` are read.  The default initial guess is the harmonic extension
    of the data.  Returns a non-converged Solution (converged=False) if the
    sweep budget runs out.
    """
    params = params or SolveParams()
    potential = PotentialKind.parse(potential)
    epsilon = float(epsilon)
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if epsilon < 2 * grid.h * (1 - 1e-12):
        raise ValueError(
            f"epsilon={epsilon} violates the epsilon >= 2h guard (h={grid.h}): layer not resolved"
        )
    data = np.broadcast_to(np.asarray(data, dtype=float), grid.shape)
    bvals = _dirichlet_values(grid, data)
    if bvals.size and (not np.all(np.isfinite(bvals)) or np.max(np.abs(bvals)) > 1 + 1e-12):
        raise ValueError("Dirichlet data must be finite with values in [-1, 1]")

    system = _build_system(grid)
    b = system.L_ud @ bvals
    if initial is None:
        u0 = harmonic_extension(grid, data)
    else:
        u0 = np.array(initial, dtype=float).reshape(grid.shape)
    full = u0.ravel().copy()
    full[grid.kind.ravel() == DIRICHLET] = bvals
    if not np.all(np.isfinite(full)):
        raise SolverError("non-finite initial guess", sweep=0)
    x = full[system.unknowns].copy()
    coef = grid.h / epsilon

    if params.method == "newton":
        x, converged, res, sweeps, diag = _newton(system, x, b, coef, potential, params)
    else:
        x, converged, res, sweeps, diag = _red_black_sor(system, full, x, b, coef, potential, params, epsilon)

    full[system.unknowns] = x
    u = full.reshape(grid.shape)
    peak = float(np.max(np.abs(u)))
    diag["max_abs_u"] = peak
    diag["max_principle_ok"] = bool(peak <= 1 + 10 * params.tol)
    if converged and not diag["max_principle_ok"]:
        logger.warning("discrete maximum principle violated: max|u| = %.6g", peak)
    if not converged:
        logger.warning("solve did not converge in %d sweeps (residual %.3e)", sweeps, res)
    return Solution(grid, u, epsilon, potential, converged, res, sweeps, params.method, diag)


def _linear_solve(A, rhs: NDArray, n: int) -> NDArray:
    """Solve the symmetric Newton/PTC system.

    n = 1 uses a sparse LU (cheap fill in 2D).  n = 2 uses MINRES, which
    handles the symmetric indefinite systems met away from stable states;
    direct 3D factorizations fill in badly.  LU is the fallback.
    """
    if n >= 2:
        step, info = spla.minres(A, rhs, rtol=ITERATIVE_RTOL, maxiter=ITERATIVE_MAXITER)
        if info == 0 and np.all(np.isfinite(step)):
            return step
        logger.debug("MINRES returned info=%d; falling back to LU", info)
    lu = spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": True})
    return lu.solve(rhs)


def _newton(system, x, b, coef, kind, params):
    """Pseudo-transient continuation Newton.

    Each step solves (I/dt - J) dx = F, i.e. one implicit Euler step of the
    gradient flow of E_h, and grows dt by switched evolution relaxation
    (dt <- dt * |F_old| / |F_new|).  Large dt recovers plain Newton; small dt
    keeps the iterate away from saddles, so the flow settles on stable
    critical points.
    """
    F = _equations(system, x, b, coef, kind)
    res = _relative(F, x)
    history = [res]
    eye = sp.identity(x.size, format="csr")
    dt = params.pseudo_time
    norm = float(np.linalg.norm(F))
    it = 0
    while res > params.tol and it < params.max_sweeps:
        it += 1
        d2 = coef * potential_second_derivative(kind, x[system.face_local])
        J = system.L_uu - sp.csr_matrix((d2, (system.face_local, system.face_local)), shape=system.L_uu.shape)
        A = (J - eye / dt) if dt < PTC_NEWTON_DT else J
        step = _linear_solve(A, -F, system.grid.n)
        if not np.all(np.isfinite(step)):
            raise SolverError(f"non-finite Newton step at sweep {it}", sweep=it)
        trial = x + step
        Ft = _equations(system, trial, b, coef, kind)
        if not np.all(np.isfinite(Ft)):
            raise SolverError(f"non-finite field at sweep {it}", sweep=it)
        new_norm = float(np.linalg.norm(Ft))
        if new_norm > PTC_REJECT * norm and dt > PTC_MIN_DT:
            dt *= 0.25
            continue
        dt = min(dt * max(norm / max(new_norm, 1e-300), PTC_GROWTH), 1e30)
        x, F, norm = trial, Ft, new_norm
        res = _relative(F, x)
        history.append(res)
    return x, res <= params.tol, res, it, {"residual_history": history}


def _red_black_sor(system, full, x, b, coef, kind, params, epsilon):
    grid = system.grid
    unknowns = system.unknowns
    n_all = grid.size
    # neighbour sums S = N u over all nodes, diagonal C = -L_kk
    L_u = sp.hstack([system.L_uu, system.L_ud]).tocsr()
    order = np.concatenate([unknowns, np.flatnonzero(grid.kind.ravel() == DIRICHLET)])
    perm = sp.csr_matrix((np.ones(n_all), (order, np.arange(n_all))), shape=(n_all, n_all))
    L_full = (L_u @ perm.T).tocsr()  # rows: unknowns, cols: all nodes
    C = -L_full[np.arange(unknowns.size), unknowns].A1
    N = L_full.copy()
    N[np.arange(unknowns.size), unknowns] = 0.0
    N.eliminate_zeros()

    parity = np.sum(np.unravel_index(unknowns, grid.shape), axis=0) % 2
    is_face = np.zeros(unknowns.size, dtype=bool)
    is_face[system.face_local] = True
    colors = [np.flatnonzero(parity == k) for k in (0, 1)]
    split = [(rows[~is_face[rows]], rows[is_face[rows]]) for rows in colors]
    N_rows = [(N[a], N[f]) for a, f in split]

    omega = params.relaxation
    energy_history = [discrete_energy(grid, full.reshape(grid.shape), epsilon, kind)]
    monotone = True
    F = _equations(system, x, b, coef, kind)
    res = _relative(F, x)
    sweep = 0
    while res > params.tol and sweep < params.max_sweeps:
        sweep += 1
        for (bulk, face), (N_bulk, N_face) in zip(split, N_rows):
            if bulk.size:
                target = (N_bulk @ full) / C[bulk]
                idx = unknowns[bulk]
                full[idx] += omega * (target - full[idx])
            if face.size:
                S = N_face @ full
                Cf = C[face]
                idx = unknowns[face]
                v = full[idx].copy()
                for _ in range(params.newton_iters):
                    g = S - Cf * v - coef * potential_derivative(kind, v)
                    dg = -Cf - coef * potential_second_derivative(kind, v)
                    v = v - g / dg
                full[idx] += omega * (v - full[idx])
        x = full[unknowns]
        if not np.all(np.isfinite(x)):
            raise SolverError(f"non-finite field at sweep {sweep}", sweep=sweep)
        if sweep % 10 == 0 or sweep == params.max_sweeps:
            F = _equations(system, x, b, coef, kind)
            res = _relative(F, x)
        if sweep % ENERGY_CHECK_EVERY == 0:
            e = discrete_energy(grid, full.reshape(grid.shape), epsilon, kind)
            if e > energy_history[-1] + params.tol * max(1.0, abs(energy_history[-1])):
                monotone = False
                logger.warning("energy increased at sweep %d: %.12g -> %.12g", sweep, energy_history[-1], e)
            energy_history.append(e)
    F = _equations(system, x, b, coef, kind)
    res = _relative(F, x)
    return x, res <= params.tol, res, sweep, {"energy_history": energy_history, "energy_monotone": monotone}


# --- diagnostics and closed-form fields -------------------------------------


def laplacian(u: NDArray, grid: Grid) -> NDArray:
    """Standard (2(n+1)+1)-point Laplacian at interior nodes, zero elsewhere."""
    out = np.zeros(grid.shape)
    inner = tuple(slice(1, -1) for _ in grid.shape)
    acc = -2.0 * len(grid.shape) * u[inner]
    for axis in range(len(grid.shape)):
        for shift in (-1, 1):
            sl = [slice(1, -1)] * len(grid.shape)
            sl[axis] = slice(1 + shift, u.shape[axis] - 1 + shift)
            acc = acc + u[tuple(sl)]
    out[inner] = acc / grid.h**2
    out[~grid.interior_mask] = 0.0
    return out


def residual(sol: Solution) -> tuple[NDArray, NDArray]:
    """(interior Laplacian, face residual du/dnu + W'(u)/eps).

    The face residual uses the one-sided derivative stencil and is returned
    on the whole x_{n+1} = 0 row with zeros at Dirichlet corners.
    """
    grid = sol.grid
    interior = laplacian(sol.u, grid)
    face = boundary_normal_derivative(sol.u, grid) + potential_derivative(sol.potential, sol.u[..., 0]) / sol.epsilon
    face = np.where(grid.face_mask[..., 0], face, 0.0)
    return interior, face


def exact_layer(grid: Grid, epsilon: float, shift: float = 0.0) -> NDArray:
    """Closed-form Peierls-Nabarro layer (2/pi) arctan((x_1 - shift)/(x_{n+1} + eps)).

    Harmonic, and on the face -du/dy = (1/(pi eps)) sin(pi u) exactly.  For
    n = 2 it is extended constant in x_2.
    """
    x1 = grid.coords[0]
    y = grid.coords[-1]
    return (2.0 / np.pi) * np.arctan((x1 - shift) / (y + epsilon))


def two_phase_data(grid: Grid, profile: str = "step", epsilon: float | None = None, value: float = 1.0) -> NDArray:
    """Dirichlet data scenarios, as full-grid arrays.

    ``step``: -1/+1 on the x_1 = -L/+L faces, linear in x_1 elsewhere;
    ``layer-trace``: values of ``exact_layer(epsilon)``;
    ``constant``: ``value`` everywhere.
    """
    profile = profile.replace("_", "-").lower()
    if profile == "step":
        return np.clip(grid.coords[0] / grid.spec.half_widths[0], -1.0, 1.0)
    if profile == "layer-trace":
        if epsilon is None:
            raise ValueError("layer-trace profile needs epsilon")
        return exact_layer(grid, epsilon)
    if profile == "constant":
        if abs(value) > 1:
            raise ValueError("constant data must lie in [-1, 1]")
        return np.full(grid.shape, float(value))
    raise ValueError(f"unknown profile {profile!r}")


def interpolate_field(u: NDArray, source: Grid, target: Grid) -> NDArray:
    """Multilinear transfer of a nodal field between grids covering the same box."""
    interp = RegularGridInterpolator(source.axes, u, bounds_error=False, fill_value=None)
    pts = np.stack([c.ravel() for c in target.coords], axis=-1)
    return interp(pts).reshape(target.shape)


def face_zero_crossings(sol: Solution) -> list[float]:
    """x_1 positions where the face trace changes sign (n = 1 along the row)."""
    trace = sol.u[..., 0]
    if sol.grid.n != 1:
        raise ValueError("face_zero_crossings is defined for n = 1")
    x = sol.grid.axes[0]
    out = []
    for i in range(len(x) - 1):
        a, b = trace[i], trace[i + 1]
        if a == 0.0:
            out.append(float(x[i]))
        elif a * b < 0:
            out.append(float(x[i] - a * (x[i + 1] - x[i]) / (b - a)))
    if trace[-1] == 0.0:
        out.append(float(x[-1]))
    return out


def solve_family(
    grid: Grid,
    epsilons,
    potential: PotentialKind,
    data: NDArray,
    params: Optional[SolveParams] = None,
    continuation: bool = True,
) -> list[Solution]:
    """Solve for each eps in decreasing order.

    With ``continuation`` each member starts from the previous member's
    field (a short pseudo-time ramp is kept so the iterate can still move
    off a saddle); otherwise every member starts from the harmonic extension
    and members are independent.
    """
    params = params or SolveParams()
    out: list[Solution] = []
    for eps in epsilons:
        if continuation and out:
            sol = solve(grid, eps, potential, data, initial=out[-1].u, params=params)
        else:
            sol = solve(grid, eps, potential, data, params=params)
        out.append(sol)
    return out
