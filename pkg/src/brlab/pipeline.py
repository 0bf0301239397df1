"""
Scenario runner: solve a configured family, run the analysis suites, and
assemble the report tables.

The functions here return plain dicts and row lists; ``cli`` decides where
they are written.  Parallel sweeps use a process pool over epsilon; every
member is solved from the same default initial guess so the result does not
depend on the worker count.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .concentration import (
    EpsFamily,
    ball_distance_to_set,
    calibrate_eta0,
    concentration_set,
    defect_measure,
    face_zero_set,
    hausdorff_distance,
    potential_decay,
    verify_clearing_out,
)
from .config import ScenarioConfig
from .energy import energy_measure, inner_variation_residual, monotonicity_profile, scaled_energy
from .geometry import Disc, GridSpec, build_grid
from .potentials import PotentialKind
from .report import atomic_write_bytes
from .solver import (
    Solution,
    discrete_energy,
    exact_layer,
    face_zero_crossings,
    solve,
    two_phase_data,
)
from .varifold import build_varifold, check_algebra, decompose, stationarity_residual
from .vector_fields import bump_battery

logger = logging.getLogger(__name__)

MONOTONICITY_SLACK = 1e-3     # violations allowed, relative to E_total
IDENTITY_TOLERANCE = 0.10     # relative mismatch of the monotonicity identity
ORDER_THRESHOLD = 1.8
VARIATION_RATE_THRESHOLD = 0.8
OFF_SIGMA_GAP = 0.1          # support gap to the zero set for the raw-trend fields
VALIDATE_BATTERY_CENTERS = ((0.15,), (0.3,))
# node-aligned for every h dividing 1/16, so half-ball weights carry no partial cells
VALIDATE_RADII = tuple(k / 16 for k in (1, 2, 3, 4, 6, 8, 10, 12))
VALIDATE_BATTERY_SCALES = (0.05, 0.1, 0.2)


# --- solving -----------------------------------------------------------------


def boundary_data(grid, scenario: str, value: float, epsilon: float) -> np.ndarray:
    """Dirichlet data for one family member of a scenario."""
    if scenario == "constant":
        return two_phase_data(grid, "constant", value=value)
    if scenario == "layer-trace":
        return two_phase_data(grid, "layer-trace", epsilon=epsilon)
    return two_phase_data(grid, "step")


def _solve_member(args):
    spec, potential, scenario, value, epsilon, params, initial = args
    grid = build_grid(spec)
    data = boundary_data(grid, scenario, value, epsilon)
    t0 = time.perf_counter()
    sol = solve(grid, epsilon, potential, data, initial=initial, params=params)
    logger.info("eps=%g converged=%s residual=%.3e steps=%d (%.1fs)", epsilon, sol.converged, sol.final_residual, sol.sweeps_used, time.perf_counter() - t0)
    return sol


def solve_scenario(cfg: ScenarioConfig, continuation: bool = True, workers: Optional[int] = None) -> list[Solution]:
    """Solve every configured epsilon.

    ``continuation`` chains members (each starts from the previous field) and
    is inherently serial; otherwise members are independent and spread over
    ``workers`` processes.
    """
    workers = workers or cfg.workers
    base = (cfg.grid, cfg.potential, cfg.scenario, cfg.value)
    if continuation:
        out: list[Solution] = []
        for eps in cfg.epsilons:
            initial = out[-1].u if out and out[-1].converged else None
            out.append(_solve_member(base + (eps, cfg.solver, initial)))
        return out
    jobs = [base + (eps, cfg.solver, None) for eps in cfg.epsilons]
    if workers <= 1 or len(jobs) == 1:
        return [_solve_member(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        sols = list(pool.map(_solve_member, jobs))
    # rebind to one grid object so downstream caches are shared
    grid = build_grid(cfg.grid)
    return [Solution(grid, s.u, s.epsilon, s.potential, s.converged, s.final_residual, s.sweeps_used, s.method, s.diagnostics) for s in sols]


def fingerprint(cfg: ScenarioConfig) -> str:
    """Hash of everything that determines the solution fields."""
    d = cfg.to_dict()
    key = {k: d[k] for k in ("grid", "potential", "scenario", "epsilons", "solver")}
    return hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:16]


def save_solutions(path: Path, cfg: ScenarioConfig, sols: list[Solution]) -> None:
    buf = io.BytesIO()
    np.savez(
        buf,
        fingerprint=np.array(fingerprint(cfg)),
        epsilons=np.array([s.epsilon for s in sols]),
        fields=np.stack([s.u for s in sols]),
        converged=np.array([s.converged for s in sols]),
        residual=np.array([s.final_residual for s in sols]),
        sweeps=np.array([s.sweeps_used for s in sols]),
        max_abs_u=np.array([s.diagnostics.get("max_abs_u", np.nan) for s in sols]),
    )
    atomic_write_bytes(path, buf.getvalue())


def load_solutions(path: Path, cfg: ScenarioConfig) -> Optional[list[Solution]]:
    """Solutions saved by a previous solve/sweep of the same configuration, else None."""
    if not path.exists():
        return None
    with np.load(path) as z:
        if str(z["fingerprint"]) != fingerprint(cfg):
            logger.info("stored solutions in %s belong to another configuration; re-solving", path)
            return None
        grid = build_grid(cfg.grid)
        out = []
        for k, eps in enumerate(z["epsilons"]):
            diag = {"max_abs_u": float(z["max_abs_u"][k])}
            out.append(
                Solution(grid, z["fields"][k], float(eps), cfg.potential, bool(z["converged"][k]), float(z["residual"][k]), int(z["sweeps"][k]), cfg.solver.method, diag)
            )
    return out


def convergence_rows(sols: list[Solution]) -> list[list]:
    rows = []
    for s in sols:
        crossings = len(face_zero_crossings(s)) if s.grid.n == 1 else None
        peak = s.diagnostics.get("max_abs_u", float(np.max(np.abs(s.u))))
        rows.append([s.epsilon, s.converged, s.final_residual, s.sweeps_used, s.method, peak, crossings])
    return rows


CONVERGENCE_HEADER = ["epsilon", "converged", "final_residual", "steps", "method", "max_abs_u", "face_zero_crossings"]
ENERGY_HEADER = ["epsilon", "dirichlet", "potential", "total", "discrete_energy"]


def energy_rows(sols: list[Solution]) -> list[list]:
    rows = []
    for s in sols:
        m = energy_measure(s)
        d = float(m.interior.sum())
        p = float(m.face.sum())
        rows.append([s.epsilon, d, p, d + p, discrete_energy(s.grid, s.u, s.epsilon, s.potential)])
    return rows


# --- analysis ----------------------------------------------------------------


@dataclass
class Analysis:
    summary: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)   # name -> (header, rows)
    checks: list = field(default_factory=list)   # (name, passed, detail)

    def check(self, name: str, passed: bool, detail: str) -> None:
        self.checks.append((name, bool(passed), detail))

    @property
    def failed(self) -> list:
        return [c for c in self.checks if not c[1]]


def _corollary_centers(x0: tuple[float, ...], R: float, n: int, count: int = 9) -> list[tuple[float, ...]]:
    offs = np.linspace(-0.5, 0.5, count + 2)[1:-1] * R  # strictly inside |x - x0| < R/2
    if n == 1:
        return [(x0[0] + o,) for o in offs]
    pts = []
    for a in offs[::2]:
        for b in offs[::2]:
            if a * a + b * b < (R / 2) ** 2:
                pts.append((x0[0] + a, x0[1] + b))
    return pts


def analyze(cfg: ScenarioConfig, sols: list[Solution]) -> Analysis:
    """Every analysis suite the configuration asks for."""
    plan = cfg.analysis
    grid = sols[0].grid
    n = grid.n
    h = grid.h
    A = Analysis()
    measures = [energy_measure(s) for s in sols]
    totals = [m.total for m in measures]

    A.tables["convergence"] = (CONVERGENCE_HEADER, convergence_rows(sols))
    A.tables["energies"] = (ENERGY_HEADER, energy_rows(sols))

    # monotonicity profiles and identity
    mono_rows = []
    worst_violation = 0.0
    worst_identity = 0.0
    for s, m, E in zip(sols, measures, totals):
        for ci, c in enumerate(plan.centers):
            prof = monotonicity_profile(m, c, plan.radii)
            viol = prof.max_violation()
            worst_violation = max(worst_violation, viol / E if E > 0 else viol)
            rel = prof.relative_identity_error() if E > 0 else np.zeros(len(prof.radii) - 1)
            if len(rel):
                worst_identity = max(worst_identity, float(np.max(rel)))
            for k, r in enumerate(prof.radii):
                mono_rows.append(
                    [s.epsilon, ci, *c, r, prof.I[k], prof.term_sphere[k], prof.term_disc[k], prof.identity_defect[k]]
                )
    coord_names = [f"x{i + 1}" for i in range(n)]
    A.tables["monotonicity"] = (
        ["epsilon", "center_index", *coord_names, "r", "I", "term_sphere", "term_disc", "identity_defect"],
        mono_rows,
    )
    A.summary["monotonicity"] = {"max_relative_violation": worst_violation, "max_relative_identity_error": worst_identity}
    A.check("monotonicity", worst_violation <= MONOTONICITY_SLACK, f"max violation / E_total = {worst_violation:.3e}")

    # corollary: I(r, x) <= 2^{n-1} I(R, x0) + slack for |x - x0| < R/2, r <= R - |x - x0|
    R = plan.clearing_R
    x0 = plan.centers[0]
    cor_rows = []
    cor_ok = True
    for s, m, E in zip(sols, measures, totals):
        bound = 2 ** (n - 1) * scaled_energy(m, x0, R) + MONOTONICITY_SLACK * E
        for x in _corollary_centers(x0, R, n):
            reach = R - float(np.linalg.norm(np.subtract(x, x0)))
            for r in (R / 8, R / 4, R / 2, reach):
                I = scaled_energy(m, x, r)
                ok = I <= bound
                cor_ok &= ok
                cor_rows.append([s.epsilon, *x, r, I, bound, ok])
    A.tables["corollary"] = (["epsilon", *coord_names, "r", "I", "bound", "holds"], cor_rows)
    A.check("corollary", cor_ok, f"{sum(not r[-1] for r in cor_rows)} of {len(cor_rows)} samples above the bound")

    # varifold algebra and stationarity; the raw trend is fitted on fields
    # supported away from every member's face zero set, where the boundary
    # term is the only obstruction and it decays with the potential
    battery = bump_battery(grid, plan.battery_scales, plan.battery_centers)
    zeros = np.concatenate([face_zero_set(s) for s in sols]) if sols else np.zeros((0, n))
    off_sigma = [k for k, X in enumerate(battery) if X.support_distance(zeros) >= OFF_SIGMA_GAP]
    var_rows = []
    alg_ok = True
    var_ok = True
    threshold = cfg.solver.tol + plan.variation_constant * h
    raws_off = []
    for s in sols:
        V = build_varifold(s)
        alg = check_algebra(V)
        alg_ok &= alg.all_ok and alg.mass_error <= 1e-12
        if len(V):
            st = stationarity_residual(V, battery)
            raw, comb = st.raw, st.combined
            raw_off = max((abs(st.per_field[k][3]) for k in off_sigma), default=None)
        else:
            raw = comb = 0.0
            raw_off = 0.0 if off_sigma else None
        raws_off.append(raw_off)
        var_ok &= comb <= threshold
        var_rows.append([s.epsilon, alg.samples, alg.trace_ok, alg.membership_ok, alg.spectral_ok, alg.max_trace_error, alg.mass_error, V.mass, raw, raw_off, comb, threshold])
    A.tables["varifold"] = (
        ["epsilon", "samples", "trace_ok", "membership_ok", "spectral_ok", "max_trace_error", "mass_error", "mass", "raw_residual", "raw_residual_off_sigma", "combined_residual", "combined_threshold"],
        var_rows,
    )
    slope = None
    if len(sols) >= 2 and all(r is not None and r > 0 for r in raws_off):
        slope = float(np.polyfit(np.log([s.epsilon for s in sols]), np.log(raws_off), 1)[0])
    A.summary["varifold"] = {
        "raw_slope_off_sigma": slope,
        "off_sigma_fields": len(off_sigma),
        "combined_threshold": threshold,
        "battery_size": len(battery),
    }
    A.check("varifold_algebra", alg_ok, "trace, membership, spectrum and mass identity on every sample")
    A.check("variation_identity", var_ok, f"combined residual <= tol + {plan.variation_constant:g} h = {threshold:.3e}")

    if not all(s.converged for s in sols):
        return A
    family = EpsFamily(sols)
    A.summary["E0"] = family.E0
    A.summary["energy_window"] = family.energy_window()

    # eta0: calibrated from seeded layer translates, verified on fresh ones
    if plan.eta0 == "calibrate":
        cal = calibrate_eta0(plan.calibration_count, cfg.seed, plan.calibration_epsilon, plan.calibration_R, plan.calibration_h)
        eta0 = cal.eta0
        ver = verify_clearing_out(eta0, plan.calibration_count, (cfg.seed + 1) % 2**64, plan.calibration_epsilon, plan.calibration_R, plan.calibration_h)
        A.tables["calibration"] = (["center", "layer_position", "I", "min_abs_u"], cal.samples.tolist())
        A.tables["clearing_verification"] = (["center", "layer_position", "I", "min_abs_u"], ver.samples.tolist())
        A.summary["eta0"] = {"value": eta0, "source": "calibrated", "calibration_failures": cal.failures, "verification_draws": ver.draws, "verification_failures": ver.failures}
        A.check("clearing_out", ver.failures == 0, f"{ver.failures} of {len(ver.samples)} translates with I <= eta0 failed to clear out")
    else:
        eta0 = float(plan.eta0)
        A.summary["eta0"] = {"value": eta0, "source": "config"}

    rep = concentration_set(family, plan.sigma_r, eta0)
    zeros = face_zero_set(family.smallest)
    haus = hausdorff_distance(rep.sigma_points, zeros) if len(rep.sigma_points) and len(zeros) else None
    A.summary["concentration"] = {
        "r": rep.r,
        "epsilon": rep.epsilon,
        "sigma_size": len(rep.sigma_points),
        "nested": rep.nested,
        "hausdorff_to_zero_set": haus,
        "max_theta": float(rep.theta_estimates.max()) if len(rep.theta_estimates) else None,
        "covering_constant": rep.covering_constant(),
        "zero_set_size": len(zeros),
    }
    A.tables["sigma"] = ([*coord_names, "theta"], [[*p, t] for p, t in zip(rep.sigma_points, rep.theta_estimates)])
    A.check("nesting", rep.nested, f"Sigma at r/2 inside Sigma at r (|Sigma| = {len(rep.sigma_points)})")

    if plan.decay_disc is not None and len(sols) >= 2:
        disc = Disc(plan.decay_disc.center, plan.decay_disc.radius)
        try:
            pd = potential_decay(family, disc, rep.sigma_points)
            A.tables["decay"] = (["epsilon", "potential_mass"], [[e, v] for e, v in zip(pd.epsilons, pd.values)])
            A.summary["decay"] = {"slope": pd.slope, "disc": [list(disc.center), disc.radius]}
        except ValueError as exc:
            A.summary["decay"] = {"error": str(exc)}

    if plan.balls and len(sols) >= 3:
        balls = [b.region() for b in plan.balls]
        defects = defect_measure(family, balls)
        decomp = decompose(family, None, balls)
        rows = []
        for b, d, (key, mu) in zip(balls, decomp, defects.items()):
            dist = ball_distance_to_set(b, rep.sigma_points) if len(rep.sigma_points) else None
            rows.append([key, dist, mu, d.v_star, d.v_sigma, d.measure_mass, d.varifold_mass])
        A.tables["decomposition"] = (
            ["ball", "distance_to_sigma", "defect_mass", "v_star_mass", "v_sigma_mass", "measure_mass", "varifold_mass"],
            rows,
        )
    return A


# --- oracle validation ---------------------------------------------------------


def validate_oracle(cfg: ScenarioConfig) -> Analysis:
    """Exact-layer battery: solver order, monotonicity identity, variation identity."""
    if cfg.potential is not PotentialKind.PEIERLS_NABARRO:
        raise ValueError("the exact-layer oracle requires the peierls_nabarro potential")
    plan = cfg.validate
    eps = plan.epsilon
    A = Analysis()
    rows = []
    errors = []
    variations = []
    profiles = []
    last = None
    for h in plan.hs:
        grid = build_grid(GridSpec.square(1, h))
        exact = exact_layer(grid, eps)
        t0 = time.perf_counter()
        sol = solve(grid, eps, PotentialKind.PEIERLS_NABARRO, exact, params=cfg.solver)
        elapsed = time.perf_counter() - t0
        err = float(np.max(np.abs(sol.u - exact)))
        battery = bump_battery(grid, VALIDATE_BATTERY_SCALES, VALIDATE_BATTERY_CENTERS)
        var = max(abs(inner_variation_residual(sol, X)) for X in battery)
        errors.append(err)
        variations.append(var)
        profiles.append(monotonicity_profile(sol, (0.0,), VALIDATE_RADII))
        rows.append([h, eps, sol.converged, sol.sweeps_used, sol.final_residual, err, var, elapsed])
        if not sol.converged:
            A.check(f"convergence h={h:g}", False, f"not converged after {sol.sweeps_used} steps (residual {sol.final_residual:.3e})")
        last = sol
    A.tables["oracle"] = (["h", "epsilon", "converged", "steps", "final_residual", "linf_error", "variation_residual", "seconds"], rows)
    if A.failed:
        return A

    hs = np.array(plan.hs)
    order = float(np.polyfit(np.log(hs), np.log(errors), 1)[0])
    A.summary["order"] = order
    A.check("solver_order", order >= ORDER_THRESHOLD, f"L-inf order {order:.3f} (need >= {ORDER_THRESHOLD})")

    gates = [plan_var_gate(h) for h in hs]
    var_ok = all(v <= g for v, g in zip(variations, gates))
    rate = float(np.log(variations[-2] / variations[-1]) / np.log(hs[-2] / hs[-1])) if variations[-1] > 0 else float("inf")
    A.summary["variation_rate"] = rate
    A.check("variation_identity", var_ok and rate >= VARIATION_RATE_THRESHOLD, f"residuals {', '.join(f'{v:.2e}' for v in variations)}, rate {rate:.2f} (need >= {VARIATION_RATE_THRESHOLD})")

    defects = [float(np.max(np.abs(p.identity_defect))) for p in profiles]
    id_rate = float(np.polyfit(np.log(hs), np.log(defects), 1)[0]) if min(defects) > 0 else float("inf")
    prof = profiles[-1]
    E = energy_measure(last).total
    rel = float(np.max(prof.relative_identity_error()))
    A.summary["identity_error"] = rel
    A.summary["identity_rate"] = id_rate
    A.tables["oracle_monotonicity"] = (
        ["r", "I", "term_sphere", "term_disc", "identity_defect"],
        [[r, i, a, b, d] for r, i, a, b, d in zip(prof.radii, prof.I, prof.term_sphere, prof.term_disc, prof.identity_defect)],
    )
    ok = rel <= IDENTITY_TOLERANCE and id_rate >= VARIATION_RATE_THRESHOLD and prof.max_violation() <= MONOTONICITY_SLACK * E
    A.check(
        "monotonicity_identity",
        ok,
        f"identity defects {', '.join(f'{d:.2e}' for d in defects)}, rate {id_rate:.2f} (need >= {VARIATION_RATE_THRESHOLD}); "
        f"relative error {rel:.3e} at the finest h",
    )
    return A


def plan_var_gate(h: float) -> float:
    """Allowed inner-variation residual at spacing h (0.05 at 1/128, linear in h)."""
    return 6.4 * h
