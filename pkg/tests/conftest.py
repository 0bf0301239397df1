"""Shared fixtures: expensive solves are done once per session."""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from brlab.concentration import EpsFamily, calibrate_eta0
from brlab.geometry import GridSpec, build_grid
from brlab.potentials import PotentialKind
from brlab.solver import SolveParams, exact_layer, solve, solve_family, two_phase_data

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

# criterion number -> (title, passed, detail); filled by test_acceptance
ACCEPTANCE_RESULTS: dict[int, tuple[str, bool, str]] = {}


def frac(value) -> float:
    return float(Fraction(str(value)))


@pytest.fixture(scope="session")
def acceptance_config() -> dict:
    return json.loads((CONFIGS / "acceptance.json").read_text())


@pytest.fixture(scope="session")
def quartic_family(acceptance_config) -> EpsFamily:
    """Canonical two-phase quartic family, n = 1, h = 1/256, with continuation."""
    fam = acceptance_config["family"]
    grid = build_grid(GridSpec.square(1, frac(fam["h"])))
    sols = solve_family(grid, fam["epsilons"], PotentialKind.QUARTIC, two_phase_data(grid))
    return EpsFamily(sols)


@pytest.fixture(scope="session")
def pn_oracle(acceptance_config) -> dict:
    """PN exact-layer solves at eps = 0.25 for the refinement ladder: h -> (solution, exact, seconds)."""
    import time

    spec = acceptance_config["oracle_accuracy"]
    out = {}
    for h in spec["hs"]:
        h = frac(h)
        grid = build_grid(GridSpec.square(1, h))
        exact = exact_layer(grid, spec["epsilon"])
        t0 = time.perf_counter()
        sol = solve(grid, spec["epsilon"], PotentialKind.PEIERLS_NABARRO, exact, params=SolveParams())
        out[h] = (sol, exact, time.perf_counter() - t0)
    return out


@pytest.fixture(scope="session")
def pn_layer_family():
    """Canonical regression fixture: layer-trace PN data, eps = (0.2, 0.1, 0.05), h = 1/256."""
    from brlab.config import load_config
    from brlab.pipeline import solve_scenario

    cfg = load_config(CONFIGS / "layer_trace_pn.json")
    return cfg, solve_scenario(cfg)


@pytest.fixture(scope="session")
def eta0_calibration(acceptance_config):
    c = acceptance_config["clearing_out"]
    return calibrate_eta0(c["count"], c["calibration_seed"], c["epsilon"], c["R"])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        title, ok, detail = ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d} {title}: {detail}")
