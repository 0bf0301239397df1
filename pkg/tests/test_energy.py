from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brlab.energy import (
    energy,
    energy_measure,
    inner_variation_residual,
    monotonicity_profile,
    scaled_energy,
)
from brlab.geometry import Disc, GridSpec, HalfAnnulus, HalfBall, build_grid
from brlab.potentials import PotentialKind
from brlab.solver import Solution, exact_layer
from brlab.vector_fields import TestField, bump_battery

Q = PotentialKind.QUARTIC
PN = PotentialKind.PEIERLS_NABARRO


@pytest.fixture(scope="module")
def grid():
    return build_grid(GridSpec.square(1, 1 / 64))


@pytest.fixture(scope="module")
def zero(grid):
    return Solution.exact(grid, np.zeros(grid.shape), 1.0, Q)


@pytest.fixture(scope="module")
def one(grid):
    return Solution.exact(grid, np.ones(grid.shape), 0.1, Q)


def test_wells_carry_no_energy(one):
    e = energy(one, HalfBall((0.0,), 0.5))
    assert (e.dirichlet, e.potential, e.total) == (0.0, 0.0, 0.0)


@pytest.mark.parametrize("r", [0.25, 0.5, 0.75])
def test_zero_field_energy(zero, r):
    e = energy(zero, HalfBall((0.0,), r))
    assert e.dirichlet == 0.0
    assert e.potential == pytest.approx(0.25 * 2 * r, rel=1e-12)
    assert e.total == pytest.approx(0.5 * r, rel=1e-12)


def test_disc_region_has_no_bulk_part(grid):
    sol = Solution.exact(grid, exact_layer(grid, 0.25), 0.25, PN)
    e = energy(sol, Disc((0.0,), 0.5))
    assert e.dirichlet == 0.0
    assert e.potential == pytest.approx(energy(sol, HalfBall((0.0,), 0.5)).potential)


def test_scaled_energy(zero, one):
    assert scaled_energy(zero, (0.0,), 0.5) == pytest.approx(0.25)
    assert scaled_energy(one, (0.0,), 0.5) == 0.0


def test_zero_field_profile(zero):
    prof = monotonicity_profile(zero, (0.0,), [0.25, 0.5])
    assert prof.increments[1] == pytest.approx(0.125)
    assert prof.term_sphere[1] == 0.0
    # node quadrature of int log(r / max(|x|, r0)) dx: second order in h
    assert prof.term_disc[1] == pytest.approx(0.125, abs=1e-4)
    assert abs(prof.identity_defect[1]) < 1e-4


def test_constant_profile_vanishes(one):
    prof = monotonicity_profile(one, (0.0,), [0.25, 0.5, 0.75])
    assert np.all(prof.I == 0) and np.all(prof.term_sphere == 0) and np.all(prof.term_disc == 0)


def test_profile_rejects_bad_radii(zero):
    with pytest.raises(ValueError, match="increasing"):
        monotonicity_profile(zero, (0.0,), [0.5, 0.25])
    with pytest.raises(ValueError, match="Dirichlet"):
        monotonicity_profile(zero, (0.5,), [0.25, 0.75])


@settings(max_examples=20, deadline=None)
@given(
    a=st.floats(min_value=0.05, max_value=0.45),
    b=st.floats(min_value=0.05, max_value=0.45),
)
def test_energy_is_additive_over_annuli(a, b):
    grid = build_grid(GridSpec.square(1, 1 / 64))
    sol = Solution.exact(grid, exact_layer(grid, 0.2, shift=0.1), 0.2, PN)
    m = energy_measure(sol)
    r1, r2 = sorted((a, b + 0.5))
    inner = m.energy(HalfBall((0.0,), r1)).dirichlet
    shell = m.energy(HalfAnnulus((0.0,), r1, r2)).dirichlet
    assert inner + shell == pytest.approx(m.energy(HalfBall((0.0,), r2)).dirichlet, rel=1e-12)


def test_exact_layer_profile_is_monotone_with_small_identity_defect():
    grid = build_grid(GridSpec.square(1, 1 / 256))
    sol = Solution.exact(grid, exact_layer(grid, 0.25), 0.25, PN)
    prof = monotonicity_profile(sol, (0.0,), np.linspace(0.2, 0.9, 8))
    assert prof.max_violation() == 0.0
    assert np.all(prof.term_sphere >= 0) and np.all(prof.term_disc >= 0)
    assert np.max(prof.relative_identity_error()) < 0.05


def _layer_dirichlet_oracle(eps: float) -> float:
    """Brute-force quadrature of (1/2)|grad u|^2 = (2/pi^2) / (x^2 + (y+eps)^2) over the unit box."""
    from scipy.integrate import dblquad

    return dblquad(lambda y, x: 2 / np.pi**2 / (x**2 + (y + eps) ** 2), -1, 1, 0, 1, epsabs=1e-11)[0]


def test_layer_dirichlet_energy_matches_quadrature_and_grows_logarithmically():
    grid = build_grid(GridSpec.square(1, 1 / 512))
    eps = np.array([0.125, 0.0625, 0.03125])
    oracle = np.array([_layer_dirichlet_oracle(e) for e in eps])
    discrete = np.array([energy(Solution.exact(grid, exact_layer(grid, e), e, PN)).dirichlet for e in eps])
    np.testing.assert_allclose(discrete, oracle, rtol=5e-3)
    # polar integration about (0, -eps) gives a log(1/eps) coefficient of 2/pi,
    # approached from below as eps shrinks
    slopes = np.diff(discrete) / np.log(2)
    assert slopes[0] < slopes[1] < 2 / np.pi
    assert slopes[1] == pytest.approx(2 / np.pi, rel=0.05)


def test_inner_variation_vanishes_for_constants(one):
    for X in bump_battery(one.grid, [0.1, 0.2], centers=[(0.0,), (0.3,)]):
        assert inner_variation_residual(one, X) == 0.0


def test_inner_variation_rejects_nontangential_field(one):
    class Vertical(TestField):
        def value(self, coords):
            out = super().value(coords)
            out[-1] = out[self.direction]
            return out

    with pytest.raises(ValueError, match="X_\\{n\\+1\\} = 0"):
        inner_variation_residual(one, Vertical((0.0,), 0.1, 0))


def test_inner_variation_converges_on_exact_layer():
    X = TestField((0.1,), 0.15, 0).normalized()
    vals = []
    for h in (1 / 64, 1 / 128, 1 / 256):
        grid = build_grid(GridSpec.square(1, h))
        vals.append(abs(inner_variation_residual(Solution.exact(grid, exact_layer(grid, 0.25), 0.25, PN), X)))
    assert vals[2] < vals[1] < vals[0]
    assert np.log2(vals[1] / vals[2]) >= 0.8
