from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brlab.concentration import (
    EpsFamily,
    calibrate_eta0,
    clearing_out_check,
    concentration_set,
    defect_measure,
    density_profile,
    face_zero_set,
    hausdorff_distance,
    interior_density_check,
    limit_field,
    limit_field_components,
    potential_decay,
    verify_clearing_out,
)
from brlab.geometry import Disc, GridSpec, HalfBall, build_grid
from brlab.potentials import PotentialKind
from brlab.solver import Solution, exact_layer, solve_family, two_phase_data

Q = PotentialKind.QUARTIC
PN = PotentialKind.PEIERLS_NABARRO
EPS = (0.2, 0.1, 0.05)


@pytest.fixture(scope="module")
def grid():
    return build_grid(GridSpec.square(1, 1 / 64))


@pytest.fixture(scope="module")
def ones(grid):
    return EpsFamily(tuple(Solution.exact(grid, np.ones(grid.shape), e, Q) for e in EPS))


@pytest.fixture(scope="module")
def two_phase(grid):
    return EpsFamily(solve_family(grid, EPS, Q, two_phase_data(grid)))


def test_family_validation(grid):
    a = Solution.exact(grid, np.ones(grid.shape), 0.1, Q)
    b = Solution.exact(grid, np.ones(grid.shape), 0.2, Q)
    with pytest.raises(ValueError, match="decreasing"):
        EpsFamily((a, b))
    with pytest.raises(ValueError, match="empty"):
        EpsFamily(())
    bad = Solution(grid, np.ones(grid.shape), 0.05, Q, False, 1.0, 3)
    with pytest.raises(ValueError, match="did not converge"):
        EpsFamily((b, a, bad))


# --- constant family: everything vanishes ----------------------------------


def test_constant_family_has_empty_sigma(ones):
    rep = concentration_set(ones, 0.2, 0.1)
    assert rep.empty
    assert rep.nested


def test_constant_family_density_is_zero(ones):
    prof = density_profile(ones.measures[-1], (0.0,), [0.1, 0.2, 0.4])
    assert np.all(prof.theta == 0.0)


def test_constant_family_interior_density_is_exact_zero(ones):
    rep = interior_density_check(ones, (0.0, 0.5), [0.05, 0.1, 0.2])
    assert rep.exact_zero and rep.beta is None


def test_constant_family_decay_and_defect_vanish(ones):
    decay = potential_decay(ones, Disc((0.7,), 0.2))
    assert np.all(decay.values == 0.0) and decay.slope is None
    assert all(v == 0.0 for v in defect_measure(ones, [HalfBall((0.0,), 0.3)]).values())


def test_constant_family_limit(ones):
    assert np.all(limit_field(ones).u_star == 1.0)


def test_constant_field_clears_out(grid):
    rep = clearing_out_check(Solution.exact(grid, np.ones(grid.shape), 0.05, Q), (0.0,), 0.2, eta=0.5)
    assert (rep.I, rep.min_abs_u, rep.holds) == (0.0, 1.0, True)


# --- two-phase family ------------------------------------------------------


def test_threshold_above_global_bound_gives_empty_sigma(two_phase):
    r = 0.2
    rep = concentration_set(two_phase, r, 1.01 * two_phase.E0 * r ** (1 - two_phase.grid.n))
    assert rep.empty


def test_sigma_contains_the_face_zero(two_phase):
    rep = concentration_set(two_phase, 0.2, 0.5 * two_phase.E0)
    assert not rep.empty
    zero = face_zero_set(two_phase.smallest)
    assert len(zero) == 1
    assert hausdorff_distance(rep.sigma_points, zero) <= 2 * rep.r
    assert rep.nested


def test_radius_below_resolvable_scale(two_phase):
    with pytest.raises(ValueError, match="4h"):
        concentration_set(two_phase, 2 * two_phase.grid.h, 0.5)


def test_limit_components_have_opposite_signs(two_phase):
    zero = face_zero_set(two_phase.smallest)
    comps = limit_field_components(limit_field(two_phase), two_phase.grid, zero, 0.2)
    assert [c["sign"] for c in comps] == [-1, 1]
    assert all(c["sign_constant"] for c in comps)


def test_decay_region_too_close_to_sigma(two_phase):
    with pytest.raises(ValueError, match="from Sigma"):
        potential_decay(two_phase, Disc((0.1,), 0.1), sigma=np.array([[0.0]]))


def test_interior_density_above_the_layer(two_phase):
    rep = interior_density_check(two_phase, (0.0, 0.5), [0.05, 0.1, 0.2])
    assert rep.beta >= 1.5


# --- exact layers ----------------------------------------------------------


@pytest.fixture(scope="module")
def fine_layer():
    grid = build_grid(GridSpec.square(1, 1 / 256))
    return Solution.exact(grid, exact_layer(grid, 0.0125), 0.0125, PN)


def test_clearing_out_far_from_the_layer(fine_layer):
    rep = clearing_out_check(fine_layer, (0.75,), 0.2)
    assert rep.min_abs_u >= 0.5
    assert rep.I < 0.1
    at_layer = clearing_out_check(fine_layer, (0.0,), 0.2, eta=rep.I)
    assert at_layer.I > rep.I
    assert at_layer.holds is None  # hypothesis not met: nothing claimed


def test_clearing_out_needs_eps_below_R(fine_layer):
    with pytest.raises(ValueError, match="eps < R"):
        clearing_out_check(fine_layer, (0.0,), 0.01)


def test_interior_density_of_exact_layer():
    grid = build_grid(GridSpec.square(1, 1 / 128))
    sol = Solution.exact(grid, exact_layer(grid, 0.1), 0.1, PN)
    rep = interior_density_check(sol, (0.0, 0.5), [0.05, 0.1, 0.2])
    assert rep.beta >= 1.5


def test_calibration_is_deterministic_and_conservative():
    a = calibrate_eta0(count=12, seed=7, h=1 / 128)
    b = calibrate_eta0(count=12, seed=7, h=1 / 128)
    assert a.eta0 == b.eta0
    np.testing.assert_array_equal(a.samples, b.samples)
    # no sampled translate with I <= eta0 fails to clear out
    qualifying = a.samples[a.samples[:, 2] <= a.eta0]
    assert np.all(qualifying[:, 3] >= 0.5)


def test_verification_raises_when_too_few_translates_qualify():
    with pytest.raises(RuntimeError, match="satisfied"):
        verify_clearing_out(1e-6, count=3, seed=1, h=1 / 128, max_draws=5)


def test_face_zero_set_of_shifted_layer():
    grid = build_grid(GridSpec.square(1, 1 / 64))
    sol = Solution.exact(grid, exact_layer(grid, 0.1, shift=0.3), 0.1, PN)
    zero = face_zero_set(sol)
    assert zero.shape == (1, 1)
    assert zero[0, 0] == pytest.approx(0.3, abs=1e-3)


@settings(max_examples=30, deadline=None)
@given(
    a=st.lists(st.floats(-1, 1), min_size=1, max_size=6),
    b=st.lists(st.floats(-1, 1), min_size=1, max_size=6),
)
def test_hausdorff_is_symmetric_and_zero_on_self(a, b):
    A = np.array(a)[:, None]
    B = np.array(b)[:, None]
    assert hausdorff_distance(A, B) == hausdorff_distance(B, A)
    assert hausdorff_distance(A, A) == 0.0
    assert hausdorff_distance(A, np.zeros((0, 1))) == float("inf")
