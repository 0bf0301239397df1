from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from brlab.potentials import (
    PotentialKind,
    potential_derivative,
    potential_second_derivative,
    potential_value,
)

Q = PotentialKind.QUARTIC
PN = PotentialKind.PEIERLS_NABARRO


def test_quartic_values():
    assert potential_value(Q, 0.0) == pytest.approx(0.25)
    assert potential_value(Q, 1.0) == 0.0
    assert potential_value(Q, -1.0) == 0.0


def test_pn_value_at_zero():
    assert potential_value(PN, 0.0) == pytest.approx(2 / np.pi**2)
    assert potential_value(PN, 1.0) == pytest.approx(0.0, abs=1e-17)


def test_derivatives():
    assert potential_derivative(Q, 0.5) == pytest.approx(-0.375)
    assert potential_derivative(Q, 1.0) == 0.0
    assert potential_derivative(PN, 0.5) == pytest.approx(-1 / np.pi)


@pytest.mark.parametrize("kind", list(PotentialKind))
@given(t=st.floats(min_value=-1.0, max_value=1.0))
def test_derivatives_match_finite_differences(kind, t):
    d = 1e-6
    fd1 = (potential_value(kind, t + d) - potential_value(kind, t - d)) / (2 * d)
    fd2 = (potential_derivative(kind, t + d) - potential_derivative(kind, t - d)) / (2 * d)
    assert potential_derivative(kind, t) == pytest.approx(fd1, abs=1e-8)
    assert potential_second_derivative(kind, t) == pytest.approx(fd2, abs=1e-7)


@pytest.mark.parametrize("kind", list(PotentialKind))
@given(t=st.floats(min_value=-1.0, max_value=1.0))
def test_even_and_nonnegative(kind, t):
    assert potential_value(kind, t) >= 0
    assert potential_value(kind, t) == pytest.approx(potential_value(kind, -t), abs=1e-15)


@pytest.mark.parametrize("name", ["quartic", "Peierls-Nabarro", "pn", PN])
def test_parse(name):
    assert isinstance(PotentialKind.parse(name), PotentialKind)


def test_parse_unknown():
    with pytest.raises(ValueError, match="unknown potential"):
        PotentialKind.parse("sextic")
