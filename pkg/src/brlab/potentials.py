"""Double-well potentials placed on the reaction face."""

from __future__ import annotations

from enum import Enum

import numpy as np


class PotentialKind(str, Enum):
    QUARTIC = "quartic"
    PEIERLS_NABARRO = "peierls_nabarro"

    @classmethod
    def parse(cls, value) -> PotentialKind:
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"quarticdoublewell": cls.QUARTIC, "peierlsnabarro": cls.PEIERLS_NABARRO, "pn": cls.PEIERLS_NABARRO}
        try:
            return cls(key)
        except ValueError:
            if key.replace("_", "") in aliases:
                return aliases[key.replace("_", "")]
            raise ValueError(f"unknown potential {value!r}; expected one of {[k.value for k in cls]}")


def potential_value(kind: PotentialKind, t):
    """W(t) >= 0 with wells at t = +-1."""
    t = np.asarray(t, dtype=float)
    if kind is PotentialKind.QUARTIC:
        return 0.25 * (1.0 - t * t) ** 2
    return (1.0 + np.cos(np.pi * t)) / np.pi**2


def potential_derivative(kind: PotentialKind, t):
    """W'(t); the reaction term is -W'(u)."""
    t = np.asarray(t, dtype=float)
    if kind is PotentialKind.QUARTIC:
        return t**3 - t
    return -np.sin(np.pi * t) / np.pi


def potential_second_derivative(kind: PotentialKind, t):
    t = np.asarray(t, dtype=float)
    if kind is PotentialKind.QUARTIC:
        return 3.0 * t * t - 1.0
    return -np.cos(np.pi * t)
