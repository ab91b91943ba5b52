"""Potentials: a regular part plus log singularities at marked points.

A potential here is g(x) + sum_c b(c) log|x - c| with g evaluable on
the whole domain.  Nonnegative coefficients b(c) put the potential in
the admissible class; intermediates with negative coefficients are
allowed internally but flagged.  Evaluation inside ``POLE_GUARD`` of a
center with b > 0 returns -inf as a sentinel rather than raising:
downstream tree and operator weights treat such points as carrying zero
weight, so the sentinel composes correctly with exp().

The geometric potential log|Df| of a polynomial map is represented
exactly by deflating the derivative at its interior zeros: the leftover
factor never vanishes inside the domain, so the regular part is smooth
and each critical point c contributes the singular coefficient
(local_order(c) - 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ValidationError
from .map_core import IntervalMap

#: evaluation closer than this to a singular center hits the sentinel
POLE_GUARD = 1e-13


@dataclass(frozen=True)
class UPotential:
    """g(x) + sum of b(c) log|x - c| terms.

    ``regular_fn`` must accept numpy arrays.  ``kind`` is a loose tag
    ({geometric, holder, transformed, custom}) used for reporting and
    for registry fast paths, never for dispatch on correctness.
    """

    regular_fn: Callable[[np.ndarray], np.ndarray]
    singular_terms: tuple[tuple[float, float], ...] = ()
    kind: str = "custom"
    name: str | None = None

    def __post_init__(self):
        seen = set()
        for c, _ in self.singular_terms:
            if not math.isfinite(c):
                raise ValidationError("singular centers must be finite")
            if c in seen:
                raise ValidationError(f"duplicate singular center {c}")
            seen.add(c)

    @property
    def in_u_class(self) -> bool:
        return all(b >= 0 for _, b in self.singular_terms)

    @property
    def pole_locations(self) -> tuple[float, ...]:
        return tuple(c for c, b in self.singular_terms if b > 0)

    def __call__(self, x):
        xs = np.asarray(x, dtype=float)
        total = np.asarray(self.regular_fn(xs), dtype=float)
        total = np.broadcast_to(total, xs.shape).copy() if total.shape != xs.shape else total
        for c, b in self.singular_terms:
            if b == 0.0:
                continue
            d = np.abs(xs - c)
            near = d < POLE_GUARD
            with np.errstate(divide="ignore"):
                term = b * np.log(np.where(near, 1.0, d))
            term = np.where(near, -np.inf if b > 0 else np.inf, term)
            total = total + term
        if np.isscalar(x) or np.ndim(x) == 0:
            return float(total)
        return total

    def with_kind(self, kind: str) -> "UPotential":
        return UPotential(self.regular_fn, self.singular_terms, kind, self.name)


def _polyval(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    acc = np.zeros_like(x)
    for c in coeffs[::-1]:
        acc = acc * x + c
    return acc


def _deflate(coeffs: np.ndarray, root: float, times: int) -> np.ndarray:
    """Divide an ascending-coefficient polynomial by (x - root)^times."""
    out = coeffs
    for _ in range(times):
        # synthetic division on descending coefficients
        desc = out[::-1]
        quot = np.empty(desc.size - 1)
        acc = 0.0
        for i, c in enumerate(desc[:-1]):
            acc = acc * root + c
            quot[i] = acc
        out = quot[::-1]
    return out


def geometric_potential(m: IntervalMap) -> UPotential:
    """log|Df| with its critical singularities split out exactly."""
    if m.kind == "piecewise_linear":
        slopes = m._slopes

        def regular(x):
            return np.log(np.abs(m._df(x)))

        if np.any(slopes == 0.0):
            raise ValidationError("flat pieces have no geometric potential")
        return UPotential(regular, (), kind="geometric", name="log|Df|")

    coeffs = m.deriv_coeffs
    terms = []
    for cp in m.critical_points:
        mult = cp.local_order - 1
        coeffs = _deflate(coeffs, cp.location, mult)
        terms.append((cp.location, float(mult)))
    rem = coeffs

    def regular(x):
        return np.log(np.abs(_polyval(rem, np.asarray(x, dtype=float))))

    return UPotential(regular, tuple(terms), kind="geometric", name="log|Df|")


def holder_potential(fn: Callable, name: str | None = None) -> UPotential:
    """A potential with no singular part; fn must be array-capable."""
    return UPotential(fn, (), kind="holder", name=name)


def constant_potential(value: float) -> UPotential:
    v = float(value)
    return UPotential(lambda x: np.full(np.shape(x), v), (), kind="holder", name=f"const {v}")


def zero_potential() -> UPotential:
    return constant_potential(0.0)
