"""Named map registry.

Ships the standard examples: the degree-2 and degree-3 Chebyshev maps,
the full tent map, the logistic map at its Chebyshev-conjugate parameter
(``ulam``), and the quadratic family x^2 + a on its invariant core
interval.  For maps whose critical orbits land on algebraic fixed points
the registry also carries the postcritical data exactly (node values,
transition table, external-preimage flags and the top expansion rate
over periodic orbits), so downstream constructions can bypass floating
tolerances entirely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError
from .map_core import IntervalMap, piecewise_linear_map, polynomial_map


@dataclass(frozen=True)
class ExactPostcritical:
    """Exact finite model of the critical orbits.

    ``nodes`` are real coordinates (exact in binary floating point for
    all registry entries), ``forward`` maps node index to node index,
    ``critical`` lists indices of nodes that are critical points with
    their local orders, and ``external`` marks nodes having at least one
    preimage outside the node set (that preimage never being critical).
    """

    nodes: tuple[float, ...]
    forward: tuple[int, ...]
    critical: tuple[tuple[int, int], ...]  # (node index, local order)
    external: tuple[bool, ...]


@dataclass(frozen=True)
class MapInfo:
    build: object  # () -> IntervalMap
    exact_model: ExactPostcritical | None
    #: sup over periodic orbits of the averaged log-derivative, exact
    theta_max_geometric: float | None
    entropy: float | None


def _chebyshev2() -> IntervalMap:
    return polynomial_map([-1.0, 0.0, 2.0], (-1.0, 1.0), name="chebyshev2")


def _chebyshev3() -> IntervalMap:
    return polynomial_map([0.0, -3.0, 0.0, 4.0], (-1.0, 1.0), name="chebyshev3")


def _tent() -> IntervalMap:
    return piecewise_linear_map([0.0, 0.5, 1.0], [0.0, 1.0, 0.0], name="tent")


def _ulam() -> IntervalMap:
    return polynomial_map([0.0, 4.0, -4.0], (0.0, 1.0), name="ulam")


_REGISTRY: dict[str, MapInfo] = {
    # critical orbit 0 -> -1 -> 1 -> 1; the top rate log 4 sits on the
    # boundary fixed point
    "chebyshev2": MapInfo(
        build=_chebyshev2,
        exact_model=ExactPostcritical(
            nodes=(0.0, -1.0, 1.0),
            forward=(1, 2, 2),
            critical=((0, 2),),
            external=(True, False, False),
        ),
        theta_max_geometric=math.log(4.0),
        entropy=math.log(2.0),
    ),
    # critical orbits 1/2 -> -1 -> -1 and -1/2 -> 1 -> 1
    "chebyshev3": MapInfo(
        build=_chebyshev3,
        exact_model=ExactPostcritical(
            nodes=(0.5, -0.5, -1.0, 1.0),
            forward=(2, 3, 2, 3),
            critical=((0, 2), (1, 2)),
            external=(True, True, False, False),
        ),
        theta_max_geometric=math.log(9.0),
        entropy=math.log(3.0),
    ),
    "tent": MapInfo(
        build=_tent,
        exact_model=None,
        theta_max_geometric=math.log(2.0),
        entropy=math.log(2.0),
    ),
    # critical orbit 1/2 -> 1 -> 0 -> 0; |Df(0)| = 4 tops the scale
    "ulam": MapInfo(
        build=_ulam,
        exact_model=ExactPostcritical(
            nodes=(0.5, 1.0, 0.0),
            forward=(1, 2, 2),
            critical=((0, 2),),
            external=(True, False, False),
        ),
        theta_max_geometric=math.log(4.0),
        entropy=math.log(2.0),
    ),
}


def registry_names() -> list[str]:
    return sorted(_REGISTRY) + ["quadratic:<a>"]


def map_info(name: str) -> MapInfo | None:
    """Registry metadata for a named map, or None."""
    return _REGISTRY.get(name)


def named_map(name: str) -> IntervalMap:
    """Build a registry map.

    ``quadratic:<a>`` (also accepted as ``quadratic(<a>)``) builds
    x^2 + a on its invariant core [a, a^2 + a]; the parameter must give
    a genuinely two-branch repelling system, which restricts a to
    [-2, -1).
    """
    key = name.strip()
    if key in _REGISTRY:
        return _REGISTRY[key].build()
    param = None
    if key.startswith("quadratic:"):
        param = key.split(":", 1)[1]
    elif key.startswith("quadratic(") and key.endswith(")"):
        param = key[len("quadratic(") : -1]
    if param is not None:
        try:
            a = float(param)
        except ValueError as exc:
            raise ValidationError(f"bad quadratic parameter {param!r}") from exc
        return quadratic_map(a)
    raise ValidationError(f"unknown named map {name!r}")


def quadratic_map(a: float) -> IntervalMap:
    if not -2.0 <= a < -1.0:
        raise ValidationError(
            f"quadratic parameter must lie in [-2, -1) for an invariant "
            f"two-branch core, got {a}"
        )
    lo, hi = a, a * a + a
    return polynomial_map([a, 0.0, 1.0], (lo, hi), name=f"quadratic:{a}")
