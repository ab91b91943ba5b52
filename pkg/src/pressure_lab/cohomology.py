"""The potential transform: exceptional sets on the line and the
coboundary that removes removable log poles.

Pipeline: detect preperiodic singular orbits, build a finite
postcritical model, enumerate its exceptional sets, run the exact
rational recursion for the pole coefficients of the corrector h, and
assemble the transformed potential G = u + h(f(x)) - h(x) together with
every coefficient identity that makes the construction checkable.

Closure of the construction: a maximal exceptional set has all its
extra preimages inside the singular set, so every real preimage of it
is either in the set again or critical.  The coefficient recursion is
run in exact fractions (local orders are integers), which is why the
vanishing of the transformed coefficients on the exceptional set is
asserted exactly rather than within a tolerance.

Backward search on the real line is complete on the finite model: a
finite forward-invariant set whose extra preimages are critical must
lie inside the postcritical complex, because a backward chain that
never leaves it cannot exist for a topologically exact map unless it
runs through the modeled orbits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .combinatorics import ExceptionalEnumeration, FiniteDynamics, exceptional_sets
from .errors import (
    AlphaRecursionError,
    ClassAError,
    InternalInvariantError,
    InvariantError,
    ValidationError,
)
from .map_core import IntervalMap
from .potentials import UPotential
from .registry import map_info

#: two orbit points this close are revisit candidates
REVISIT_TOL = 1e-9
#: a candidate cycle must re-close under iteration this tightly
RECLOSE_TOL = 1e-8
#: a preimage this close to a node counts as the node
NODE_MATCH = 1e-7
#: preimages in the band (NODE_MATCH, AMBIGUOUS_BAND) trigger a warning
AMBIGUOUS_BAND = 1e-5
#: composite evaluation this close to a removable point takes a limit
NUDGE_TRIGGER = 1e-9
NUDGE_OFFSET = 1e-7


@dataclass(frozen=True)
class PostcriticalModel:
    """Finite model of the singular orbits with real coordinates.

    ``finite_dynamics`` is None when no singular orbit could be decided
    (then nothing downstream can be exceptional at this resolution).
    Node k sits at ``embedding[k]``; ``preperiod[k]`` counts the steps
    until its orbit enters a cycle and ``cycle_id[k]`` says which one.
    """

    finite_dynamics: FiniteDynamics | None
    embedding: tuple[float, ...]
    local_orders: tuple[int, ...]
    preperiod: tuple[int, ...]
    cycle_id: tuple[int, ...]
    tolerance: float
    verdicts: tuple[tuple[float, str], ...]
    exact: bool
    warnings: tuple[str, ...] = ()

    @property
    def decided(self) -> bool:
        return bool(self.verdicts) and all(v == "preperiodic" for _, v in self.verdicts)


@dataclass(frozen=True)
class CohomologyData:
    """Everything the transform produces, with exact coefficients."""

    sigma_max: tuple[float, ...]
    alpha: dict[float, Fraction]
    h_terms: tuple[tuple[float, float], ...]
    h: UPotential | None
    G: UPotential
    b_coeffs: dict[float, Fraction]
    lambda_u: tuple[float, ...]
    lambda_G: tuple[float, ...]
    exceptional: bool
    warnings: tuple[str, ...]
    model: PostcriticalModel | None


def lambda_set(u: UPotential) -> tuple[float, ...]:
    """Centers where the potential has a genuine log pole."""
    return tuple(sorted(c for c, b in u.singular_terms if b > 0))


# ----------------------------------------------------------------------
# model construction


def _cycle_structure(forward: tuple[int, ...]):
    n = len(forward)
    reach = list(range(n))
    for _ in range(n):
        reach = [forward[v] for v in reach]
    cyclic = sorted(set(reach))
    cycles: list[tuple[int, ...]] = []
    placed: set[int] = set()
    for v in cyclic:
        if v in placed:
            continue
        cyc = [v]
        w = forward[v]
        while w != v:
            cyc.append(w)
            w = forward[w]
        placed.update(cyc)
        cycles.append(tuple(cyc))
    index = {v: k for k, cyc in enumerate(cycles) for v in cyc}
    preperiod, cycle_id = [], []
    for v in range(n):
        steps, w = 0, v
        while w not in index:
            w = forward[w]
            steps += 1
        preperiod.append(steps)
        cycle_id.append(index[w])
    return tuple(preperiod), tuple(cycle_id)


def _exact_model(m: IntervalMap, lam: tuple[float, ...]) -> PostcriticalModel | None:
    info = map_info(m.name) if m.name else None
    if info is None or info.exact_model is None:
        return None
    exact = info.exact_model
    crit_coords = {exact.nodes[i] for i, _ in exact.critical}
    # solver output may be an ulp off the registry's algebraic values
    if not all(any(abs(c - e) <= 1e-9 for e in crit_coords) for c in lam):
        return None
    crit_idx = frozenset(
        i for i, _ in exact.critical
        if any(abs(exact.nodes[i] - c) <= 1e-9 for c in lam)
    )
    orders = [1] * len(exact.nodes)
    for i, order in exact.critical:
        orders[i] = order
    fd = FiniteDynamics(
        size=len(exact.nodes),
        forward=exact.forward,
        critical=crit_idx,
        external=exact.external,
    )
    preperiod, cycle_id = _cycle_structure(exact.forward)
    return PostcriticalModel(
        finite_dynamics=fd,
        embedding=exact.nodes,
        local_orders=tuple(orders),
        preperiod=preperiod,
        cycle_id=cycle_id,
        tolerance=0.0,
        verdicts=tuple((c, "preperiodic") for c in lam),
        exact=True,
    )


def postcritical_model(
    m: IntervalMap,
    u: UPotential,
    max_iter: int = 10_000,
    tol: float = REVISIT_TOL,
) -> PostcriticalModel:
    """Iterate each singular center until its orbit provably closes.

    A revisit within ``tol`` only counts once the implied cycle re-closes
    under iteration within the coarser RECLOSE_TOL; near-recurrence of an
    aperiodic orbit then keeps iterating instead of minting a false
    cycle.  Centers that never close are reported with an undecided
    verdict and kept out of the node set: a point on an infinite forward
    orbit can never belong to, or map into, a finite invariant set.
    """
    if m.kind == "piecewise_linear":
        raise ClassAError("piecewise-linear maps carry no smooth critical structure")
    if max_iter < 1:
        raise ValidationError("max_iter must be >= 1")
    if not u.in_u_class:
        raise ValidationError("potential has negative singular coefficients")
    lam = lambda_set(u)
    if not lam:
        raise ValidationError("potential has no singular centers to model")
    for c in lam:
        if not any(abs(cp.location - c) <= 1e-9 for cp in m.critical_points):
            raise ValidationError(f"singular center {c} is not a critical point")

    fast = _exact_model(m, lam)
    if fast is not None:
        return fast

    warnings: list[str] = []
    verdicts: list[tuple[float, str]] = []
    orbits: list[list[float]] = []
    for c in lam:
        pts = [float(c)]
        closed = False
        for _ in range(max_iter):
            nxt = m.eval(pts[-1])
            hit = next((j for j, p in enumerate(pts) if abs(p - nxt) <= tol), None)
            if hit is not None:
                cyc = pts[hit:]
                period = len(cyc)
                ok = all(abs(m.iterate(p, period) - p) <= RECLOSE_TOL for p in cyc)
                if ok:
                    closed = True
                    break
                warnings.append(
                    f"near-recurrence at {nxt:.12g} for center {c} did not re-close"
                )
            pts.append(nxt)
        verdicts.append((c, "preperiodic" if closed else "undecided"))
        if closed:
            orbits.append(pts)
        else:
            warnings.append(
                f"orbit of {c} shows no cycle within {max_iter} steps at "
                f"tolerance {tol:g}; treated as non-exceptional at this resolution"
            )

    if not orbits:
        return PostcriticalModel(
            finite_dynamics=None,
            embedding=(),
            local_orders=(),
            preperiod=(),
            cycle_id=(),
            tolerance=tol,
            verdicts=tuple(verdicts),
            exact=False,
            warnings=tuple(warnings),
        )

    nodes: list[float] = []
    for pts in orbits:
        for p in pts:
            if all(abs(p - q) > tol for q in nodes):
                nodes.append(p)

    def node_of(x: float) -> int:
        best = min(range(len(nodes)), key=lambda k: abs(nodes[k] - x))
        if abs(nodes[best] - x) > 100 * tol:
            raise InternalInvariantError(
                f"image {x:.12g} matches no node within {100 * tol:g}"
            )
        return best

    forward = tuple(node_of(m.eval(p)) for p in nodes)
    crit_idx = frozenset(k for k, p in enumerate(nodes) if any(abs(p - c) <= tol for c in lam))
    orders = []
    for p in nodes:
        match = [cp for cp in m.critical_points if abs(cp.location - p) <= 1e-9]
        orders.append(match[0].local_order if match else 1)

    external = []
    for p in nodes:
        flags = []
        for q in m.preimages(p, 1e-12):
            d = min(abs(q - r) for r in nodes)
            if NODE_MATCH < d < AMBIGUOUS_BAND:
                warnings.append(
                    f"preimage {q:.12g} of node {p:.12g} sits in the ambiguous "
                    f"band; treated as external"
                )
            flags.append(d > NODE_MATCH)
        external.append(any(flags))

    fd = FiniteDynamics(
        size=len(nodes),
        forward=forward,
        critical=crit_idx,
        external=tuple(external),
    )
    preperiod, cycle_id = _cycle_structure(forward)
    return PostcriticalModel(
        finite_dynamics=fd,
        embedding=tuple(nodes),
        local_orders=tuple(orders),
        preperiod=preperiod,
        cycle_id=cycle_id,
        tolerance=tol,
        verdicts=tuple(verdicts),
        exact=False,
        warnings=tuple(warnings),
    )


# ----------------------------------------------------------------------
# exceptional sets in real coordinates


def _sigma_max_with_provenance(
    model: PostcriticalModel,
) -> tuple[tuple[float, ...], ExceptionalEnumeration | None, tuple[str, ...]]:
    if model.finite_dynamics is None:
        return (), None, (
            "undecided singular orbits: exceptionality not detectable at this "
            "resolution",
        )
    warns = tuple(
        f"orbit of {c} undecided; its contribution is missing from the model"
        for c, v in model.verdicts
        if v == "undecided"
    )
    enum = exceptional_sets(model.finite_dynamics)
    coords = tuple(sorted(model.embedding[k] for k in enum.sigma_max))
    return coords, enum, warns + enum.warnings


def sigma_max_real(
    m: IntervalMap, u: UPotential, model: PostcriticalModel
) -> tuple[float, ...]:
    """Union of exceptional sets, as sorted real coordinates."""
    coords, _, _ = _sigma_max_with_provenance(model)
    return coords


# ----------------------------------------------------------------------
# the coefficient recursion (exact arithmetic)


def alpha_coefficients(
    model: PostcriticalModel, sigma_nodes: frozenset[int]
) -> dict[int, Fraction]:
    """Pole coefficients of the corrector on the exceptional nodes.

    Per terminal cycle, the governing value is the best (largest)
    product of reciprocal local orders over all singular approaches to
    that cycle; cycle nodes carry that value minus one, and the value
    propagates backwards through the exceptional set one preimage step
    at a time.  Exact rational arithmetic throughout.
    """
    if not sigma_nodes:
        return {}
    fd = model.finite_dynamics
    if fd is None:
        raise ValidationError("model carries no nodes")
    orders = model.local_orders

    cycles_in_sigma = set()
    for v in sigma_nodes:
        if model.preperiod[v] == 0:
            cycles_in_sigma.add(model.cycle_id[v])

    alpha_hat: dict[int, Fraction] = {}
    for cid in cycles_in_sigma:
        best: Fraction | None = None
        for xi in fd.critical:
            if model.cycle_id[xi] != cid:
                continue
            prod = Fraction(1)
            w = xi
            for _ in range(model.preperiod[xi]):
                prod /= orders[w]
                w = fd.forward[w]
            if best is None or prod > best:
                best = prod
        if best is None:
            raise AlphaRecursionError(
                f"cycle {cid} inside the exceptional set has no singular approach"
            )
        alpha_hat[cid] = best

    alpha: dict[int, Fraction] = {}
    for v in sigma_nodes:
        if model.preperiod[v] == 0:
            alpha[v] = alpha_hat[model.cycle_id[v]] - 1
    for _ in range(fd.size):
        grew = False
        for v in sigma_nodes:
            if v in alpha:
                continue
            w = fd.forward[v]
            if w in alpha:
                alpha[v] = (alpha[w] + 1) * orders[v] - 1
                grew = True
        if len(alpha) == len(sigma_nodes):
            return alpha
        if not grew:
            break
    raise AlphaRecursionError(
        f"recursion stalled with {len(alpha)} of {len(sigma_nodes)} nodes resolved"
    )


# ----------------------------------------------------------------------
# assembly


def _h_potential(h_terms: tuple[tuple[float, float], ...]) -> UPotential:
    return UPotential(
        lambda x: np.zeros(np.shape(x)),
        h_terms,
        kind="custom",
        name="corrector",
    )


def build_G(m: IntervalMap, model: PostcriticalModel) -> CohomologyData:
    """Assemble the transformed potential and verify every identity.

    The regular part of G is evaluated by the composite formula
    log|Df(x)| + h(f(x)) - h(x) minus its known singular terms, with a
    short limit step when x falls on a removable point.  The singular
    coefficients are computed independently in exact fractions, so the
    decomposition is verified without symbolic cancellation.
    """
    from .potentials import geometric_potential

    u = geometric_potential(m)
    lam_u = lambda_set(u)
    sigma, enum, warns = _sigma_max_with_provenance(model)
    warnings = list(warns)

    if not sigma:
        return CohomologyData(
            sigma_max=(),
            alpha={},
            h_terms=(),
            h=None,
            G=u,
            b_coeffs={},
            lambda_u=lam_u,
            lambda_G=lam_u,
            exceptional=False,
            warnings=tuple(warnings),
            model=model,
        )

    fd = model.finite_dynamics
    sigma_nodes = frozenset(
        k for k, p in enumerate(model.embedding) if any(s == p for s in sigma)
    )
    alpha_nodes = alpha_coefficients(model, sigma_nodes)
    for v, a in alpha_nodes.items():
        if not (-1 < a <= 0):
            raise InvariantError(
                f"coefficient {a} at node {model.embedding[v]} outside (-1, 0]"
            )
    alpha = {model.embedding[v]: a for v, a in alpha_nodes.items()}

    h_terms = tuple(
        (xi, float(a)) for xi, a in sorted(alpha.items()) if a != 0
    )
    h = _h_potential(h_terms)

    # b on the full preimage of the exceptional set, plus raw critical
    # leftovers elsewhere; every preimage must be a node or critical
    def order_at(x: float) -> int:
        for cp in m.critical_points:
            if abs(cp.location - x) <= 1e-9:
                return cp.local_order
        return 1

    def alpha_at(x: float) -> Fraction:
        for xi, a in alpha.items():
            if abs(xi - x) <= 1e-9:
                return a
        return Fraction(0)

    # snap solver output onto the exact node and critical coordinates so
    # coefficient keys are clean and the matching below is unambiguous
    anchors = sorted({*sigma, *(cp.location for cp in m.critical_points)})

    def snapped(x: float) -> float:
        for a in anchors:
            if abs(x - a) <= 1e-9:
                return a
        return x

    b_coeffs: dict[float, Fraction] = {}
    preimage_points: list[float] = []
    for s in sigma:
        for q in m.preimages(s, 1e-12):
            q = snapped(q)
            if all(abs(q - r) > 1e-9 for r in preimage_points):
                preimage_points.append(q)
    for q in preimage_points:
        in_sigma = any(abs(q - s) <= 1e-9 for s in sigma)
        ell = order_at(q)
        if not in_sigma and ell == 1:
            raise InvariantError(
                f"preimage {q:.12g} of the exceptional set is neither in it "
                f"nor critical; the finite model disagrees with the map"
            )
        b = (ell - 1) + alpha_at(m.eval(q)) * ell - alpha_at(q)
        b_coeffs[q] = b
        if in_sigma and b != 0:
            raise InvariantError(f"coefficient {b} at exceptional point {q} nonzero")
        if ell > 1 and b < 0:
            raise InvariantError(f"negative coefficient {b} at critical point {q}")
    for cp in m.critical_points:
        if all(abs(cp.location - q) > 1e-9 for q in preimage_points):
            b_coeffs[cp.location] = Fraction(cp.local_order - 1)

    lam_G = tuple(sorted(x for x, b in b_coeffs.items() if b > 0))
    if set(lam_G) >= {cp.location for cp in m.critical_points}:
        raise InvariantError("transform failed to remove any singular center")
    if enum is not None and fd is not None:
        lam_G_nodes = frozenset(
            k for k, p in enumerate(model.embedding)
            if any(abs(p - x) <= 1e-9 for x in lam_G)
        )
        residual = exceptional_sets(fd, lam_G_nodes)
        if residual.all_sets:
            raise InvariantError(
                "transformed potential still admits exceptional sets"
            )

    g_singular = tuple((x, float(b)) for x, b in sorted(b_coeffs.items()) if b != 0)
    degenerate = np.array(
        sorted({*sigma, *(q for q in b_coeffs), *(cp.location for cp in m.critical_points)})
    )
    mid = 0.5 * (m.domain[0] + m.domain[1])

    def g_regular(x):
        xs = np.asarray(x, dtype=float)
        flat = np.atleast_1d(xs).astype(float).copy()
        if degenerate.size:
            d = np.abs(flat[:, None] - degenerate[None, :])
            j = np.argmin(d, axis=1)
            near = d[np.arange(flat.size), j] < NUDGE_TRIGGER
            if np.any(near):
                centers = degenerate[j[near]]
                flat[near] = centers + np.where(centers <= mid, NUDGE_OFFSET, -NUDGE_OFFSET)
        val = np.log(np.abs(m._df(flat))) + h(m._f(flat)) - h(flat)
        for c, b in g_singular:
            with np.errstate(divide="ignore"):
                val = val - b * np.log(np.abs(flat - c))
        return val.reshape(np.shape(xs)) if np.ndim(xs) else float(val[0])

    G = UPotential(g_regular, g_singular, kind="transformed", name="transformed log|Df|")

    return CohomologyData(
        sigma_max=sigma,
        alpha=alpha,
        h_terms=h_terms,
        h=h,
        G=G,
        b_coeffs=b_coeffs,
        lambda_u=lam_u,
        lambda_G=lam_G,
        exceptional=True,
        warnings=tuple(warnings),
        model=model,
    )


def transform_pipeline(
    m: IntervalMap,
    u: UPotential,
    max_iter: int = 10_000,
    tol: float = REVISIT_TOL,
) -> CohomologyData:
    """End-to-end: model the singular orbits, then transform.

    Potentials with no singular part (or maps outside the smooth class
    with pole-free potentials) pass through unchanged: nothing is
    exceptional, the corrector is absent.
    """
    lam = lambda_set(u)
    if not lam:
        return CohomologyData(
            sigma_max=(),
            alpha={},
            h_terms=(),
            h=None,
            G=u,
            b_coeffs={},
            lambda_u=(),
            lambda_G=(),
            exceptional=False,
            warnings=(),
            model=None,
        )
    if u.kind != "geometric":
        raise ValidationError(
            "only the geometric potential's singular structure is supported"
        )
    model = postcritical_model(m, u, max_iter=max_iter, tol=tol)
    data = build_G(m, model)
    return data


def verify_hidden_pressure_equivalence(
    m: IntervalMap,
    data: CohomologyData,
    t_samples,
    depth: int = 12,
    base: float | None = None,
):
    """Compare the two routes to the hidden pressure at each t.

    Route one evaluates the transformed potential directly; route two
    keeps the raw potential and applies the boundary correction from
    the corrector at the leaves and the root.  The two agree by the
    telescoping identity; the report records the worst gap.
    """
    from . import pressure

    if base is None:
        base = pressure.pick_base_point(m, data, seed=0)
    entries = []
    for t in t_samples:
        via_g = pressure.tree_pressure(m, data.G, t, base, depth).value
        if data.h is None:
            via_raw = via_g
        else:
            from .potentials import geometric_potential

            via_raw = pressure.hidden_tree_pressure(
                m, geometric_potential(m), data.h, t, base, depth
            ).value
        entries.append((float(t), via_g, via_raw, abs(via_g - via_raw)))
    max_gap = max(e[3] for e in entries) if entries else 0.0
    return {"entries": tuple(entries), "max_gap": max_gap}
