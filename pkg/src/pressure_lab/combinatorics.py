"""Finite-set dynamics: normality, abnormal sets, exceptional sets.

Models here are finite functional graphs standing in for the orbit
structure of an interval map near its singular set.  The one modeling
choice that makes the continuum definitions decidable on finite data is
the ``external`` flag: a node marked external has at least one preimage
outside the node set, and that preimage is guaranteed non-singular.  On
a real map this is the generic situation for any point of the ambient
space, since the node sets we build are postcritical and a preimage
escaping them stays away from the critical locus.

Backward normality is computed as a least fixed point: a node is normal
when it is external or some non-singular in-model preimage is already
normal.  Membership in a cycle alone never confers normality; a chain
of unbounded depth must eventually escape through an external node.
With that convention every enumerated exceptional set provably lies in
the abnormal set, which the fast search path exploits.

Cardinality bounds of the form 3#L + 4 are theorems about maps of a
real interval, not about arbitrary functional graphs: synthetic graphs
with at most one singular node feeding a long cycle of non-external
nodes exceed them as soon as more than eight nodes are allowed.  The
bound checks below therefore stay hard errors at the default budgets
(where graph structure alone forces them) and the docstrings say what
breaks beyond that.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from itertools import combinations, product
from typing import Iterable, Iterator

import numpy as np

from .errors import InternalInvariantError, SizeError, ValidationError

#: brute-force subset enumeration is capped at this many nodes
BRUTE_NODE_CAP = 24
#: abnormal-set cardinality may not exceed 3*#singular + this constant
BOUND_OFFSET = 4


@dataclass(frozen=True)
class FiniteDynamics:
    """A total map on nodes 0..size-1 with singular and external flags."""

    size: int
    forward: tuple[int, ...]
    critical: frozenset[int]
    external: tuple[bool, ...]

    def __post_init__(self):
        if self.size < 1:
            raise ValidationError("model needs at least one node")
        if len(self.forward) != self.size or len(self.external) != self.size:
            raise ValidationError("forward and external must cover every node")
        if any(not 0 <= v < self.size for v in self.forward):
            raise ValidationError("forward map leaves the node set")
        if any(not 0 <= v < self.size for v in self.critical):
            raise ValidationError("critical flags outside the node set")

    def preimages(self, v: int) -> list[int]:
        return [u for u in range(self.size) if self.forward[u] == v]


@dataclass(frozen=True)
class PartialFiniteMap:
    """A map defined on a subset of a larger finite set.

    ``pi`` has domain exactly ``sub`` and takes values anywhere in
    0..big_size-1.
    """

    big_size: int
    sub: frozenset[int]
    pi: dict[int, int]

    def __post_init__(self):
        if any(not 0 <= v < self.big_size for v in self.sub):
            raise ValidationError("sub must live inside the big set")
        if set(self.pi) != set(self.sub):
            raise ValidationError("pi must be defined exactly on sub")
        if any(not 0 <= v < self.big_size for v in self.pi.values()):
            raise ValidationError("pi leaves the big set")


@dataclass(frozen=True)
class TecCheck:
    lhs: int
    rhs: int
    holds: bool


@dataclass(frozen=True)
class ExceptionalEnumeration:
    """All accepted exceptional sets plus their union.

    ``sigma_max`` is always the union of ``all_sets``.  On models coming
    from real maps the union is itself accepted and appears in
    ``all_sets``; synthetic graphs whose accepted sets contain singular
    nodes can break that closure, in which case a warning is recorded
    instead of an error.
    """

    all_sets: tuple[frozenset[int], ...]
    sigma_max: frozenset[int]
    cardinality_bound: int
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class BoundAuditRow:
    critical_count: int
    samples: int
    max_sigma_max: int
    bound: int
    floor: int


@dataclass(frozen=True)
class BoundAuditReport:
    rows: tuple[BoundAuditRow, ...]
    total_samples: int
    seed: int


# ----------------------------------------------------------------------
# rank-1 preimage sets and the cardinality inequality


def rank1_set(pm: PartialFiniteMap) -> frozenset[int]:
    """Elements of the domain with exactly one preimage in the domain."""
    counts = Counter(pm.pi.values())
    return frozenset(x for x in pm.sub if counts.get(x, 0) == 1)


def check_tec(pm: PartialFiniteMap) -> TecCheck:
    """The three-to-one cardinality inequality for partial maps.

    lhs counts domain points that are also images; rhs allows three per
    never-hit domain point plus one per rank-1 point whose image is
    rank-1 again.  Holds for every finite partial map.
    """
    image = set(pm.pi.values())
    lhs = len(pm.sub & image)
    cross = rank1_set(pm)
    cross_image = {pm.pi[x] for x in cross}
    rhs = 3 * len(pm.sub - image) + len(cross & cross_image)
    return TecCheck(lhs=lhs, rhs=rhs, holds=lhs <= rhs)


def enumerate_partial_maps(max_size: int) -> Iterator[PartialFiniteMap]:
    """Every partial map on every ground set of at most max_size points.

    For ground-set size m there are (1+m)^m instances (choice of domain
    and of values), so max_size=5 yields 2+9+64+625+7776 = 8476.
    """
    for m in range(1, max_size + 1):
        for k in range(m + 1):
            for sub in combinations(range(m), k):
                for values in product(range(m), repeat=k):
                    yield PartialFiniteMap(
                        big_size=m,
                        sub=frozenset(sub),
                        pi=dict(zip(sub, values)),
                    )


# ----------------------------------------------------------------------
# normality


def _resolve_lam(fd: FiniteDynamics, lam) -> frozenset[int]:
    if lam is None:
        return fd.critical
    lam = frozenset(lam)
    if any(not 0 <= v < fd.size for v in lam):
        raise ValidationError("singular set outside the node set")
    return lam


def normal_set(fd: FiniteDynamics, lam: Iterable[int] | None = None) -> frozenset[int]:
    """Nodes admitting arbitrarily deep backward chains avoiding lam.

    Least fixed point of: normal(v) iff v is external, or some in-model
    preimage u of v with u outside lam is normal.  Stabilizes in at most
    ``size`` rounds because the normal set only grows.
    """
    lam = _resolve_lam(fd, lam)
    normal = {v for v in range(fd.size) if fd.external[v]}
    while True:
        grown = {fd.forward[u] for u in normal if u not in lam} - normal
        if not grown:
            return frozenset(normal)
        normal |= grown


def is_normal(fd: FiniteDynamics, x: int, lam: Iterable[int] | None = None) -> bool:
    if not 0 <= x < fd.size:
        raise ValidationError(f"node {x} outside the model")
    return x in normal_set(fd, lam)


def abnormal_set(
    fd: FiniteDynamics,
    lam: Iterable[int] | None = None,
    check_bound: bool = True,
) -> frozenset[int]:
    """Complement of the normal set.

    With check_bound the 3#lam+4 cardinality bound is asserted; it is a
    real-map theorem, and on synthetic graphs it can genuinely fail
    (take every external flag false: nothing is normal).  Sweeps over
    random graphs must pass check_bound=False.
    """
    lam = _resolve_lam(fd, lam)
    s = frozenset(range(fd.size)) - normal_set(fd, lam)
    if check_bound and len(s) > 3 * len(lam) + BOUND_OFFSET:
        raise InternalInvariantError(
            f"abnormal set has {len(s)} nodes, above 3*{len(lam)}+{BOUND_OFFSET}; "
            f"model forward={fd.forward} critical={sorted(lam)} "
            f"external={fd.external}"
        )
    return s


# ----------------------------------------------------------------------
# exceptional sets


def _accept_subset(fd: FiniteDynamics, lam: frozenset[int], sigma: frozenset[int]) -> bool:
    # set-logic acceptance used by the fast path; the brute path below
    # re-derives the same predicate in bit arithmetic
    if not sigma:
        return False
    if any(fd.external[v] for v in sigma):
        return False
    if any(fd.forward[v] not in sigma for v in sigma):
        return False
    extra = {u for u in range(fd.size) if u not in sigma and fd.forward[u] in sigma}
    return bool(extra) and extra <= lam


def brute_force_exceptional_sets(
    fd: FiniteDynamics, lam: Iterable[int] | None = None
) -> list[frozenset[int]]:
    """Accepted sets by enumeration of all subsets, in bit arithmetic.

    Independent of the fast path on purpose: agreement between the two
    is asserted by exceptional_sets.
    """
    lam = _resolve_lam(fd, lam)
    n = fd.size
    if n > BRUTE_NODE_CAP:
        raise SizeError(f"{n} nodes is beyond the {BRUTE_NODE_CAP}-node brute cap")
    ext_mask = sum(1 << v for v in range(n) if fd.external[v])
    accepted: list[int] = []
    chunk = 1 << 20
    for start in range(0, 1 << n, chunk):
        m = np.arange(start, min(start + chunk, 1 << n), dtype=np.int64)
        ok = (m != 0) & ((m & ext_mask) == 0)
        has_extra = np.zeros(m.shape, dtype=bool)
        for u in range(n):
            in_u = ((m >> u) & 1).astype(bool)
            in_fu = ((m >> fd.forward[u]) & 1).astype(bool)
            ok &= ~(in_u & ~in_fu)  # forward invariance
            extra = ~in_u & in_fu
            if u not in lam:
                ok &= ~extra  # extra preimage outside lam disqualifies
            has_extra |= extra
        ok &= has_extra
        accepted.extend(int(v) for v in m[ok])
    return [
        frozenset(v for v in range(n) if (s >> v) & 1) for s in accepted
    ]


def _fast_exceptional_sets(
    fd: FiniteDynamics, lam: frozenset[int]
) -> list[frozenset[int]]:
    # every accepted set lies inside the abnormal set (an accepted set
    # has no external node, so a normal member would need a normal
    # non-singular preimage in the set, and the minimal normality stage
    # of such a member gives a contradiction); search there only
    s_lam = sorted(abnormal_set(fd, lam, check_bound=False))
    if len(s_lam) > BRUTE_NODE_CAP:
        raise SizeError(
            f"abnormal set has {len(s_lam)} nodes; subset search refused"
        )
    out = []
    for k in range(1, len(s_lam) + 1):
        for combo in combinations(s_lam, k):
            sigma = frozenset(combo)
            if _accept_subset(fd, lam, sigma):
                out.append(sigma)
    return out


def exceptional_sets(
    fd: FiniteDynamics, lam: Iterable[int] | None = None
) -> ExceptionalEnumeration:
    """All exceptional sets for the given singular set, plus their union.

    A subset is accepted when it is nonempty, forward invariant, free of
    external nodes, and its in-model extra preimages are a nonempty
    subset of lam.  Up to the brute cap the subset enumeration and the
    abnormal-set-restricted search are both run and must agree exactly.
    """
    lam = _resolve_lam(fd, lam)
    fast = _fast_exceptional_sets(fd, lam)
    if fd.size <= BRUTE_NODE_CAP:
        brute = brute_force_exceptional_sets(fd, lam)
        if set(brute) != set(fast):
            raise InternalInvariantError(
                f"search paths disagree: brute {sorted(map(sorted, brute))} "
                f"vs fast {sorted(map(sorted, fast))} on forward={fd.forward}"
            )
    all_sets = tuple(sorted(fast, key=lambda s: (len(s), sorted(s))))
    sigma_max = frozenset().union(*all_sets) if all_sets else frozenset()
    warnings: tuple[str, ...] = ()
    if all_sets and sigma_max not in set(all_sets):
        warnings = (
            "union of accepted sets is not itself accepted; sigma_max is "
            "reported as the union (synthetic-graph artifact: some accepted "
            "set contains a singular node)",
        )
    return ExceptionalEnumeration(
        all_sets=all_sets,
        sigma_max=sigma_max,
        cardinality_bound=3 * len(lam) + BOUND_OFFSET,
        warnings=warnings,
    )


# ----------------------------------------------------------------------
# random models and the cardinality audit


def random_finite_dynamics(
    rng: np.random.Generator,
    size: int,
    crit_p: float = 0.25,
    ext_p: float = 0.5,
) -> FiniteDynamics:
    """Uniform forward map with Bernoulli singular and external flags."""
    forward = tuple(int(v) for v in rng.integers(0, size, size))
    critical = frozenset(int(v) for v in np.flatnonzero(rng.random(size) < crit_p))
    external = tuple(bool(v) for v in rng.random(size) < ext_p)
    return FiniteDynamics(size=size, forward=forward, critical=critical, external=external)


def sigma_max_bound_audit(
    sample_count: int,
    node_budget: int = 8,
    seed: int = 0,
) -> BoundAuditReport:
    """Random sweep recording the largest sigma_max per singular count.

    Asserts #sigma_max <= 3n+4 for every sample; with node_budget <= 8
    the graph structure alone forces the bound (an accepted set never
    contains its own witnessing extra preimage), while larger budgets
    admit synthetic long-cycle violations, so raising the budget can
    legitimately trip the invariant error.  The 3n-1 floor is reported
    for comparison, never asserted: realizing it takes bespoke
    constructions, not uniform sampling.
    """
    if sample_count < 1 or node_budget < 1:
        raise ValidationError("budgets must be positive")
    rng = np.random.default_rng(seed)
    per_n: dict[int, list[int]] = {}
    for _ in range(sample_count):
        size = int(rng.integers(1, node_budget + 1))
        fd = random_finite_dynamics(rng, size)
        enum = exceptional_sets(fd)
        n = len(fd.critical)
        if len(enum.sigma_max) > 3 * n + BOUND_OFFSET:
            raise InternalInvariantError(
                f"sigma_max of size {len(enum.sigma_max)} exceeds 3*{n}+"
                f"{BOUND_OFFSET} on forward={fd.forward}"
            )
        per_n.setdefault(n, []).append(len(enum.sigma_max))
    rows = tuple(
        BoundAuditRow(
            critical_count=n,
            samples=len(sizes),
            max_sigma_max=max(sizes),
            bound=3 * n + BOUND_OFFSET,
            floor=max(0, 3 * n - 1),
        )
        for n, sizes in sorted(per_n.items())
    )
    return BoundAuditReport(rows=rows, total_samples=sample_count, seed=seed)
