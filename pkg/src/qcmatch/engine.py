"""Query-commit execution of the rounding algorithms.

Examining an edge flips its (memoized) existence coin.  When both endpoints
are unmatched the examination is a *query* and a realized edge joins the
matching irrevocably; with a matched endpoint it is a consequence-free coin
flip.  All four algorithms live here:

* ``greedy_matching``   -- weight-descending scan, the 0.5 baseline,
* ``simple_matching``   -- proposal rounding driven by proportional
                           permutation distributions,
* ``base_matching``     -- the same loop after shrinking LP values and
                           padding B-side degrees with dummy edges,
* ``apx_matching``      -- two-branch wrapper: either two passes of
                           ``base_matching`` (second pass on edges left
                           available) or one pass on the heavy subgraph
                           with a reduced degree cap.

Dummy edges may block endpoints but never appear in reported matchings,
weights, or logs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .instance import Edge, RealizationState, StochasticGraph, sample_realization
from .lpmatch import EPS
from .permdist import PermDistribution, build_proportional_distribution, draw_modified_perm
from .transform import TransformParams, add_dummy_edges, g_transform, heavy_degree_bound

UNEXAMINED = "unexamined"
QUERIED_MATCHED = "queried-realized-matched"
QUERIED_NOT_REALIZED = "queried-not-realized"
COINFLIP_REALIZED = "coinflip-realized"
COINFLIP_NOT_REALIZED = "coinflip-not-realized"

#: query_order entry marking a B vertex blocked by a dummy match; the first
#: tuple element is the B vertex index, not an edge id
DUMMY_BLOCKED = "dummy-blocked-b"

ALGORITHMS = ("greedy", "simple", "alg1", "apx")


@dataclass(frozen=True)
class RunResult:
    """One execution: the matching (original edge ids only), its weight,
    per-edge terminal statuses, the examination event sequence, and which
    round touched each edge.  ``matched_a``/``matched_b`` include endpoints
    blocked by dummy matches; blocking also appears in ``query_order`` as a
    ``DUMMY_BLOCKED`` entry carrying the B vertex index, so the sequence
    replays to the exact matched-state history."""

    matching: frozenset[int]
    weight: float
    edge_log: tuple[str, ...]
    query_order: tuple[tuple[int, str], ...]
    rounds: Mapping[int, int]
    matched_a: frozenset[int]
    matched_b: frozenset[int]
    branch: str | None = None


@dataclass(frozen=True)
class AlgorithmConfig:
    algorithm: str
    params: TransformParams = TransformParams()
    seed: int = 0

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")


# ---------------------------------------------------------------------------
# Greedy baseline
# ---------------------------------------------------------------------------

def greedy_matching(
    graph: StochasticGraph, state: RealizationState, rng: np.random.Generator | None = None
) -> RunResult:
    """Query edges in weight-descending order (ties by id) whenever both
    endpoints are unmatched; commit realized edges.  ``rng`` is accepted for
    signature uniformity; greedy itself is deterministic given the coins."""
    del rng
    order = sorted(range(len(graph.edges)), key=lambda e: (-graph.edges[e].w, e))
    log = [UNEXAMINED] * len(graph.edges)
    events: list[tuple[int, str]] = []
    matched_a: set[int] = set()
    matched_b: set[int] = set()
    matching: set[int] = set()
    for e_id in order:
        e = graph.edges[e_id]
        if e.a in matched_a or e.b in matched_b:
            continue
        realized = sample_realization(graph, state, e_id)
        status = QUERIED_MATCHED if realized else QUERIED_NOT_REALIZED
        log[e_id] = status
        events.append((e_id, status))
        if realized:
            matching.add(e_id)
            matched_a.add(e.a)
            matched_b.add(e.b)
    return RunResult(
        matching=frozenset(matching),
        weight=sum(graph.edges[e].w for e in matching),
        edge_log=tuple(log),
        query_order=tuple(events),
        rounds={e: 1 for e, s in enumerate(log) if s != UNEXAMINED},
        matched_a=frozenset(matched_a),
        matched_b=frozenset(matched_b),
    )


# ---------------------------------------------------------------------------
# Proposal rounding core
# ---------------------------------------------------------------------------

class DistributionCache:
    """Memo for proportional distributions keyed by (vertex, incident edge
    subset); supports are stored in original edge ids so every round of
    every trial on the same (graph, x) can reuse them."""

    def __init__(self, graph: StochasticGraph, x) -> None:
        self.graph = graph
        self.x = tuple(float(v) for v in x)
        self._memo: dict[tuple[int, tuple[int, ...]], tuple[tuple[tuple[int, ...], float], ...]] = {}

    def support_for(self, vertex: int, edge_ids: tuple[int, ...]):
        key = (vertex, edge_ids)
        got = self._memo.get(key)
        if got is None:
            sub, orig_of = _subgraph(self.graph, edge_ids)
            local_x = [0.0] * len(edge_ids)
            for i, orig in enumerate(orig_of):
                local_x[i] = self.x[orig]
            # vertex index is preserved by _subgraph
            dist = build_proportional_distribution(sub, vertex, local_x)
            got = tuple(
                (tuple(orig_of[i] for i in perm), q) for perm, q in dist.support
            )
            self._memo[key] = got
        return got


def _subgraph(graph: StochasticGraph, edge_ids) -> tuple[StochasticGraph, tuple[int, ...]]:
    """Same vertex sets, edges restricted to ``edge_ids`` (sorted);
    returns the restriction and the new-to-original id map."""
    ids = tuple(sorted(edge_ids))
    edges = tuple(
        Edge(id=i, a=graph.edges[e].a, b=graph.edges[e].b, w=graph.edges[e].w, p=graph.edges[e].p)
        for i, e in enumerate(ids)
    )
    sub = StochasticGraph(a_count=graph.a_count, b_count=graph.b_count, edges=edges)
    return sub, ids


@dataclass
class _Round:
    """One compiled proposal round over an augmented, re-indexed graph."""

    aug: StochasticGraph
    x_aug: tuple[float, ...]
    xt_aug: tuple[float, ...]
    orig_of: tuple[int | None, ...]  # per augmented edge: original id or None
    dists: dict[int, PermDistribution]


def _compile_round(
    graph: StochasticGraph,
    x,
    sigma: float | None,
    edge_ids,
    cache: DistributionCache,
) -> _Round:
    sub, orig_of_sub = _subgraph(graph, edge_ids)
    x_sub = [float(x[e]) for e in orig_of_sub]
    if sigma is None:  # no padding, no shrink: plain proposal rounding
        aug, x_aug = sub, tuple(x_sub)
        xt_aug = x_aug
    else:
        aug, x_aug = add_dummy_edges(sub, x_sub, sigma)
        xt_aug = tuple(float(g_transform(v, sigma)) for v in x_aug)
    orig_of: list[int | None] = list(orig_of_sub) + [None] * (len(aug.edges) - len(sub.edges))

    by_orig = {orig: i for i, orig in enumerate(orig_of_sub)}
    dists: dict[int, PermDistribution] = {}
    for v in range(aug.a_count):
        incident = aug.edges_at_a[v]
        support_edges = [e for e in incident if x_aug[e] > 1e-15]
        if not support_edges:
            continue
        if v < graph.a_count:
            key_ids = tuple(sorted(orig_of_sub[e] for e in support_edges))
            support = cache.support_for(v, key_ids)
            local = tuple(
                (tuple(by_orig[o] for o in perm), q) for perm, q in support
            )
            dists[v] = PermDistribution(
                vertex=v,
                support=local,
                targets={e: x_aug[e] for e in incident},
            )
        else:
            # dummy vertex: single p=1 edge with mass x, rest on the empty perm
            (d,) = support_edges
            q = min(x_aug[d], 1.0)
            support = ((tuple([d]), q),) if q >= 1.0 - 1e-15 else (((), 1.0 - q), ((d,), q))
            dists[v] = PermDistribution(vertex=v, support=support, targets={d: x_aug[d]})
    return _Round(aug=aug, x_aug=tuple(x_aug), xt_aug=xt_aug, orig_of=tuple(orig_of), dists=dists)


def _proposal_pass(
    rnd: _Round,
    state: RealizationState,
    rng: np.random.Generator,
    log: list[str],
    events: list[tuple[int, str]],
    rounds: dict[int, int],
    round_no: int,
    matched_a: set[int],
    matched_b: set[int],
) -> tuple[set[int], float]:
    """Walk the augmented A side in a uniform random order; each vertex
    proposes its first realized edge; B accepts first proposals only.
    Returns newly matched original edges and their weight."""
    aug = rnd.aug
    matching: set[int] = set()
    weight = 0.0
    order = rng.permutation(aug.a_count)
    for v in order:
        dist = rnd.dists.get(int(v))
        if dist is None:
            continue
        perm = draw_modified_perm(dist, rnd.x_aug, rnd.xt_aug, aug, rng)
        for e_id in perm:
            e = aug.edges[e_id]
            realized = sample_realization(aug, state, e_id)
            u_free = e.b not in matched_b
            orig = rnd.orig_of[e_id]
            if orig is not None:
                if u_free:
                    status = QUERIED_MATCHED if realized else QUERIED_NOT_REALIZED
                else:
                    status = COINFLIP_REALIZED if realized else COINFLIP_NOT_REALIZED
                log[orig] = status
                events.append((orig, status))
                rounds[orig] = round_no
            if realized:
                if u_free:
                    matched_b.add(e.b)
                    if orig is not None:
                        matching.add(orig)
                        weight += e.w
                        matched_a.add(e.a)
                    else:
                        events.append((e.b, DUMMY_BLOCKED))
                break
    return matching, weight


def simple_matching(
    graph: StochasticGraph,
    x,
    state: RealizationState,
    rng: np.random.Generator,
    cache: DistributionCache | None = None,
) -> RunResult:
    """Proposal rounding with marginals exactly ``x``: uniform A order, each
    vertex examines a proportional permutation until its first realized
    edge, B vertices accept their first proposal."""
    cache = cache or DistributionCache(graph, x)
    rnd = _compile_round(graph, x, None, range(len(graph.edges)), cache)
    log = [UNEXAMINED] * len(graph.edges)
    events: list[tuple[int, str]] = []
    rounds: dict[int, int] = {}
    matched_a: set[int] = set()
    matched_b: set[int] = set()
    matching, weight = _proposal_pass(
        rnd, state, rng, log, events, rounds, 1, matched_a, matched_b
    )
    return RunResult(
        matching=frozenset(matching),
        weight=weight,
        edge_log=tuple(log),
        query_order=tuple(events),
        rounds=rounds,
        matched_a=frozenset(matched_a),
        matched_b=frozenset(matched_b),
    )


def base_matching(
    graph: StochasticGraph,
    x,
    sigma: float,
    state: RealizationState,
    rng: np.random.Generator,
    cache: DistributionCache | None = None,
    edge_subset=None,
) -> RunResult:
    """Shrink ``x`` through the transform, pad B degrees to ``sigma`` with
    dummies, then run the proposal loop with the filtered permutation
    sampler.  Dummy matches block endpoints but are not reported."""
    _check_degrees(graph, x, sigma, edge_subset)
    cache = cache or DistributionCache(graph, x)
    ids = sorted(edge_subset) if edge_subset is not None else range(len(graph.edges))
    rnd = _compile_round(graph, x, sigma, ids, cache)
    log = [UNEXAMINED] * len(graph.edges)
    events: list[tuple[int, str]] = []
    rounds: dict[int, int] = {}
    matched_a: set[int] = set()
    matched_b: set[int] = set()
    matching, weight = _proposal_pass(
        rnd, state, rng, log, events, rounds, 1, matched_a, matched_b
    )
    return RunResult(
        matching=frozenset(matching),
        weight=weight,
        edge_log=tuple(log),
        query_order=tuple(events),
        rounds=rounds,
        matched_a=frozenset(matched_a),
        matched_b=frozenset(matched_b),
    )


def _check_degrees(graph: StochasticGraph, x, sigma: float, edge_subset) -> None:
    included = set(edge_subset) if edge_subset is not None else None
    for u in range(graph.b_count):
        deg = sum(
            x[e] for e in graph.edges_at_b[u] if included is None or e in included
        )
        if deg > sigma + EPS:
            raise ValueError(f"B vertex {u} fractional degree {deg} exceeds sigma={sigma}")


def available_edges(graph: StochasticGraph, run: RunResult) -> frozenset[int]:
    """Edges unexamined by ``run`` with both endpoints unmatched (dummy
    blocking counts as matched); the candidate set for a second pass."""
    out = set()
    for e in graph.edges:
        if (
            run.edge_log[e.id] == UNEXAMINED
            and e.a not in run.matched_a
            and e.b not in run.matched_b
        ):
            out.add(e.id)
    return frozenset(out)


def classify_light(graph: StochasticGraph, x, tau: float) -> tuple[list[int], float, float]:
    """Split edges by the shrunk-to-probability ratio at cap 1.

    Returns (light edge ids with ratio <= tau, their LP mass, total LP
    mass); the branch test of the two-branch rounding compares the two
    masses.
    """
    m = len(graph.edges)
    light = [
        e for e in range(m)
        if float(g_transform(x[e], 1.0)) / graph.edges[e].p <= tau
    ]
    lp_mass = sum(x[e] * graph.edges[e].w for e in range(m))
    omega = sum(x[e] * graph.edges[e].w for e in light)
    return light, omega, lp_mass


def apx_matching(
    graph: StochasticGraph,
    x,
    params: TransformParams,
    state: RealizationState,
    rng: np.random.Generator,
    cache: DistributionCache | None = None,
) -> RunResult:
    """Two-branch rounding around ``base_matching``.

    Classify edges by the shrunk-to-probability ratio at cap 1; if light
    edges carry at least a ``lam`` fraction of the LP mass, run two passes
    (the second on edges still available), else drop the light edges and run
    one pass on the heavy subgraph with the reduced cap implied by ``tau``.
    """
    cache = cache or DistributionCache(graph, x)
    m = len(graph.edges)
    light, omega, lp_mass = classify_light(graph, x, params.tau)

    if omega >= params.lam * lp_mass:
        run1 = base_matching(graph, x, 1.0, state, rng, cache)
        second = available_edges(graph, run1)
        run2 = base_matching(graph, x, 1.0, state, rng, cache, edge_subset=second)
        log = [
            run2.edge_log[e] if run2.edge_log[e] != UNEXAMINED else run1.edge_log[e]
            for e in range(m)
        ]
        rounds = dict(run1.rounds)
        rounds.update({e: 2 for e in run2.rounds})
        return RunResult(
            matching=run1.matching | run2.matching,
            weight=run1.weight + run2.weight,
            edge_log=tuple(log),
            query_order=run1.query_order + run2.query_order,
            rounds=rounds,
            matched_a=run1.matched_a | run2.matched_a,
            matched_b=run1.matched_b | run2.matched_b,
            branch="two-round",
        )

    heavy = sorted(set(range(m)) - set(light))
    sigma = heavy_degree_bound(params.tau)
    for u in range(graph.b_count):
        deg = sum(x[e] for e in graph.edges_at_b[u] if graph.edges[e].id in set(heavy))
        if deg > sigma + EPS:
            raise ValueError(
                f"heavy fractional degree {deg} at B vertex {u} exceeds "
                f"the guaranteed bound {sigma}; x is not an LP optimum"
            )
    run = base_matching(graph, x, sigma, state, rng, cache, edge_subset=heavy)
    return RunResult(
        matching=run.matching,
        weight=run.weight,
        edge_log=run.edge_log,
        query_order=run.query_order,
        rounds=run.rounds,
        matched_a=run.matched_a,
        matched_b=run.matched_b,
        branch="heavy-prune",
    )


# ---------------------------------------------------------------------------
# Replay validation
# ---------------------------------------------------------------------------

def validate_run_result(graph: StochasticGraph, run: RunResult) -> None:
    """Replay the event sequence and assert query-commit soundness.

    Raises AssertionError when a query happened with a matched endpoint, a
    queried realized edge is missing from the matching, a coin flip happened
    with both endpoints free, or the matching/weight are inconsistent.
    """
    matched_a: set[int] = set()
    matched_b: set[int] = set()
    for e_id, status in run.query_order:
        if status == DUMMY_BLOCKED:
            matched_b.add(e_id)  # entry carries the blocked B vertex index
            continue
        e = graph.edges[e_id]
        if status in (QUERIED_MATCHED, QUERIED_NOT_REALIZED):
            assert e.a not in matched_a and e.b not in matched_b, (
                f"edge {e_id} queried with a matched endpoint"
            )
            if status == QUERIED_MATCHED:
                assert e_id in run.matching, f"edge {e_id} queried+realized but unmatched"
                matched_a.add(e.a)
                matched_b.add(e.b)
        elif status in (COINFLIP_REALIZED, COINFLIP_NOT_REALIZED):
            assert e.b in matched_b or e.a in matched_a, (
                f"edge {e_id} coin-flipped with both endpoints free"
            )
            assert e_id not in run.matching, f"coin-flipped edge {e_id} in matching"
        else:
            raise AssertionError(f"unexpected event status {status!r}")
    seen_a: set[int] = set()
    seen_b: set[int] = set()
    total = 0.0
    for e_id in run.matching:
        e = graph.edges[e_id]
        assert run.edge_log[e_id] == QUERIED_MATCHED
        assert e.a not in seen_a and e.b not in seen_b, "matching shares endpoints"
        seen_a.add(e.a)
        seen_b.add(e.b)
        total += e.w
    assert abs(total - run.weight) <= 1e-9, "weight does not match matching"
