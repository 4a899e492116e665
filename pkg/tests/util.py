"""Shared test helpers: random tiny instances, random feasible LP vectors,
and closed-form cross-checks independent of the library's own oracles."""

from __future__ import annotations

from collections import defaultdict

import numpy as np

from qcmatch.instance import StochasticGraph, make_graph
from qcmatch.lpmatch import constraint_rhs
from qcmatch.transform import add_dummy_edges, g_transform


def random_instance(
    rng: np.random.Generator,
    max_a: int = 3,
    max_b: int = 3,
    max_edges: int = 6,
    p_lo: float = 0.2,
    p_hi: float = 1.0,
) -> StochasticGraph:
    """Random bipartite instance with at least one edge."""
    while True:
        na = int(rng.integers(1, max_a + 1))
        nb = int(rng.integers(1, max_b + 1))
        pairs = [(a, b) for a in range(na) for b in range(nb)]
        keep = [pairs[i] for i in range(len(pairs)) if rng.random() < 0.6]
        if len(keep) > max_edges:
            idx = sorted(rng.choice(len(keep), size=max_edges, replace=False).tolist())
            keep = [keep[i] for i in idx]
        if keep:
            break
    triples = [
        (a, b, float(rng.uniform(0.1, 2.0)), float(rng.uniform(p_lo, p_hi)))
        for a, b in keep
    ]
    return make_graph(na, nb, triples)


def worst_subset_ratio(graph: StochasticGraph, x) -> float:
    """max over vertices and incident subsets of (sum x) / rhs."""
    worst = 0.0
    groups = list(graph.edges_at_a) + list(graph.edges_at_b)
    for incident in groups:
        deg = len(incident)
        for mask in range(1, 1 << deg):
            ids = [incident[i] for i in range(deg) if (mask >> i) & 1]
            s = sum(x[e] for e in ids)
            rhs = constraint_rhs(graph, ids)
            if rhs > 0:
                worst = max(worst, s / rhs)
    return worst


def random_feasible_x(
    graph: StochasticGraph,
    rng: np.random.Generator,
    sigma: float | None = None,
    slack: float = 0.999,
) -> list[float]:
    """Random vector satisfying every subset constraint, with B-side
    fractional degrees at most ``sigma`` when given."""
    x = [float(rng.random()) * e.p for e in graph.edges]
    ratio = worst_subset_ratio(graph, x)
    scale = slack / ratio if ratio > 1e-12 else 0.0
    scale = min(scale, 1.0) if ratio > 1e-12 else 1.0
    x = [v * scale for v in x]
    if sigma is not None:
        max_deg = max(
            (sum(x[e] for e in graph.edges_at_b[u]) for u in range(graph.b_count)),
            default=0.0,
        )
        if max_deg > sigma:
            f = sigma * slack / max_deg
            x = [v * f for v in x]
    return x


def scaled_lp_x(graph: StochasticGraph, lp_x, sigma: float) -> list[float]:
    """LP solution rescaled so every B vertex's fractional degree fits
    under ``sigma`` (downscaling preserves feasibility)."""
    max_deg = max(
        (sum(lp_x[e] for e in graph.edges_at_b[u]) for u in range(graph.b_count)),
        default=0.0,
    )
    if max_deg <= sigma:
        return list(lp_x)
    f = sigma * 0.999999 / max_deg
    return [v * f for v in lp_x]


def shrunk_vector(graph: StochasticGraph, x, sigma: float):
    """(augmented graph, augmented x, augmented shrunk values) exactly as
    the base rounding computes them."""
    aug, x_aug = add_dummy_edges(graph, x, sigma)
    xt = tuple(float(g_transform(v, sigma)) for v in x_aug)
    return aug, x_aug, xt


def matched_prob_closed_form(graph: StochasticGraph, x, sigma: float, edge_id: int) -> float:
    """Independent closed form for the probability that an edge joins the
    matching in one shrink-and-pad round.

    Proposals arrive at the edge's B endpoint independently, each with its
    shrunk probability; the edge wins when it proposes and its proposer has
    the smallest uniform priority among all proposers there:

        P = q_e * integral_0^1 prod_rivals (1 - t q_rival) dt

    evaluated exactly via the polynomial's coefficients.
    """
    aug, _, xt = shrunk_vector(graph, x, sigma)
    u = aug.edges[edge_id].b
    rivals = [xt[f] for f in aug.edges_at_b[u] if f != edge_id]
    coeffs = np.array([1.0])
    for q in rivals:
        coeffs = np.convolve(coeffs, np.array([1.0, -q]))
    # coeffs[k] multiplies t^k; integrate over [0,1]
    integral = sum(c / (k + 1) for k, c in enumerate(coeffs))
    return xt[edge_id] * float(integral)


def b_unmatched_closed_form(graph: StochasticGraph, x, sigma: float, u: int) -> float:
    """P[no proposal arrives at B vertex u] = prod (1 - shrunk value)."""
    aug, _, xt = shrunk_vector(graph, x, sigma)
    out = 1.0
    for f in aug.edges_at_b[u]:
        out *= 1.0 - xt[f]
    return out


def enumerate_filter_outcomes(graph, dist, x, xt):
    """Independent oracle for the filtered permutation sampler: enumerate
    the filter's three-way branching over every base permutation, then the
    stop probabilities of each surviving permutation under fresh
    realization coins."""
    stop = defaultdict(float)
    for base, q0 in dist.support:
        partial = [((), 1.0)]  # (kept prefix, prob) after a prefix of base
        for e in base:
            p = graph.edges[e].p
            r = xt[e] / x[e]
            nxt = []
            for kept, q in partial:
                nxt.append((kept, q * p * (1.0 - r), "ended"))
                nxt.append((kept + (e,), q * r, None))
                nxt.append((kept, q * (1.0 - p) * (1.0 - r), None))
            done = [(k, q) for k, q, tag in nxt if tag == "ended"]
            partial = [(k, q) for k, q, tag in nxt if tag is None]
            for kept, q in done:
                _accumulate_stops(graph, kept, q0 * q, stop)
        for kept, q in partial:
            _accumulate_stops(graph, kept, q0 * q, stop)
    return dict(stop)


def _accumulate_stops(graph, perm, mass, stop):
    alive = 1.0
    for e in perm:
        stop[e] += mass * alive * graph.edges[e].p
        alive *= 1.0 - graph.edges[e].p
