"""Vectorized Monte-Carlo trial runner.

Simulates many independent trials of an algorithm at once with numpy.  The
proposal algorithms factor cleanly across trials: each A vertex's walk is
independent of the global matching state, and acceptance at a B vertex just
picks the proposer with the smallest uniform priority, so whole chunks of
trials advance in lockstep.  The second pass of the two-round branch groups
trials by their surviving-edge set and reuses compiled instances per group.

Trials are processed in fixed-size chunks with per-chunk RNG streams derived
from (master seed, chunk index); chunk partials are reduced in chunk order,
so results are bit-identical for fixed inputs no matter how many worker
threads run the chunks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from threading import Lock

import numpy as np

from .engine import DistributionCache, classify_light, _compile_round
from .instance import StochasticGraph
from .lpmatch import EPS
from .transform import TransformParams, heavy_degree_bound

CHUNK_SIZE = 1 << 16


@dataclass(frozen=True)
class BatchResult:
    trials: int
    mean: float
    stderr: float
    edge_match_freq: tuple[float, ...]
    branch: str | None = None


@dataclass
class _Compiled:
    """Array form of one proposal round over an augmented edge set."""

    n_a: int
    n_b: int
    m: int
    edge_b: np.ndarray
    edge_w: np.ndarray
    orig_id: np.ndarray          # original edge id or -1 per augmented edge
    t_term: np.ndarray           # p (1 - r)
    t_prop: np.ndarray           # + r p
    t_app: np.ndarray            # + r (1 - p)
    vert_cum: list[np.ndarray | None]
    vert_edges: list[np.ndarray | None]   # (n_cols, max_len) aug ids, -1 pad


def _compile_arrays(graph: StochasticGraph, x, sigma, edge_ids, cache: DistributionCache) -> _Compiled:
    rnd = _compile_round(graph, x, sigma, edge_ids, cache)
    aug = rnd.aug
    m = len(aug.edges)
    p = np.array([e.p for e in aug.edges])
    r = np.ones(m)
    for e in range(m):
        if rnd.x_aug[e] > 0.0:
            r[e] = min(rnd.xt_aug[e] / rnd.x_aug[e], 1.0)
    t_term = p * (1.0 - r)
    t_prop = t_term + r * p
    t_app = t_prop + r * (1.0 - p)
    vert_cum: list[np.ndarray | None] = []
    vert_edges: list[np.ndarray | None] = []
    for v in range(aug.a_count):
        dist = rnd.dists.get(v)
        if dist is None:
            vert_cum.append(None)
            vert_edges.append(None)
            continue
        probs = np.array([q for _, q in dist.support])
        max_len = max((len(perm) for perm, _ in dist.support), default=0)
        mat = -np.ones((len(dist.support), max(max_len, 1)), dtype=np.int64)
        for i, (perm, _) in enumerate(dist.support):
            for j, e in enumerate(perm):
                mat[i, j] = e
        vert_cum.append(np.cumsum(probs))
        vert_edges.append(mat)
    return _Compiled(
        n_a=aug.a_count,
        n_b=aug.b_count,
        m=m,
        edge_b=np.array([e.b for e in aug.edges], dtype=np.int64),
        edge_w=np.array([e.w for e in aug.edges]),
        orig_id=np.array([o if o is not None else -1 for o in rnd.orig_of], dtype=np.int64),
        t_term=t_term,
        t_prop=t_prop,
        t_app=t_app,
        vert_cum=vert_cum,
        vert_edges=vert_edges,
    )


def _run_proposal_chunk(comp: _Compiled, n: int, rng: np.random.Generator, need_state: bool):
    """One proposal round over ``n`` trials.

    Returns (per-trial weight, winner edges (n, n_b), and, when
    ``need_state``, examined flags plus per-A matched flags).
    """
    prio = rng.random((n, comp.n_a))
    prop = -np.ones((n, comp.n_a), dtype=np.int64)
    exam = np.zeros((n, comp.m), dtype=bool) if need_state else None
    for v in range(comp.n_a):
        cum = comp.vert_cum[v]
        if cum is None:
            continue
        cols = np.searchsorted(cum, rng.random(n), side="right")
        cols = np.minimum(cols, len(cum) - 1)
        eids = comp.vert_edges[v][cols]
        max_len = eids.shape[1]
        z = rng.random((n, max_len))
        active = np.ones(n, dtype=bool)
        for j in range(max_len):
            e = eids[:, j]
            walk = active & (e >= 0)
            if not walk.any():
                continue
            zz = z[:, j]
            esafe = np.maximum(e, 0)
            t1 = comp.t_term[esafe]
            t2 = comp.t_prop[esafe]
            t3 = comp.t_app[esafe]
            term = walk & (zz <= t1)
            do_prop = walk & (zz > t1) & (zz <= t2)
            do_exam = walk & (zz > t2) & (zz <= t3)
            if do_prop.any():
                prop[do_prop, v] = e[do_prop]
                if need_state:
                    exam[do_prop, e[do_prop]] = True
            if need_state and do_exam.any():
                exam[do_exam, e[do_exam]] = True
            active &= ~(term | do_prop)

    rows = np.arange(n)
    best = np.full((n, comp.n_b), np.inf)
    for v in range(comp.n_a):
        pv = prop[:, v]
        has = pv >= 0
        if not has.any():
            continue
        np.minimum.at(best, (rows[has], comp.edge_b[pv[has]]), prio[has, v])
    win = -np.ones((n, comp.n_b), dtype=np.int64)
    a_matched = np.zeros((n, comp.n_a), dtype=bool) if need_state else None
    for v in range(comp.n_a):
        pv = prop[:, v]
        has = pv >= 0
        if not has.any():
            continue
        b = comp.edge_b[pv[has]]
        first = prio[has, v] <= best[rows[has], b]
        rr = rows[has][first]
        win[rr, b[first]] = pv[has][first]
        if need_state:
            a_matched[rr, v] = True
    wsel = np.where(win >= 0, win, 0)
    weights = (comp.edge_w[wsel] * (win >= 0)).sum(axis=1)
    return weights, win, exam, a_matched


def _count_orig_matches(comp: _Compiled, win: np.ndarray, n_orig: int) -> np.ndarray:
    vals = win[win >= 0]
    if len(vals) == 0:
        return np.zeros(n_orig, dtype=np.int64)
    ovals = comp.orig_id[vals]
    ovals = ovals[ovals >= 0]
    return np.bincount(ovals, minlength=n_orig)


class _ApxContext:
    """Shared compiled state for the two-branch algorithm; second-round
    instances are compiled lazily per surviving-edge mask."""

    def __init__(self, graph: StochasticGraph, x, params: TransformParams):
        self.graph = graph
        self.x = tuple(float(v) for v in x)
        self.params = params
        self.cache = DistributionCache(graph, x)
        light, omega, lp_mass = classify_light(graph, x, params.tau)
        self.two_round = omega >= params.lam * lp_mass
        self.omega = omega
        self.lp_mass = lp_mass
        m = len(graph.edges)
        if self.two_round:
            self.round1 = _compile_arrays(graph, x, 1.0, range(m), self.cache)
        else:
            heavy = sorted(set(range(m)) - set(light))
            sigma = heavy_degree_bound(params.tau)
            for u in range(graph.b_count):
                deg = sum(x[e] for e in graph.edges_at_b[u] if e in set(heavy))
                if deg > sigma + EPS:
                    raise ValueError(
                        f"heavy fractional degree {deg} at B vertex {u} exceeds {sigma}"
                    )
            self.round1 = _compile_arrays(graph, x, sigma, heavy, self.cache)
        self.edge_a = np.array([e.a for e in graph.edges], dtype=np.int64)
        self.edge_b_orig = np.array([e.b for e in graph.edges], dtype=np.int64)
        self._round2: dict[int, _Compiled | None] = {}
        self._lock = Lock()

    def round2_for(self, mask: int) -> _Compiled | None:
        if mask in self._round2:
            return self._round2[mask]
        with self._lock:
            if mask not in self._round2:
                ids = [e for e in range(len(self.graph.edges)) if (mask >> e) & 1]
                live = [e for e in ids if self.x[e] > 0.0]
                self._round2[mask] = (
                    _compile_arrays(self.graph, self.x, 1.0, ids, self.cache)
                    if live
                    else None
                )
        return self._round2[mask]


def _apx_chunk(ctx: _ApxContext, n: int, rng: np.random.Generator, n_orig: int):
    if not ctx.two_round:
        weights, win, _, _ = _run_proposal_chunk(ctx.round1, n, rng, need_state=False)
        return weights, _count_orig_matches(ctx.round1, win, n_orig)

    weights, win, exam, a_matched = _run_proposal_chunk(ctx.round1, n, rng, need_state=True)
    counts = _count_orig_matches(ctx.round1, win, n_orig)
    b_matched = win >= 0
    # available edges: unexamined, both endpoints unmatched (round 1's
    # original edges are the augmented prefix in compile order)
    avail = (
        ~exam[:, :n_orig]
        & ~a_matched[np.arange(n)[:, None], ctx.edge_a[None, :]]
        & ~b_matched[np.arange(n)[:, None], ctx.edge_b_orig[None, :]]
    )
    masks = np.zeros(n, dtype=np.uint64)
    for e in range(n_orig):
        masks |= avail[:, e].astype(np.uint64) << np.uint64(e)
    order = np.argsort(masks, kind="stable")
    sorted_masks = masks[order]
    boundaries = np.nonzero(np.diff(sorted_masks))[0] + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [n]))
    for s, t in zip(starts, ends):
        mask = int(sorted_masks[s])
        if mask == 0:
            continue
        comp2 = ctx.round2_for(mask)
        if comp2 is None:
            continue
        idx = order[s:t]
        w2, win2, _, _ = _run_proposal_chunk(comp2, len(idx), rng, need_state=False)
        weights[idx] += w2
        counts += _count_orig_matches(comp2, win2, n_orig)
    return weights, counts


def _greedy_chunk(graph: StochasticGraph, n: int, rng: np.random.Generator):
    m = len(graph.edges)
    order = sorted(range(m), key=lambda e: (-graph.edges[e].w, e))
    # coins drawn eagerly: each edge's coin is consulted at most once, so
    # this is distribution-identical to lazy sampling
    coins = rng.random((n, m))
    a_used = np.zeros((n, graph.a_count), dtype=bool)
    b_used = np.zeros((n, graph.b_count), dtype=bool)
    weights = np.zeros(n)
    counts = np.zeros(m, dtype=np.int64)
    for e_id in order:
        e = graph.edges[e_id]
        hit = ~a_used[:, e.a] & ~b_used[:, e.b] & (coins[:, e_id] < e.p)
        weights += e.w * hit
        a_used[:, e.a] |= hit
        b_used[:, e.b] |= hit
        counts[e_id] += int(hit.sum())
    return weights, counts


def run_batch(
    graph: StochasticGraph,
    x,
    algorithm: str,
    params: TransformParams,
    trials: int,
    master_seed: int,
    *,
    threads: int = 1,
    chunk_size: int = CHUNK_SIZE,
) -> BatchResult:
    """Estimate the expected matching weight of one algorithm.

    ``x`` is required for every algorithm except ``greedy``.  The chunk
    partition depends only on ``trials`` and ``chunk_size``, never on
    ``threads``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    n_orig = len(graph.edges)
    branch: str | None = None

    if algorithm == "greedy":
        def body(n, rng):
            return _greedy_chunk(graph, n, rng)
    elif algorithm in ("simple", "alg1"):
        if x is None:
            raise ValueError(f"{algorithm} requires an LP solution")
        cache = DistributionCache(graph, x)
        sigma = None if algorithm == "simple" else params.sigma
        comp = _compile_arrays(graph, x, sigma, range(n_orig), cache)

        def body(n, rng):
            weights, win, _, _ = _run_proposal_chunk(comp, n, rng, need_state=False)
            return weights, _count_orig_matches(comp, win, n_orig)
    elif algorithm == "apx":
        if x is None:
            raise ValueError("apx requires an LP solution")
        ctx = _ApxContext(graph, x, params)
        branch = "two-round" if ctx.two_round else "heavy-prune"

        def body(n, rng):
            return _apx_chunk(ctx, n, rng, n_orig)
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")

    n_chunks = (trials + chunk_size - 1) // chunk_size

    def run_chunk(c: int):
        n = min(chunk_size, trials - c * chunk_size)
        rng = np.random.default_rng(np.random.SeedSequence((master_seed, c)))
        weights, counts = body(n, rng)
        return float(weights.sum()), float(np.dot(weights, weights)), counts

    if threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partials = list(pool.map(run_chunk, range(n_chunks)))
    else:
        partials = [run_chunk(c) for c in range(n_chunks)]

    total = 0.0
    total_sq = 0.0
    counts = np.zeros(n_orig, dtype=np.int64)
    for s, sq, c in partials:
        total += s
        total_sq += sq
        counts += c
    mean = total / trials
    if trials > 1:
        var = max(total_sq - trials * mean * mean, 0.0) / (trials - 1)
        stderr = float(np.sqrt(var / trials))
    else:
        stderr = 0.0
    return BatchResult(
        trials=trials,
        mean=mean,
        stderr=stderr,
        edge_match_freq=tuple(counts / trials),
        branch=branch,
    )
