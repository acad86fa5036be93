"""Model selection by conflict-graph vertex cover.

For a candidate Lipschitz constant L, cross-label sample pairs closer than
2/L cannot both be fitted with full margin; they form the edges of a
k-partite conflict graph. The smallest number of points to drop is the
graph's minimum vertex cover, approximated within factor 2 by the classic
maximal-matching greedy. Training sweeps every breakpoint of L (the values
2/d over cross-label pair distances), maintaining the greedy matching
incrementally as edges expire, and picks the candidate minimizing

    objective(L) = cover_size(L) / n + penalty(n, L, delta)

(count units instead of cover_size/n are available behind a flag). The
selected constant induces the surviving prototype set and the final
classifier. Edge expiry only ever frees matched vertices, so the repair
step after each deletion is a pure re-matching scan; the maintained
matching stays exactly equal to the from-scratch greedy at every candidate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import BoundParams, BoundValue, delta_combined, sweep_grid
from .classifier import LipschitzClassifier
from .errors import CoverSizeLimitError, DegenerateTrainingError, InputError
from .metric_core import (
    DoublingEstimate,
    MetricOracle,
    Sample,
    estimate_ddim,
    pairwise_distances,
    user_ddim,
)


@dataclass
class ConflictGraph:
    """Cross-label pairs violating the margin condition at one constant.

    ``edges`` is an (E, 2) array of sample indices with edges[:, 0] <
    edges[:, 1], sorted lexicographically. No edge joins equal labels.
    """

    n: int
    labels: np.ndarray
    edges: np.ndarray
    lipschitz: float

    @property
    def parts(self) -> dict:
        out = {}
        for y in np.unique(self.labels):
            out[int(y)] = np.nonzero(self.labels == y)[0]
        return out

    def conflicted_vertices(self) -> np.ndarray:
        return np.unique(self.edges) if len(self.edges) else np.array([], dtype=np.intp)


@dataclass(frozen=True)
class CoverResult:
    cover: frozenset
    size: int
    method: str  # "greedy2approx" | "exact"


@dataclass
class CandidateTable:
    """Per-candidate sweep record: constant, greedy cover size, penalty,
    objective."""

    lipschitz: np.ndarray
    cover_size: np.ndarray
    penalty: np.ndarray
    objective: np.ndarray

    def __len__(self):
        return len(self.lipschitz)

    def rows(self):
        for i in range(len(self.lipschitz)):
            yield (
                float(self.lipschitz[i]),
                int(self.cover_size[i]),
                float(self.penalty[i]),
                float(self.objective[i]),
            )


@dataclass
class SrmResult:
    lipschitz: float
    cover: CoverResult
    objective: float
    kept_indices: np.ndarray
    bound_report: BoundValue
    candidates: CandidateTable
    classifier: LipschitzClassifier
    ddim: DoublingEstimate
    always_conflicted: np.ndarray
    fallback_applied: bool
    objective_units: str
    search_mode: str
    min_objective_examined: float


def build_conflict_graph(sample: Sample, oracle: MetricOracle, lipschitz: float,
                         threads: int = 1) -> ConflictGraph:
    """All cross-label pairs with distance strictly below 2 / lipschitz.

    Strict inequality keeps pairs sitting exactly on the margin boundary
    consistent. The test is evaluated as ``lipschitz < 2 / d`` so that a
    single graph build agrees bit-for-bit with the training sweep's edge
    expiry rule; coincident cross-label pairs (d = 0) are edges at every
    constant.
    """
    if not lipschitz > 0:
        raise InputError("lipschitz must be positive")
    dm = pairwise_distances(oracle, sample.points, threads=threads)
    iu, ju = np.triu_indices(sample.n, k=1)
    cross = sample.labels[iu] != sample.labels[ju]
    with np.errstate(divide="ignore"):
        expiry = np.where(dm[iu, ju] > 0.0, 2.0 / dm[iu, ju], np.inf)
    violating = cross & (lipschitz < expiry)
    edges = np.stack([iu[violating], ju[violating]], axis=1)
    return ConflictGraph(n=sample.n, labels=sample.labels.copy(), edges=edges,
                         lipschitz=float(lipschitz))


def greedy_cover(g: ConflictGraph) -> CoverResult:
    """Maximal-matching 2-approximation: scan edges lexicographically and
    take both endpoints of every edge still uncovered."""
    covered = [False] * g.n
    cover = []
    for a, b in g.edges.tolist():
        if not covered[a] and not covered[b]:
            covered[a] = covered[b] = True
            cover.append(a)
            cover.append(b)
    return CoverResult(cover=frozenset(cover), size=len(cover), method="greedy2approx")


def exact_cover(g: ConflictGraph, limit: int = 24) -> CoverResult:
    """Minimum vertex cover by branch and bound; intended as a small-instance
    oracle. Vertices not touching any edge never enter the cover."""
    verts = g.conflicted_vertices()
    if len(verts) > limit:
        raise CoverSizeLimitError(
            f"{len(verts)} conflicted vertices exceed the exact-cover limit {limit}; "
            "use greedy_cover"
        )
    if len(g.edges) == 0:
        return CoverResult(cover=frozenset(), size=0, method="exact")
    remap = {int(v): i for i, v in enumerate(verts)}
    edges = [(remap[int(a)], remap[int(b)]) for a, b in g.edges]
    nv = len(verts)
    adj = [0] * nv
    for a, b in edges:
        adj[a] |= 1 << b
        adj[b] |= 1 << a

    greedy_size = greedy_cover(g).size
    best = [greedy_size, None]

    def matching_lb(alive_edges) -> int:
        used = 0
        count = 0
        for a, b in alive_edges:
            if not (used >> a) & 1 and not (used >> b) & 1:
                used |= (1 << a) | (1 << b)
                count += 1
        return count

    def solve(alive_edges, picked, count):
        if count + matching_lb(alive_edges) >= best[0]:
            return
        if not alive_edges:
            best[0] = count
            best[1] = picked
            return
        a, b = alive_edges[0]
        for v in (a, b):
            rest = [e for e in alive_edges if v not in e]
            solve(rest, picked | (1 << v), count + 1)

    solve(edges, 0, 0)
    chosen = best[1]
    if chosen is None:  # greedy was already optimal
        result = greedy_cover(g)
        return CoverResult(cover=result.cover, size=result.size, method="exact")
    cover = frozenset(int(verts[i]) for i in range(nv) if (chosen >> i) & 1)
    return CoverResult(cover=cover, size=len(cover), method="exact")


def _cross_pair_arrays(sample: Sample, oracle: MetricOracle, threads: int = 1):
    """Lexicographically sorted cross-label pairs with their distances."""
    dm = pairwise_distances(oracle, sample.points, threads=threads)
    iu, ju = np.triu_indices(sample.n, k=1)
    cross = sample.labels[iu] != sample.labels[ju]
    return iu[cross], ju[cross], dm[iu[cross], ju[cross]], float(dm.max())


def candidate_lipschitz_values(sample: Sample, oracle: MetricOracle,
                               threads: int = 1) -> np.ndarray:
    """Breakpoints 2/d over positive cross-label distances, deduplicated and
    sorted, plus one sentinel below the smallest and one above the largest.
    Coincident cross-label pairs conflict at every constant and contribute no
    breakpoint. With no cross-label pairs at all, returns the single
    convention value 2.0 (any constant is consistent)."""
    _, _, d, _ = _cross_pair_arrays(sample, oracle, threads=threads)
    pos = d[d > 0.0]
    if pos.size == 0:
        return np.array([2.0])
    breaks = np.unique(2.0 / pos)
    return np.concatenate([[breaks[0] / 2.0], breaks, [breaks[-1] * 2.0]])


class _IncrementalMatching:
    """Greedy lexicographic matching under edge deletion.

    State invariant (characterizes the from-scratch greedy scan): every
    alive edge is matched or shares an endpoint with a lexicographically
    earlier matched edge. Deleting an unmatched edge changes nothing, since
    no other edge's scan decision depended on it. Deleting a matched edge
    frees its endpoints, which can leave "violating" edges: unmatched alive
    edges with no earlier matched neighbor. Repair fixes the lex-smallest
    violation first, displacing any lex-later matched edges at its
    endpoints; displaced endpoints are re-examined. Fixes strictly increase
    the matched set read as a binary fraction by lex position, so repair
    terminates at the unique greedy fixed point.
    """

    def __init__(self, eu: np.ndarray, ev: np.ndarray, n: int):
        self.eu = eu
        self.ev = ev
        self.n = n
        E = len(eu)
        self.alive = np.ones(E, dtype=bool)
        self.matched = np.zeros(E, dtype=bool)
        self.vertex_edge = np.full(n, -1, dtype=np.int64)
        # CSR incidence, edge ids ascending within each vertex slice
        endpoints = np.concatenate([eu, ev])
        eids = np.concatenate([np.arange(E), np.arange(E)])
        order = np.lexsort((eids, endpoints))
        self.inc_edges = eids[order]
        counts = np.bincount(endpoints, minlength=n)
        self.inc_start = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=self.inc_start[1:])
        self.matched_count = 0
        # initial greedy scan in lexicographic order (plain lists: the scan
        # touches every edge and numpy scalar reads would dominate)
        eu_l, ev_l = eu.tolist(), ev.tolist()
        self._eu_l, self._ev_l = eu_l, ev_l
        ve = [-1] * n
        matched_l = [False] * E
        count = 0
        for e in range(E):
            a, b = eu_l[e], ev_l[e]
            if ve[a] < 0 and ve[b] < 0:
                ve[a] = e
                ve[b] = e
                matched_l[e] = True
                count += 1
        self.vertex_edge[:] = ve
        self.matched[:] = matched_l
        self.matched_count = count

    def _candidate(self, v: int):
        """Lex-smallest violating edge at free vertex v: alive, and its other
        endpoint is free or held by a lex-later matched edge."""
        lo, hi = self.inc_start[v], self.inc_start[v + 1]
        eids = self.inc_edges[lo:hi]
        if eids.size == 0:
            return None
        other = np.where(self.eu[eids] == v, self.ev[eids], self.eu[eids])
        oe = self.vertex_edge[other]
        ok = self.alive[eids] & ((oe < 0) | (oe > eids))
        pos = np.argmax(ok)
        if not ok[pos]:
            return None
        return int(eids[pos])

    def _unmatch(self, e: int) -> None:
        self.matched[e] = False
        self.matched_count -= 1
        self.vertex_edge[int(self.eu[e])] = -1
        self.vertex_edge[int(self.ev[e])] = -1

    def _match(self, e: int) -> None:
        self.matched[e] = True
        self.matched_count += 1
        self.vertex_edge[int(self.eu[e])] = e
        self.vertex_edge[int(self.ev[e])] = e

    def delete_edges(self, edge_ids) -> None:
        queue = None
        alive = self.alive
        matched = self.matched
        for e in edge_ids:
            if not alive[e]:
                continue
            alive[e] = False
            if matched[e]:
                a, b = self._eu_l[e], self._ev_l[e]
                self._unmatch(e)
                if queue is None:
                    queue = set()
                queue.add(a)
                queue.add(b)
        if queue is None:
            return
        while queue:
            best = None
            for v in list(queue):
                if self.vertex_edge[v] >= 0:
                    queue.discard(v)
                    continue
                e = self._candidate(v)
                if e is None:
                    # any future opportunity at v arrives via a neighbor that
                    # gets freed (and re-queued) itself
                    queue.discard(v)
                elif best is None or e < best:
                    best = e
            if best is None:
                break
            a, b = int(self.eu[best]), int(self.ev[best])
            for vert in (a, b):
                g = int(self.vertex_edge[vert])
                if g >= 0:  # displaced edge is lex-later by construction
                    z = int(self.ev[g]) if int(self.eu[g]) == vert else int(self.eu[g])
                    self._unmatch(g)
                    queue.add(z)
            self._match(best)
            queue.discard(a)
            queue.discard(b)

    @property
    def cover_size(self) -> int:
        return 2 * self.matched_count


def _sweep_cover_sizes(eu, ev, dist, n, candidates) -> np.ndarray:
    """Greedy cover size at every candidate constant (ascending).

    An edge is alive at constant L exactly when d < 2/L, i.e. while
    L < 2/d; coincident pairs (d = 0) never expire.
    """
    with np.errstate(divide="ignore"):
        expiry = np.where(dist > 0.0, 2.0 / dist, np.inf)
    matcher = _IncrementalMatching(eu, ev, n)
    order = np.argsort(expiry, kind="stable")
    # edges order[:kill_end[ci]] have expired at candidates[ci]
    kill_end = np.searchsorted(expiry[order], candidates, side="right").tolist()
    order_list = order.tolist()
    sizes = np.empty(len(candidates), dtype=np.int64)
    ptr = 0
    for ci, end in enumerate(kill_end):
        if end > ptr:
            matcher.delete_edges(order_list[ptr:end])
            ptr = end
        sizes[ci] = matcher.matched_count
    return 2 * sizes


def srm_train(
    sample: Sample,
    oracle: MetricOracle,
    delta: float = 0.01,
    ddim: float | DoublingEstimate | None = None,
    eta: float = 0.0,
    search: str = "sweep",
    objective_units: str = "risk",
    delta_kind: str = "combined",
    fat_variant: str = "printed",
    threads: int = 1,
) -> SrmResult:
    """Select the Lipschitz constant, drop the covered points, and fit the
    classifier.

    ``search="sweep"`` evaluates the objective at every candidate with the
    incremental matching (the certified path); ``"binary"`` is a bracketing
    heuristic probing O(log n) candidates with fresh covers. Candidates whose
    greedy cover swallows the whole sample cannot yield a classifier and are
    skipped when choosing the final constant; the unrestricted minimum is
    still reported.
    """
    if sample.n < 2:
        raise InputError("training needs at least two points")
    if sample.n_classes < 2:
        raise InputError("training needs at least two classes")
    if search not in ("sweep", "binary"):
        raise InputError(f"search must be 'sweep' or 'binary', got {search!r}")
    if objective_units not in ("risk", "count"):
        raise InputError(f"objective_units must be 'risk' or 'count', got {objective_units!r}")
    if delta_kind not in ("combined", "rad", "fat"):
        raise InputError(f"delta_kind must be combined/rad/fat, got {delta_kind!r}")

    if ddim is None:
        dd = estimate_ddim(sample, oracle, threads=threads)
    elif isinstance(ddim, DoublingEstimate):
        dd = ddim
    else:
        dd = user_ddim(float(ddim))

    eu, ev, dist, diam = _cross_pair_arrays(sample, oracle, threads=threads)
    if diam > 1.0 + 1e-9:
        raise InputError(
            f"sample diameter {diam:.6g} exceeds 1; normalize the oracle first"
        )
    always = np.stack([eu[dist == 0.0], ev[dist == 0.0]], axis=1)

    pos = dist[dist > 0.0]
    if pos.size == 0 and len(eu) == 0:
        raise InputError("no cross-label pairs; nothing to train")
    if pos.size:
        breaks = np.unique(2.0 / pos)
        candidates = np.concatenate([[breaks[0] / 2.0], breaks, [breaks[-1] * 2.0]])
    else:
        candidates = np.array([2.0])

    if search == "sweep":
        sizes = _sweep_cover_sizes(eu, ev, dist, sample.n, candidates)
    else:
        examined = _bracket_search(
            sample, oracle, candidates, delta, dd.ddim, eta, objective_units,
            delta_kind, fat_variant, threads,
        )
        candidates = candidates[sorted(examined)]
        sizes = np.array([examined[ci] for ci in sorted(examined)], dtype=np.int64)

    grid = sweep_grid(candidates, sample.n, dd.ddim, sample.n_classes, delta,
                      eta=eta, fat_variant=fat_variant)
    if delta_kind == "combined":
        penalty = grid["combined"]
    elif delta_kind == "rad":
        penalty = grid["delta_rad"]
    else:
        penalty = grid["delta_fat"]

    empirical = sizes / sample.n if objective_units == "risk" else sizes.astype(np.float64)
    objective = empirical + penalty

    table = CandidateTable(
        lipschitz=candidates,
        cover_size=sizes,
        penalty=penalty,
        objective=objective,
    )

    best_any = int(np.argmin(objective))
    eligible = np.nonzero(sizes < sample.n)[0]
    if eligible.size == 0:
        raise DegenerateTrainingError(
            "every candidate's greedy cover removes the whole sample"
        )
    best_eligible = int(eligible[np.argmin(objective[eligible])])
    fallback = best_eligible != best_any

    chosen_L = float(candidates[best_eligible])
    g = build_conflict_graph(sample, oracle, chosen_L, threads=threads)
    cover = greedy_cover(g)
    kept = np.array(sorted(set(range(sample.n)) - set(cover.cover)), dtype=np.intp)

    params = BoundParams(
        n=sample.n, lipschitz=chosen_L, ddim=dd.ddim,
        n_classes=sample.n_classes, delta=delta, eta=eta,
    )
    report = delta_combined(params, fat_variant=fat_variant)
    report.details["ddim_method"] = dd.method
    report.details["objective_units"] = objective_units
    report.details["delta_kind"] = delta_kind

    clf = LipschitzClassifier(
        prototypes=[sample.points[i] for i in kept],
        prototype_labels=sample.labels[kept],
        lipschitz=chosen_L,
        oracle=oracle,
        eta=eta,
        n_classes=sample.n_classes,
        label_names=sample.label_names,
        bound_report=report.to_dict(),
    )

    return SrmResult(
        lipschitz=chosen_L,
        cover=cover,
        objective=float(objective[best_eligible]),
        kept_indices=kept,
        bound_report=report,
        candidates=table,
        classifier=clf,
        ddim=dd,
        always_conflicted=always,
        fallback_applied=fallback,
        objective_units=objective_units,
        search_mode=search,
        min_objective_examined=float(objective[best_any]),
    )


def _bracket_search(sample, oracle, candidates, delta, ddim, eta,
                    objective_units, delta_kind, fat_variant, threads) -> dict:
    """Ternary bracketing over candidate indices, comparing objective values
    with fresh covers per probe. Exploits the roughly unimodal shape of the
    objective (nonincreasing empirical term, increasing penalty); not
    certified, the sweep is. Returns {candidate index: greedy cover size}
    for every probed index."""
    memo: dict[int, int] = {}

    def cover_size_at(ci: int) -> int:
        if ci not in memo:
            g = build_conflict_graph(sample, oracle, float(candidates[ci]),
                                     threads=threads)
            memo[ci] = greedy_cover(g).size
        return memo[ci]

    def objective_at(ci: int) -> float:
        size = cover_size_at(ci)
        grid = sweep_grid(candidates[ci:ci + 1], sample.n, ddim,
                          sample.n_classes, delta, eta=eta,
                          fat_variant=fat_variant)
        pen = {"combined": grid["combined"], "rad": grid["delta_rad"],
               "fat": grid["delta_fat"]}[delta_kind][0]
        emp = size / sample.n if objective_units == "risk" else float(size)
        return emp + float(pen)

    lo, hi = 0, len(candidates) - 1
    objective_at(lo)
    objective_at(hi)
    while hi - lo > 2:
        m1 = lo + (hi - lo) // 3
        m2 = hi - (hi - lo) // 3
        if objective_at(m1) <= objective_at(m2):
            hi = m2
        else:
            lo = m1
    for ci in range(lo, hi + 1):
        objective_at(ci)
    return memo
