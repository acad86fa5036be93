"""Exact and (1+eta)-approximate nearest-neighbor search.

Exact mode is a brute-force scan with no precomputation. Approximate mode
builds a hierarchy of nested nets with radii halving per level: every level
is a packing (same-level points are more than one radius apart) and a cover
(each member sits within the parent radius of some member one level up).
Queries descend the hierarchy pruning any subtree that provably cannot beat
the current best by more than a factor (1 + eta); with eta = 0 the descent
returns exactly the brute-force answer, ties included, because both paths
share one distance kernel and one tie rule (lowest stored index).

Construction is localized: candidate centers for a point are gathered from
the neighbor lists of its current cell, so build cost stays near-linear on
doubling data. Points processed in stored order; the structure is fully
deterministic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyIndexError, InputError
from .metric_core import MetricOracle, points_matrix

_MAX_LEVELS = 200  # ~2**-200 of the top radius; below fp resolution of sane data


@dataclass(frozen=True)
class NnAnswer:
    """One query result: position in the indexed set, its label, and the
    distance to the returned point (a true distance, possibly to a
    non-optimal point in approximate mode)."""

    index: int
    label: int
    dist: float


class NnIndex:
    """Nearest-neighbor index over a labeled point set."""

    def __init__(self, points, labels, oracle, mode, eta, structure):
        self.points = points
        self.labels = np.asarray(labels, dtype=np.int64)
        self.oracle = oracle
        self.mode = mode
        self.eta = float(eta)
        self._structure = structure
        self._mat = (
            points_matrix(points) if oracle.payload_kind == "vector" else points
        )
        self.labels_present = [int(v) for v in np.unique(self.labels)]

    # ------------------------------------------------------------------
    # Construction
    # ------------------------------------------------------------------

    @classmethod
    def build(cls, points, labels, oracle: MetricOracle, mode: str = "exact", eta: float = 0.0):
        """Build an index. ``mode`` is "exact" or "approximate"; ``eta`` is the
        approximation slack (eta = 0 in approximate mode degenerates to exact
        answers). Deterministic given the stored point order."""
        points = list(points)
        labels = np.asarray(labels, dtype=np.int64)
        if len(points) == 0:
            raise EmptyIndexError("cannot build an index over zero points")
        if len(points) != len(labels):
            raise InputError("points and labels must have equal length")
        for p in points:
            oracle.check_payload(p)
        if mode == "exact":
            return cls(points, labels, oracle, "exact", 0.0, None)
        if mode != "approximate":
            raise InputError(f"mode must be 'exact' or 'approximate', got {mode!r}")
        if eta < 0:
            raise InputError("eta must be nonnegative")
        structure = _build_net_hierarchy(points, labels, oracle)
        return cls(points, labels, oracle, "approximate", eta, structure)

    # ------------------------------------------------------------------
    # Queries
    # ------------------------------------------------------------------

    def query(self, x) -> NnAnswer:
        """Nearest neighbor of ``x``; ties broken by lowest stored index."""
        if self.mode == "exact":
            d = self.oracle.rows(x, self._mat)
            i = int(np.argmin(d))
            return NnAnswer(index=i, label=int(self.labels[i]), dist=float(d[i]))
        best_d, best_i = self._descend(x, want_label=None)
        return NnAnswer(index=best_i, label=int(self.labels[best_i]), dist=best_d)

    def query_per_label(self, x) -> dict:
        """Per-label nearest neighbors: {label: (dist, index)} for every label
        present in the indexed set."""
        if self.mode == "exact":
            d = self.oracle.rows(x, self._mat)
            out = {}
            for y in self.labels_present:
                idx = np.nonzero(self.labels == y)[0]
                j = int(idx[np.argmin(d[idx])])
                out[y] = (float(d[j]), j)
            return out
        out = {}
        for y in self.labels_present:
            best_d, best_i = self._descend(x, want_label=y)
            out[y] = (best_d, best_i)
        return out

    def _descend(self, x, want_label):
        st = self._structure
        slack = 1.0 + self.eta
        radii = st["radii"]
        levels = st["levels"]
        children = st["children"]
        masks = st["masks"]
        rep_min = st["rep_min"]
        rep_label = st["rep_label"]
        point_mask = st["point_mask"]
        bit = 0 if want_label is None else (1 << int(want_label))

        cand = levels[0]
        if want_label is not None:
            cand = np.array([m for m in cand if masks[0][m] & bit], dtype=np.intp)
            if cand.size == 0:
                raise InputError(f"label {want_label} not present in the index")
        d = self.oracle.rows(x, self._mat, idx=cand)

        best_d = math.inf
        best_i = -1

        def consider(members, dists):
            nonlocal best_d, best_i
            for m, dm in zip(members, dists):
                m = int(m)
                if want_label is None:
                    rep = rep_min[m]
                else:
                    rep = rep_label[m].get(want_label)
                    if rep is None or not (point_mask[m] & bit):
                        continue
                if dm < best_d or (dm == best_d and rep < best_i):
                    best_d = float(dm)
                    best_i = rep

        consider(cand, d)
        for level in range(len(levels) - 1):
            r_sub = 2.0 * radii[level]  # subtree radius of a level member
            keep = []
            for m, dm in zip(cand, d):
                m = int(m)
                if want_label is not None and not (masks[level][m] & bit):
                    continue
                if dm - r_sub <= best_d / slack:
                    keep.append(m)
            if not keep:
                break
            kid_lists = [children[level][m] for m in keep]
            cand = np.concatenate(kid_lists)
            d = self.oracle.rows(x, self._mat, idx=cand)
            consider(cand, d)
        return best_d, best_i

    # ------------------------------------------------------------------
    # Diagnostics
    # ------------------------------------------------------------------

    def check_invariants(self) -> None:
        """Verify packing, covering, nesting, and parent-child radii of the
        net hierarchy; raises AssertionError with a description on failure."""
        if self.mode == "exact":
            return
        st = self._structure
        radii, levels, children = st["radii"], st["levels"], st["children"]
        for j, members in enumerate(levels):
            r = radii[j]
            if len(members) > 1:
                for a_pos in range(len(members)):
                    da = self.oracle.rows(x=self.points[int(members[a_pos])],
                                          points=self._mat, idx=members[a_pos + 1:])
                    assert (da > r).all(), f"packing violated at level {j}"
            prev = set(int(v) for v in levels[j - 1]) if j else None
            if prev is not None:
                assert prev.issubset(set(int(v) for v in members)), f"nesting violated at level {j}"
        for j in range(len(levels) - 1):
            r = radii[j]
            covered = set()
            for m in levels[j]:
                kids = children[j][int(m)]
                dk = self.oracle.rows(self.points[int(m)], self._mat, idx=kids)
                assert (dk <= r).all(), f"parent-child distance above radius at level {j}"
                covered.update(int(v) for v in kids)
            assert covered == set(int(v) for v in levels[j + 1]), (
                f"cover incomplete between levels {j} and {j + 1}"
            )
        # every base point is bucketed at distance zero (or the level cap hit)
        bucket_of = st["bucket_of"]
        if not st["level_cap_hit"]:
            for p in range(len(self.points)):
                dd = self.oracle.distance(self.points[p], self.points[int(bucket_of[p])])
                assert dd == 0.0, "bucketed point does not coincide with its member"


def _build_net_hierarchy(points, labels, oracle):
    n = len(points)
    mat = points_matrix(points) if oracle.payload_kind == "vector" else points

    d0 = oracle.rows(points[0], mat)
    maxd = float(d0.max())

    if maxd == 0.0:
        # all points coincide: one level, one bucket
        members = np.array([0], dtype=np.intp)
        bucket_of = np.zeros(n, dtype=np.intp)
        return _finish_structure(
            [0.0], [members], [], bucket_of, labels, level_cap_hit=False
        )

    r_top = 2.0 ** math.ceil(math.log2(maxd))
    radii = [r_top]
    levels = [np.array([0], dtype=np.intp)]
    children_per_level = []

    assign = np.zeros(n, dtype=np.intp)
    assign_dist = d0.copy()
    is_member = np.zeros(n, dtype=bool)
    is_member[0] = True
    neighbors = {0: np.array([0], dtype=np.intp)}
    level_cap_hit = False

    while assign_dist.max() > 0.0:
        if len(radii) >= _MAX_LEVELS:
            level_cap_hit = True
            break
        r = radii[-1]
        r_next = r / 2.0
        members = levels[-1]

        cell_points = {int(m): [] for m in members}
        for p in range(n):
            cell_points[int(assign[p])].append(p)

        # membership: seed with current members (nets are nested), then admit
        # points in stored order whenever no nearby center is within r_next
        members_by_cell = {int(m): [] for m in members}
        for q in members:
            members_by_cell[int(assign[int(q)])].append(int(q))
        new_members = [int(q) for q in members]
        new_is_member = is_member.copy()
        for p in range(n):
            if new_is_member[p]:
                continue
            cell = int(assign[p])
            cand = []
            for m2 in neighbors[cell]:
                cand.extend(members_by_cell[int(m2)])
            dc = oracle.rows(points[p], mat, idx=np.asarray(cand, dtype=np.intp))
            if (dc > r_next).all():
                new_is_member[p] = True
                new_members.append(p)
                members_by_cell[cell].append(p)
        members_next = np.array(new_members, dtype=np.intp)

        # assignment: nearest next-level member, candidates local to the cell;
        # candidate list sorted so argmin ties pick the lowest point index
        assign_next = np.empty(n, dtype=np.intp)
        assign_dist_next = np.empty(n, dtype=np.float64)
        cell_cand = {}
        for m in members:
            m = int(m)
            cand = []
            for m2 in neighbors[m]:
                cand.extend(members_by_cell[int(m2)])
            cell_cand[m] = np.array(sorted(cand), dtype=np.intp)
        for m in members:
            m = int(m)
            pts = cell_points[m]
            cand = cell_cand[m]
            for p in pts:
                dc = oracle.rows(points[p], mat, idx=cand)
                j = int(np.argmin(dc))
                assign_next[p] = cand[j]
                assign_dist_next[p] = dc[j]

        # tree children: each next-level member hangs under its current cell
        children = {int(m): [] for m in members}
        for q in members_next:
            children[int(assign[int(q)])].append(int(q))
        children_per_level.append(
            {m: np.array(v, dtype=np.intp) for m, v in children.items()}
        )

        # neighbor lists at the next level: members within 4 * r_next
        neighbors_next = {}
        for m in members:
            m = int(m)
            group = children[m]
            if not group:
                continue
            cand = cell_cand[m]
            for q in group:
                dq = oracle.rows(points[q], mat, idx=cand)
                neighbors_next[q] = cand[dq <= 4.0 * r_next]

        radii.append(r_next)
        levels.append(members_next)
        assign = assign_next
        assign_dist = assign_dist_next
        is_member = new_is_member
        neighbors = neighbors_next

    return _finish_structure(
        radii, levels, children_per_level, assign.copy(), labels, level_cap_hit
    )


def _finish_structure(radii, levels, children_per_level, bucket_of, labels, level_cap_hit):
    n = len(bucket_of)
    bottom = levels[-1]

    buckets = {int(m): [] for m in bottom}
    for p in range(n):
        buckets[int(bucket_of[p])].append(p)

    rep_min = {}
    rep_label = {}
    point_mask = {}
    bottom_mask = {}
    for m, plist in buckets.items():
        rep_min[m] = min(plist)
        by_label = {}
        mask = 0
        for p in plist:
            y = int(labels[p])
            mask |= 1 << y
            if y not in by_label or p < by_label[y]:
                by_label[y] = p
        rep_label[m] = by_label
        point_mask[m] = mask
        bottom_mask[m] = mask

    masks = [None] * len(levels)
    masks[-1] = bottom_mask
    for j in range(len(levels) - 2, -1, -1):
        mj = {}
        for m in levels[j]:
            m = int(m)
            acc = 0
            for c in children_per_level[j][m]:
                acc |= masks[j + 1][int(c)]
            mj[m] = acc
        masks[j] = mj

    # non-bottom members also answer queries; their coincident cluster is the
    # bottom bucket of the same point index (nets are nested, so every member
    # appears at the bottom and owns its bucket there)
    return {
        "radii": radii,
        "levels": levels,
        "children": children_per_level,
        "masks": masks,
        "rep_min": rep_min,
        "rep_label": rep_label,
        "point_mask": point_mask,
        "bucket_of": bucket_of,
        "level_cap_hit": level_cap_hit,
    }
