"""Metric oracles, labeled samples, normalization, and intrinsic-dimension estimation.

Points are either dense real vectors (``numpy`` 1-D arrays) or plain strings.
A :class:`MetricOracle` pairs a metric kind with a positive scale factor;
``normalize_sample`` returns a rescaled oracle under which the maximum
pairwise distance of a sample is exactly 1, which is the convention every
bound calculator in this package assumes.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateDiameterError,
    IngestError,
    InputError,
    PayloadMismatchError,
)

VECTOR_KINDS = ("l1", "l2", "linf")
STRING_KINDS = ("levenshtein",)
METRIC_KINDS = VECTOR_KINDS + STRING_KINDS


def levenshtein(a: str, b: str) -> int:
    """Edit distance between two strings, exact integer arithmetic."""
    n, m = len(a), len(b)
    if n > m:
        a, b, n, m = b, a, m, n
    current = list(range(n + 1))
    for i in range(1, m + 1):
        previous, current = current, [i] + [0] * n
        for j in range(1, n + 1):
            add, delete = previous[j] + 1, current[j - 1] + 1
            change = previous[j - 1] + (a[j - 1] != b[i - 1])
            current[j] = min(add, delete, change)
    return current[n]


def _is_vector(p) -> bool:
    return isinstance(p, np.ndarray) or (
        isinstance(p, (list, tuple)) and not isinstance(p, str)
    )


def as_vector(p) -> np.ndarray:
    return np.asarray(p, dtype=np.float64)


@dataclass(frozen=True)
class MetricOracle:
    """A distance function: one of l1 / l2 / linf / levenshtein, times ``scale``.

    Immutable; safe to share across threads.
    """

    kind: str
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in METRIC_KINDS:
            raise InputError(f"unknown metric kind {self.kind!r}; expected one of {METRIC_KINDS}")
        if not (self.scale > 0.0 and math.isfinite(self.scale)):
            raise InputError(f"metric scale must be positive and finite, got {self.scale}")

    @property
    def payload_kind(self) -> str:
        return "string" if self.kind in STRING_KINDS else "vector"

    def check_payload(self, p) -> None:
        if self.payload_kind == "string":
            if not isinstance(p, str):
                raise PayloadMismatchError(
                    f"{self.kind} metric needs string payloads, got {type(p).__name__}"
                )
        else:
            if isinstance(p, str) or not _is_vector(p):
                raise PayloadMismatchError(
                    f"{self.kind} metric needs vector payloads, got {type(p).__name__}"
                )

    def distance(self, a, b) -> float:
        """Scaled distance between two points; raises on payload mismatch."""
        self.check_payload(a)
        self.check_payload(b)
        if self.kind in STRING_KINDS:
            return self.scale * levenshtein(a, b)
        va, vb = as_vector(a), as_vector(b)
        if va.shape != vb.shape:
            raise PayloadMismatchError(
                f"vector length mismatch: {va.shape[0]} vs {vb.shape[0]}"
            )
        diff = vb - va
        if self.kind == "l1":
            raw = np.abs(diff).sum()
        elif self.kind == "l2":
            raw = math.sqrt(float((diff * diff).sum()))
        else:
            raw = np.abs(diff).max() if diff.size else 0.0
        return self.scale * float(raw)

    def rows(self, x, points, idx=None) -> np.ndarray:
        """Distances from ``x`` to ``points[i]`` for i in ``idx`` (all if None).

        This single kernel backs both brute-force scans and hierarchical-net
        searches so the two produce bit-identical distances.
        """
        self.check_payload(x)
        if self.kind in STRING_KINDS:
            sel = range(len(points)) if idx is None else idx
            return self.scale * np.array(
                [levenshtein(x, points[i]) for i in sel], dtype=np.float64
            )
        mat = points if isinstance(points, np.ndarray) else np.asarray(points, dtype=np.float64)
        if idx is not None:
            mat = mat[np.asarray(idx, dtype=np.intp)]
        xv = as_vector(x)
        if mat.ndim != 2 or (mat.size and mat.shape[1] != xv.shape[0]):
            raise PayloadMismatchError("query vector length does not match indexed points")
        diff = mat - xv
        if self.kind == "l1":
            raw = np.abs(diff).sum(axis=1)
        elif self.kind == "l2":
            raw = np.sqrt((diff * diff).sum(axis=1))
        else:
            raw = np.abs(diff).max(axis=1) if mat.shape[0] else np.zeros(0)
        return self.scale * raw

    def rescaled(self, factor: float) -> "MetricOracle":
        return MetricOracle(self.kind, self.scale * factor)


def distance(oracle: MetricOracle, a, b) -> float:
    """Module-level alias for :meth:`MetricOracle.distance`."""
    return oracle.distance(a, b)


def points_matrix(points) -> np.ndarray:
    """Stack vector payloads into one (n, d) float64 matrix."""
    return np.asarray(points, dtype=np.float64)


def pairwise_distances(oracle: MetricOracle, points, threads: int = 1) -> np.ndarray:
    """Full symmetric pairwise-distance matrix.

    With ``threads > 1`` rows are computed in fixed blocks by a thread pool;
    every block is a pure function writing a disjoint slice of a preallocated
    array, so the result is bit-identical for any thread count.
    """
    n = len(points)
    out = np.zeros((n, n), dtype=np.float64)
    if n == 0:
        return out
    if oracle.kind in STRING_KINDS:
        for i in range(n):
            for j in range(i + 1, n):
                out[i, j] = out[j, i] = oracle.scale * levenshtein(points[i], points[j])
        return out
    mat = points_matrix(points)

    def fill(i0: int, i1: int) -> None:
        for i in range(i0, i1):
            out[i, :] = oracle.rows(mat[i], mat)

    threads = max(1, int(threads))
    if threads == 1 or n < 64:
        fill(0, n)
    else:
        block = max(1, (n + threads - 1) // threads)
        ranges = [(s, min(n, s + block)) for s in range(0, n, block)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda r: fill(*r), ranges))
    return out


@dataclass
class Sample:
    """An ordered labeled point set with dense integer labels 1..k.

    ``label_names`` maps each dense id back to the original label string.
    """

    points: list
    labels: np.ndarray
    n_classes: int
    label_names: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.points) != len(self.labels):
            raise InputError("points and labels must have equal length")
        if len(self.points) < 1:
            raise InputError("a sample needs at least one point")
        present = set(int(v) for v in np.unique(self.labels))
        if present != set(range(1, self.n_classes + 1)):
            raise InputError(
                f"labels must be dense ids 1..{self.n_classes}; saw {sorted(present)}"
            )
        kinds = {isinstance(p, str) for p in self.points}
        if len(kinds) > 1:
            raise PayloadMismatchError("cannot mix string and vector payloads in one sample")
        if not kinds.pop():
            lengths = {len(as_vector(p)) for p in self.points}
            if len(lengths) > 1:
                raise PayloadMismatchError(
                    f"vector payloads must share one length, saw lengths {sorted(lengths)}"
                )
            self.points = [as_vector(p) for p in self.points]
        if not self.label_names:
            self.label_names = {i: str(i) for i in range(1, self.n_classes + 1)}

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def payload_kind(self) -> str:
        return "string" if isinstance(self.points[0], str) else "vector"

    @classmethod
    def from_labeled(cls, points, raw_labels) -> "Sample":
        """Build a sample, remapping arbitrary labels to dense ids.

        Original labels are sorted by string form, so the dense id order is
        stable across runs and platforms.
        """
        raw = [str(r) for r in raw_labels]
        uniq = sorted(set(raw))
        to_id = {name: i + 1 for i, name in enumerate(uniq)}
        labels = np.array([to_id[r] for r in raw], dtype=np.int64)
        names = {i + 1: name for i, name in enumerate(uniq)}
        return cls(points=list(points), labels=labels, n_classes=len(uniq), label_names=names)


def sample_diameter(sample: Sample, oracle: MetricOracle, threads: int = 1) -> float:
    dm = pairwise_distances(oracle, sample.points, threads=threads)
    return float(dm.max())


def normalize_sample(sample: Sample, oracle: MetricOracle, threads: int = 1) -> MetricOracle:
    """Oracle rescaled so the sample's largest pairwise distance is exactly 1."""
    if sample.n < 2:
        raise DegenerateDiameterError("normalization needs at least two points")
    diam = sample_diameter(sample, oracle, threads=threads)
    if diam == 0.0:
        raise DegenerateDiameterError("all points coincide; diameter is zero")
    return oracle.rescaled(1.0 / diam)


def covering_bound(epsilon: float, diam: float, ddim: float) -> float:
    """Upper bound (2*diam/epsilon)**ddim on the epsilon-covering number.

    For epsilon >= 2*diam the raw value is <= 1; callers counting balls
    should clamp to at least 1.
    """
    if not epsilon > 0:
        raise InputError("epsilon must be positive")
    return float((2.0 * diam / epsilon) ** ddim)


@dataclass(frozen=True)
class DoublingEstimate:
    """Estimated (or user-asserted) doubling dimension of a point set."""

    ddim: float
    method: str  # "user-supplied" | "net-counting"
    scales_examined: tuple = ()
    net_sizes: tuple = ()

    def __post_init__(self):
        if self.ddim < 0:
            raise InputError("doubling dimension cannot be negative")


def user_ddim(value: float) -> DoublingEstimate:
    return DoublingEstimate(ddim=float(value), method="user-supplied")


def _greedy_net_size(dm: np.ndarray, radius: float) -> int:
    """Greedy net over stored order: a point joins iff farther than ``radius``
    from every current center. Deterministic for a fixed point order."""
    centers = [0]
    n = dm.shape[0]
    for p in range(1, n):
        if (dm[p, centers] > radius).all():
            centers.append(p)
    return len(centers)


def estimate_ddim(sample: Sample, oracle: MetricOracle, threads: int = 1) -> DoublingEstimate:
    """Net-counting estimate of the doubling dimension.

    Greedy net sizes N(r) are computed at radii diam / 2**j for
    j = 0..floor(log2 n); the estimate is the largest log2 growth ratio
    between consecutive scales. For a 2-point sample this yields exactly 1.
    The value is a pragmatic summary of the sample geometry, not a certified
    dimension of any ambient space.
    """
    if sample.n < 2:
        raise InputError("dimension estimation needs at least two points")
    dm = pairwise_distances(oracle, sample.points, threads=threads)
    diam = float(dm.max())
    if diam == 0.0:
        raise DegenerateDiameterError("all points coincide; cannot estimate dimension")
    levels = int(math.floor(math.log2(sample.n)))
    radii = [diam / (2.0 ** j) for j in range(0, levels + 1)]
    sizes = [_greedy_net_size(dm, r) for r in radii]
    est = 0.0
    for a, b in zip(sizes, sizes[1:]):
        est = max(est, math.log2(b / a))
    return DoublingEstimate(
        ddim=est,
        method="net-counting",
        scales_examined=tuple(radii),
        net_sizes=tuple(sizes),
    )


# ---------------------------------------------------------------------------
# Dataset ingestion
# ---------------------------------------------------------------------------

def ingest_csv(path) -> Sample:
    """Read ``label,v1,v2,...`` rows. Malformed rows abort with their number."""
    points, labels = [], []
    width = None
    with open(path, newline="") as fh:
        for rownum, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 2:
                raise IngestError(f"{path}: row {rownum}: expected label and vector components")
            try:
                vec = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise IngestError(f"{path}: row {rownum}: {exc}") from exc
            if width is None:
                width = len(vec)
            elif len(vec) != width:
                raise IngestError(
                    f"{path}: row {rownum}: vector length {len(vec)} != {width}"
                )
            labels.append(row[0].strip())
            points.append(np.array(vec, dtype=np.float64))
    if not points:
        raise IngestError(f"{path}: no data rows")
    return Sample.from_labeled(points, labels)


def ingest_jsonl(path) -> Sample:
    """Read JSON lines with ``label`` plus either ``vector`` or ``string``."""
    points, labels = [], []
    kind = None
    with open(path) as fh:
        for rownum, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"{path}: row {rownum}: {exc}") from exc
            if not isinstance(obj, dict) or "label" not in obj:
                raise IngestError(f"{path}: row {rownum}: object with 'label' required")
            if ("vector" in obj) == ("string" in obj):
                raise IngestError(
                    f"{path}: row {rownum}: exactly one of 'vector' or 'string' required"
                )
            this_kind = "vector" if "vector" in obj else "string"
            if kind is None:
                kind = this_kind
            elif kind != this_kind:
                raise IngestError(f"{path}: row {rownum}: mixed vector and string payloads")
            if this_kind == "vector":
                try:
                    points.append(np.array([float(v) for v in obj["vector"]], dtype=np.float64))
                except (TypeError, ValueError) as exc:
                    raise IngestError(f"{path}: row {rownum}: bad vector: {exc}") from exc
            else:
                if not isinstance(obj["string"], str):
                    raise IngestError(f"{path}: row {rownum}: 'string' must be a string")
                points.append(obj["string"])
            labels.append(str(obj["label"]))
    if not points:
        raise IngestError(f"{path}: no data rows")
    try:
        return Sample.from_labeled(points, labels)
    except InputError as exc:
        raise IngestError(f"{path}: {exc}") from exc


def ingest(path, fmt: str | None = None) -> Sample:
    """Dispatch on extension (or explicit ``fmt``): .csv or .jsonl."""
    name = str(path)
    if fmt is None:
        if name.endswith(".csv"):
            fmt = "csv"
        elif name.endswith(".jsonl") or name.endswith(".ndjson"):
            fmt = "jsonl"
        else:
            raise IngestError(f"{path}: cannot infer format; pass csv or jsonl explicitly")
    if fmt == "csv":
        return ingest_csv(path)
    if fmt == "jsonl":
        return ingest_jsonl(path)
    raise IngestError(f"unknown dataset format {fmt!r}")
