"""Score tables, margins, and the truncated Lipschitz-extension classifier.

The trained artifact keeps a consistent prototype set, a Lipschitz constant,
and a nearest-neighbor index over the prototypes. The decision value for a
query/label pair is assembled from just two distances (nearest same-label
prototype, nearest other-label prototype), evaluated in a split truncated
form whose approximate-oracle error is at most 2 * eta additively.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .ann_index import NnIndex
from .errors import (
    InputError,
    SchemaVersionError,
    TruncationRangeError,
    UnknownLabelError,
)
from .metric_core import MetricOracle, Sample, pairwise_distances

MODEL_SCHEMA = 1
# survivors of the conflict sweep satisfy lipschitz * distance >= 2 up to
# float rounding of the threshold; allow a few ulps when re-checking
_CERT_RTOL = 1e-9


def truncate(a: float, b: float, z: float) -> float:
    """Clamp ``z`` into [a, b]."""
    if a > b:
        raise TruncationRangeError(f"truncation bounds reversed: {a} > {b}")
    return max(a, min(b, z))


def label_sign(y, y2) -> float:
    """+1 when the labels match, -1 otherwise."""
    return 1.0 if y == y2 else -1.0


@dataclass(frozen=True)
class ScoreTable:
    """Per-label scores for one query point."""

    scores: dict

    def __post_init__(self):
        if not self.scores:
            raise InputError("a score table needs at least one label")
        for v in self.scores.values():
            if not math.isfinite(v):
                raise InputError("score table entries must be finite")

    def labels(self):
        return sorted(self.scores)


@dataclass(frozen=True)
class Margin:
    """Half the gap between a label's score and its best competitor,
    truncated to [-1, 1]; ``raw`` keeps the untruncated value."""

    value: float
    raw: float


def margin(scores: ScoreTable, y: int) -> Margin:
    """Margin of label ``y`` in a score table.

    With a single label the competing supremum is empty; the raw margin is
    +inf and truncates to 1.
    """
    if y not in scores.scores:
        raise UnknownLabelError(f"label {y} not present in score table")
    others = [v for lbl, v in scores.scores.items() if lbl != y]
    if others:
        raw = 0.5 * (scores.scores[y] - max(others))
    else:
        raw = math.inf
    return Margin(value=truncate(-1.0, 1.0, raw), raw=raw)


class LipschitzClassifier:
    """Multiclass classifier extending +-1 prototype labels Lipschitz-ly.

    ``eta = 0`` uses exact nearest-neighbor search; ``eta > 0`` uses the
    hierarchical-net approximate index, and every decision value is then
    within 2 * eta of its exact counterpart.
    """

    def __init__(
        self,
        prototypes,
        prototype_labels,
        lipschitz: float,
        oracle: MetricOracle,
        eta: float = 0.0,
        n_classes: int | None = None,
        label_names: dict | None = None,
        bound_report: dict | None = None,
        check_certificate: bool = True,
        _index: NnIndex | None = None,
    ):
        if len(prototypes) == 0:
            raise InputError("prototype set must be nonempty")
        if not lipschitz > 0:
            raise InputError("lipschitz constant must be positive")
        if eta < 0:
            raise InputError("eta must be nonnegative")
        self.prototypes = list(prototypes)
        self.prototype_labels = np.asarray(prototype_labels, dtype=np.int64)
        self.lipschitz = float(lipschitz)
        self.oracle = oracle
        self.eta = float(eta)
        self.n_classes = int(n_classes or self.prototype_labels.max())
        self.label_names = label_names or {
            i: str(i) for i in range(1, self.n_classes + 1)
        }
        self.bound_report = bound_report
        if check_certificate:
            self._check_certificate()
        if _index is not None:
            self.index = _index
        else:
            mode = "exact" if self.eta == 0.0 else "approximate"
            self.index = NnIndex.build(
                self.prototypes, self.prototype_labels, oracle, mode=mode, eta=self.eta
            )

    def _check_certificate(self) -> None:
        """Every cross-label prototype pair must satisfy L * d >= 2 (up to
        rounding); otherwise the ±1 interpolation is impossible."""
        dm = pairwise_distances(self.oracle, self.prototypes)
        lab = self.prototype_labels
        cross = lab[:, None] != lab[None, :]
        np.fill_diagonal(cross, False)
        if cross.any():
            worst = float((self.lipschitz * dm)[cross].min())
            if worst < 2.0 * (1.0 - _CERT_RTOL):
                raise InputError(
                    "prototype set is not consistent at this Lipschitz constant: "
                    f"min cross-label L*d = {worst:.6g} < 2"
                )

    # ------------------------------------------------------------------
    # Scores and decisions
    # ------------------------------------------------------------------

    def nn_scores(self, x) -> ScoreTable:
        """Natural proximity scores: minus the per-label nearest distance."""
        per = self.index.query_per_label(x)
        return ScoreTable(scores={y: -d for y, (d, _) in per.items()})

    def _per_label_distances(self, x) -> np.ndarray:
        """Array over labels 1..k of nearest prototype distance (inf when a
        label has no prototype)."""
        per = self.index.query_per_label(x)
        d = np.full(self.n_classes, np.inf)
        for y, (dist, _) in per.items():
            d[y - 1] = dist
        return d

    @staticmethod
    def _split_form(lip: float, d_same: float, d_other: float) -> float:
        lo = min(1.0 + lip * d_same, -1.0 + lip * d_other)
        hi = max(1.0 - lip * d_same, -1.0 - lip * d_other)
        return 0.5 * (max(-1.0, min(1.0, lo)) + max(-1.0, min(1.0, hi)))

    def decision_values(self, x) -> np.ndarray:
        """Decision value for every label 1..k, each in [-1, 1]."""
        d = self._per_label_distances(x)
        order = np.argsort(d, kind="stable")
        best = float(d[order[0]])
        second = float(d[order[1]]) if d.size > 1 else math.inf
        out = np.empty(self.n_classes)
        for i in range(self.n_classes):
            other = second if i == order[0] else best
            out[i] = self._split_form(self.lipschitz, float(d[i]), other)
        return out

    def decision_value(self, x, y: int) -> float:
        """Decision value of one label, evaluated in the split truncated form."""
        if not (1 <= y <= self.n_classes):
            raise UnknownLabelError(f"label {y} outside 1..{self.n_classes}")
        d = self._per_label_distances(x)
        others = np.delete(d, y - 1)
        d_other = float(others.min()) if others.size else math.inf
        return self._split_form(self.lipschitz, float(d[y - 1]), d_other)

    def raw_extension_score(self, x, y: int) -> float:
        """Untruncated two-sided extension score 0.5 * (min + max); induces
        the same predicted labels as the split truncated form."""
        if not (1 <= y <= self.n_classes):
            raise UnknownLabelError(f"label {y} outside 1..{self.n_classes}")
        d = self._per_label_distances(x)
        others = np.delete(d, y - 1)
        d_other = float(others.min()) if others.size else math.inf
        d_same = float(d[y - 1])
        lip = self.lipschitz
        lo = min(1.0 + lip * d_same, -1.0 + lip * d_other)
        hi = max(1.0 - lip * d_same, -1.0 - lip * d_other)
        return 0.5 * (lo + hi)

    def predict(self, x) -> int:
        """argmax of the decision values; ties go to the lowest label id.
        With exact search this equals the 1-nearest-prototype label under the
        same tie rule."""
        vals = self.decision_values(x)
        return int(np.argmax(vals)) + 1

    def predict_margin(self, x) -> Margin:
        """Margin of the predicted label, truncated to [-1, 1]."""
        vals = self.decision_values(x)
        y = int(np.argmax(vals))
        if vals.size == 1:
            return Margin(value=1.0, raw=math.inf)
        others = np.delete(vals, y)
        raw = 0.5 * (float(vals[y]) - float(others.max()))
        return Margin(value=truncate(-1.0, 1.0, raw), raw=raw)

    # ------------------------------------------------------------------
    # Losses
    # ------------------------------------------------------------------

    def empirical_loss(self, sample: Sample, loss: str = "cutoff") -> float:
        """Mean surrogate loss of the decision values on a labeled sample.

        cutoff: 1 unless the true label's decision value reaches 1.
        margin: 1 - value, clamped to [0, 1].
        zero_one: 1 when the predicted label differs from the true one.
        """
        if loss not in ("cutoff", "margin", "zero_one"):
            raise InputError(f"unknown loss {loss!r}")
        if int(sample.labels.max()) > self.n_classes:
            raise InputError("sample labels outside the model's label set")
        total = 0.0
        for p, y in zip(sample.points, sample.labels):
            if loss == "zero_one":
                total += 1.0 if self.predict(p) != int(y) else 0.0
            else:
                h = self.decision_value(p, int(y))
                if loss == "cutoff":
                    total += 1.0 if h < 1.0 else 0.0
                else:
                    total += truncate(0.0, 1.0, 1.0 - h)
        return total / sample.n

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def to_dict(self) -> dict:
        if self.oracle.payload_kind == "vector":
            pts = [[float(v) for v in p] for p in self.prototypes]
        else:
            pts = list(self.prototypes)
        return {
            "schema": MODEL_SCHEMA,
            "metric": {"kind": self.oracle.kind, "scale": self.oracle.scale},
            "payload_kind": self.oracle.payload_kind,
            "lipschitz": self.lipschitz,
            "eta": self.eta,
            "n_classes": self.n_classes,
            "prototypes": {
                "points": pts,
                "labels": [int(v) for v in self.prototype_labels],
            },
            "label_names": {str(k): v for k, v in self.label_names.items()},
            "bound_report": self.bound_report,
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, doc: dict) -> "LipschitzClassifier":
        schema = doc.get("schema")
        if schema != MODEL_SCHEMA:
            raise SchemaVersionError(
                f"model schema {schema} unsupported; this build reads schema {MODEL_SCHEMA}"
            )
        oracle = MetricOracle(doc["metric"]["kind"], doc["metric"]["scale"])
        if doc["payload_kind"] == "vector":
            pts = [np.array(p, dtype=np.float64) for p in doc["prototypes"]["points"]]
        else:
            pts = list(doc["prototypes"]["points"])
        return cls(
            prototypes=pts,
            prototype_labels=np.array(doc["prototypes"]["labels"], dtype=np.int64),
            lipschitz=doc["lipschitz"],
            oracle=oracle,
            eta=doc["eta"],
            n_classes=doc["n_classes"],
            label_names={int(k): v for k, v in doc["label_names"].items()},
            bound_report=doc.get("bound_report"),
            check_certificate=False,
        )

    @classmethod
    def load(cls, path) -> "LipschitzClassifier":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def with_eta(self, eta: float) -> "LipschitzClassifier":
        """Same prototypes and constant, different search slack."""
        return LipschitzClassifier(
            prototypes=self.prototypes,
            prototype_labels=self.prototype_labels,
            lipschitz=self.lipschitz,
            oracle=self.oracle,
            eta=eta,
            n_classes=self.n_classes,
            label_names=self.label_names,
            bound_report=self.bound_report,
            check_certificate=False,
        )
