from dataclasses import dataclass, field
from typing import Any

from visrec.domain.evaluation.constant import ALL_CATEGORIES, RATING_LABELS
from visrec.domain.evaluation.exception import InvalidGroundTruthError


@dataclass(frozen=True)
class AccuracyResult:
    """Percentages; a class without triplets is None."""

    in_class: float | None
    out_of_class: float | None
    total: float | None
    in_class_count: int = 0
    out_of_class_count: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "in_class": self.in_class,
            "in_class_count": self.in_class_count,
            "out_of_class": self.out_of_class,
            "out_of_class_count": self.out_of_class_count,
            "total": self.total,
        }


@dataclass(frozen=True)
class GroundTruthQuery:
    matches: frozenset[str]
    query_id: str | None = None
    query_image: str | None = None
    category: str | None = None

    def __post_init__(self) -> None:
        if (self.query_id is None) == (self.query_image is None):
            raise InvalidGroundTruthError("exactly one of query_id and query_image is required")
        if not self.matches:
            raise InvalidGroundTruthError(f"empty match set for {self.query_id or self.query_image}")

    @classmethod
    def from_row(cls, row: dict[str, Any]) -> "GroundTruthQuery":
        return cls(
            matches=frozenset(str(m) for m in row.get("matches") or ()),
            query_id=row.get("query_id"),
            query_image=row.get("query_image"),
            category=row.get("category"),
        )


@dataclass(frozen=True)
class RecallCurve:
    method: str
    category: str
    ks: tuple[int, ...]
    # percentages aligned with ks
    recall: tuple[float, ...]
    queries: int

    def label(self) -> str:
        return self.method if self.category == ALL_CATEGORIES else f"{self.method} / {self.category}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "category": self.category,
            "ks": list(self.ks),
            "method": self.method,
            "queries": self.queries,
            "recall": list(self.recall),
        }


@dataclass(frozen=True)
class RatingSummary:
    counts: dict[str, int]

    @classmethod
    def from_labels(cls, labels: list[str]) -> "RatingSummary":
        counts = {label: 0 for label in RATING_LABELS}
        for label in labels:
            if label not in counts:
                raise InvalidGroundTruthError(f"unknown rating {label!r}; expected one of {', '.join(RATING_LABELS)}")
            counts[label] += 1
        return cls(counts=counts)

    @property
    def total(self) -> int:
        return sum(self.counts.values())


@dataclass
class EvalReport:
    accuracy: dict[str, AccuracyResult] = field(default_factory=dict)
    recall: list[RecallCurve] = field(default_factory=list)
    ratings: RatingSummary | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "accuracy": {method: result.to_dict() for method, result in sorted(self.accuracy.items())},
            "ratings": dict(self.ratings.counts) if self.ratings is not None else None,
            "recall": [curve.to_dict() for curve in sorted(self.recall, key=lambda c: (c.method, c.category))],
        }
