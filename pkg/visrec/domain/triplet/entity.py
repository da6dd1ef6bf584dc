import math
from dataclasses import dataclass, field

from visrec.domain.triplet.constant import (
    FULL_SCALE_K,
    FULL_SCALE_POSITIVE,
    FULL_SCALE_RANK_HI,
    FULL_SCALE_RANK_LO,
    SMALL_CORPUS_LIMIT,
)
from visrec.domain.triplet.enum import TripletClass, Verdict

TripletKey = tuple[str, str, str]


@dataclass(frozen=True)
class CandidateTriplet:
    q: str
    p: str
    n: str
    klass: TripletClass
    # BISS names whose pools produced p and n
    provenance: dict[str, tuple[str, ...]] = field(default_factory=dict, compare=False)

    @property
    def key(self) -> TripletKey:
        return self.q, self.p, self.n

    def swapped(self) -> "CandidateTriplet":
        provenance = {"p": self.provenance.get("n", ()), "n": self.provenance.get("p", ())}
        return CandidateTriplet(q=self.q, p=self.n, n=self.p, klass=self.klass, provenance=provenance)

    def sort_key(self) -> tuple[str, str, str, str]:
        return self.q, self.klass.value, self.n, self.p

    def to_row(self) -> dict:
        return {
            "q": self.q,
            "p": self.p,
            "n": self.n,
            "class": self.klass.value,
            "provenance": {k: list(v) for k, v in sorted(self.provenance.items())},
        }

    @classmethod
    def from_row(cls, row: dict) -> "CandidateTriplet":
        provenance = {k: tuple(v) for k, v in (row.get("provenance") or {}).items()}
        return cls(
            q=str(row["q"]),
            p=str(row["p"]),
            n=str(row["n"]),
            klass=TripletClass(row["class"]),
            provenance=provenance,
        )


@dataclass(frozen=True)
class BissRanking:
    biss: str
    query_id: str
    # (neighbor id, score) ascending by score, ties by ascending id
    neighbors: tuple[tuple[str, float], ...]

    @property
    def ids(self) -> list[str]:
        return [item_id for item_id, _ in self.neighbors]

    def ranks(self, lo: int, hi: int) -> list[str]:
        """Ids ranked in (lo, hi], ranks counted from 1."""
        return self.ids[lo:hi]


@dataclass(frozen=True)
class VettingRecord:
    key: TripletKey
    verdict: Verdict

    @classmethod
    def from_row(cls, row: dict) -> "VettingRecord":
        return cls(key=(str(row["q"]), str(row["p"]), str(row["n"])), verdict=Verdict(row["verdict"]))


@dataclass(frozen=True)
class PoolConfig:
    k: int
    positive: int
    rank_lo: int
    rank_hi: int

    @classmethod
    def full_scale(cls) -> "PoolConfig":
        return cls(
            k=FULL_SCALE_K, positive=FULL_SCALE_POSITIVE, rank_lo=FULL_SCALE_RANK_LO, rank_hi=FULL_SCALE_RANK_HI
        )

    @classmethod
    def for_group_size(cls, n: int) -> "PoolConfig":
        """Keeps the 200/1000 and 500-1000/1000 proportions on small groups."""
        if n >= SMALL_CORPUS_LIMIT:
            return cls.full_scale()
        k = min(math.ceil(0.8 * n), n - 1)
        return cls(k=k, positive=math.ceil(0.2 * k), rank_lo=math.ceil(0.5 * k), rank_hi=k)


@dataclass(frozen=True)
class Pools:
    positive: tuple[str, ...]
    in_class: tuple[str, ...]
    out_of_class: tuple[str, ...]

    def for_class(self, klass: TripletClass) -> tuple[str, ...]:
        return self.in_class if klass == TripletClass.IN_CLASS else self.out_of_class
