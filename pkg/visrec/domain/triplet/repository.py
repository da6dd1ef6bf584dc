from collections.abc import Iterable
from pathlib import Path

from visrec.core.codec.jsonl import JsonlDecodeError, iter_jsonl, write_jsonl
from visrec.domain.triplet.entity import CandidateTriplet, VettingRecord


def read_triplets(path: str | Path) -> list[CandidateTriplet]:
    triplets = []
    for line_no, row in iter_jsonl(path):
        try:
            triplets.append(CandidateTriplet.from_row(row))
        except (KeyError, ValueError) as e:
            raise JsonlDecodeError(str(path), line_no, f"bad triplet: {e}")
    return triplets


def write_triplets(path: str | Path, triplets: Iterable[CandidateTriplet]) -> None:
    write_jsonl(path, (t.to_row() for t in triplets))


def read_vetting(path: str | Path) -> list[VettingRecord]:
    records = []
    for line_no, row in iter_jsonl(path):
        try:
            records.append(VettingRecord.from_row(row))
        except (KeyError, ValueError) as e:
            raise JsonlDecodeError(str(path), line_no, f"bad vetting record: {e}")
    return records
