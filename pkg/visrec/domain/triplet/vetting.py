from collections.abc import Iterable, Sequence

from visrec.domain.triplet.entity import CandidateTriplet, TripletKey, VettingRecord
from visrec.domain.triplet.enum import Verdict
from visrec.domain.triplet.exception import StaleVettingError


def apply_vetting(candidates: Sequence[CandidateTriplet], records: Iterable[VettingRecord]) -> list[CandidateTriplet]:
    """Vetting is sparse: candidates without a record are kept as they are."""
    keys = {c.key for c in candidates}
    verdicts: dict[TripletKey, Verdict] = {}
    for record in records:
        if record.key not in keys:
            raise StaleVettingError(record.key)
        verdicts[record.key] = record.verdict

    final = []
    for candidate in candidates:
        verdict = verdicts.get(candidate.key, Verdict.ACCEPT)
        if verdict == Verdict.REJECT:
            continue
        final.append(candidate.swapped() if verdict == Verdict.SWAP else candidate)
    return final
