from collections.abc import Iterable, Sequence

from visrec.domain.triplet.entity import BissRanking, PoolConfig, Pools
from visrec.domain.triplet.exception import EmptyPositivePoolError, RankingMismatchError


def build_pools(query_id: str, rankings: Sequence[BissRanking], cfg: PoolConfig, group_ids: Iterable[str]) -> Pools:
    """Positive, in-class and out-of-class pools of one query.

    positive: union of every ranking's top ``cfg.positive``.
    in-class: union of ranks (rank_lo, rank_hi], minus the positive pool.
    out-of-class: same-group items in no ranking's top ``rank_hi``.
    """
    if not rankings:
        raise RankingMismatchError(f"no BISS rankings for query {query_id}")
    sizes = {len(r.neighbors) for r in rankings}
    if len(sizes) != 1:
        raise RankingMismatchError(f"rankings for query {query_id} have different K: {sorted(sizes)}")
    for ranking in rankings:
        if ranking.query_id != query_id:
            raise RankingMismatchError(f"ranking by {ranking.biss} is for {ranking.query_id}, not {query_id}")

    positive: set[str] = set()
    middle: set[str] = set()
    near: set[str] = set()
    for ranking in rankings:
        positive.update(ranking.ids[: cfg.positive])
        middle.update(ranking.ranks(cfg.rank_lo, cfg.rank_hi))
        near.update(ranking.ids[: cfg.rank_hi])

    if not positive:
        raise EmptyPositivePoolError(query_id)

    in_class = middle - positive
    out_of_class = set(group_ids) - near - {query_id}
    return Pools(
        positive=tuple(sorted(positive)),
        in_class=tuple(sorted(in_class)),
        out_of_class=tuple(sorted(out_of_class)),
    )
