import logging
import math
from collections.abc import Sequence

import numpy as np

from visrec.domain.catalog.repository import CatalogRepository
from visrec.domain.triplet.biss import Biss, FeatureTable
from visrec.domain.triplet.constant import DEFAULT_IN_CLASS_MIX, MAX_ATTEMPTS_PER_TRIPLET
from visrec.domain.triplet.entity import BissRanking, CandidateTriplet, PoolConfig, Pools, TripletKey
from visrec.domain.triplet.enum import TripletClass
from visrec.domain.triplet.exception import EmptyPositivePoolError
from visrec.domain.triplet.pools import build_pools

logger = logging.getLogger(__name__)


def class_counts(count: int, mix: float) -> dict[TripletClass, int]:
    in_class = math.floor(mix * count + 0.5)
    return {TripletClass.IN_CLASS: in_class, TripletClass.OUT_OF_CLASS: count - in_class}


class _QueryPools:
    """Lazily ranked pools per query, each ranking restricted to the query's category group."""

    def __init__(self, corpus: CatalogRepository, biss_list: Sequence[Biss], pool_config: PoolConfig | None):
        self.corpus = corpus
        self.biss_list = biss_list
        self.pool_config = pool_config
        self._tables: dict[str, list[FeatureTable]] = {}
        self._pools: dict[str, tuple[Pools, list[BissRanking], PoolConfig] | None] = {}

    def _group_tables(self, group: str) -> list[FeatureTable]:
        tables = self._tables.get(group)
        if tables is None:
            ids = self.corpus.group_ids(group)
            images = self.corpus.images(ids)
            tables = [FeatureTable(biss, ids, biss.featurize(images)) for biss in self.biss_list]
            self._tables[group] = tables
        return tables

    def get(self, query_id: str) -> tuple[Pools, list[BissRanking], PoolConfig] | None:
        if query_id in self._pools:
            return self._pools[query_id]

        group = self.corpus.get(query_id).metadata.category_group
        tables = self._group_tables(group)
        group_ids = tables[0].ids
        cfg = self.pool_config or PoolConfig.for_group_size(len(group_ids))
        entry: tuple[Pools, list[BissRanking], PoolConfig] | None
        try:
            if cfg.k <= 0 or cfg.k > len(group_ids) - 1:
                raise EmptyPositivePoolError(query_id)
            rankings = [table.rank(query_id, cfg.k) for table in tables]
            entry = (build_pools(query_id, rankings, cfg, group_ids), rankings, cfg)
        except EmptyPositivePoolError as e:
            logger.warning(f"Skipping query: {e.detail} (group {group!r} has {len(group_ids)} items)")
            entry = None
        self._pools[query_id] = entry
        return entry


def _provenance(item_id: str, rankings: list[BissRanking], lo: int, hi: int) -> tuple[str, ...]:
    return tuple(r.biss for r in rankings if item_id in r.ids[lo:hi])


def generate_candidates(
    corpus: CatalogRepository,
    biss_list: Sequence[Biss],
    count: int,
    mix: float = DEFAULT_IN_CLASS_MIX,
    seed: int = 0,
    pool_config: PoolConfig | None = None,
) -> list[CandidateTriplet]:
    """Samples ``count`` unique candidate triplets with exactly round(mix * count) in-class.

    q is uniform over the whole catalog, p uniform over its positive pool and n
    uniform over the pool of the triplet's class. A class whose pools run dry
    yields fewer triplets and a warning. Output is in canonical (q, class, n) order.
    """
    if count <= 0:
        raise ValueError(f"count must be positive, got {count}")
    if not biss_list:
        raise ValueError("at least one BISS is required")

    rng = np.random.default_rng(seed)
    all_ids = corpus.ids()
    pools = _QueryPools(corpus, biss_list, pool_config)
    emitted: set[TripletKey] = set()
    triplets: list[CandidateTriplet] = []

    for klass, target in class_counts(count, mix).items():
        made = 0
        attempts = 0
        while made < target and attempts < MAX_ATTEMPTS_PER_TRIPLET * target:
            attempts += 1
            q = all_ids[int(rng.integers(len(all_ids)))]
            entry = pools.get(q)
            if entry is None:
                continue
            query_pools, rankings, cfg = entry
            negatives = query_pools.for_class(klass)
            if not negatives:
                continue
            p = query_pools.positive[int(rng.integers(len(query_pools.positive)))]
            n = negatives[int(rng.integers(len(negatives)))]
            if p == n or (q, p, n) in emitted:
                continue

            if klass == TripletClass.IN_CLASS:
                n_sources = _provenance(n, rankings, cfg.rank_lo, cfg.rank_hi)
            else:
                n_sources = ()
            provenance = {"p": _provenance(p, rankings, 0, cfg.positive), "n": n_sources}
            triplets.append(CandidateTriplet(q=q, p=p, n=n, klass=klass, provenance=provenance))
            emitted.add((q, p, n))
            made += 1

        if made < target:
            logger.warning(f"Pool exhaustion: emitted {made}/{target} {klass.value} triplets")

    logger.info(f"Generated {len(triplets)} candidate triplets from {len(all_ids)} items")
    return sorted(triplets, key=CandidateTriplet.sort_key)
