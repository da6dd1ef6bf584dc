import math
from collections import defaultdict
from collections.abc import Callable, Iterable, Mapping, Sequence

import numpy as np

from visrec.core.image.ppm import Image
from visrec.domain.embedding.entity import Params
from visrec.domain.embedding.network import embed_images
from visrec.domain.evaluation.constant import ALL_CATEGORIES
from visrec.domain.evaluation.entity import AccuracyResult, GroundTruthQuery, RecallCurve
from visrec.domain.evaluation.exception import InvalidGroundTruthError, MissingIdsError, TripletOverlapError
from visrec.domain.index.knn import KnnIndex
from visrec.domain.triplet.biss import Biss
from visrec.domain.triplet.entity import CandidateTriplet
from visrec.domain.triplet.enum import TripletClass

Distance = Callable[[str, str], float]


def _percent(hits: int, count: int) -> float | None:
    return 100.0 * hits / count if count else None


def triplet_accuracy(distance: Distance, triplets: Sequence[CandidateTriplet]) -> AccuracyResult:
    """A triplet scores 1 when D(q, p) < D(q, n) strictly; ties score 0."""
    hits = {klass: 0 for klass in TripletClass}
    counts = {klass: 0 for klass in TripletClass}
    for t in triplets:
        counts[t.klass] += 1
        if distance(t.q, t.p) < distance(t.q, t.n):
            hits[t.klass] += 1
    return AccuracyResult(
        in_class=_percent(hits[TripletClass.IN_CLASS], counts[TripletClass.IN_CLASS]),
        out_of_class=_percent(hits[TripletClass.OUT_OF_CLASS], counts[TripletClass.OUT_OF_CLASS]),
        total=_percent(sum(hits.values()), sum(counts.values())),
        in_class_count=counts[TripletClass.IN_CLASS],
        out_of_class_count=counts[TripletClass.OUT_OF_CLASS],
    )


def feature_distance(features: Mapping[str, np.ndarray]) -> Distance:
    def distance(a: str, b: str) -> float:
        diff = features[a].astype(np.float64) - features[b].astype(np.float64)
        return float(np.sqrt(np.sum(diff * diff)))

    return distance


def _referenced_ids(triplets: Iterable[CandidateTriplet]) -> list[str]:
    return sorted({item_id for t in triplets for item_id in t.key})


def model_distance(
    params: Params, images: Mapping[str, Image], triplets: Sequence[CandidateTriplet], use_projection: bool = True
) -> Distance:
    """Euclidean distance between the model's embeddings of every referenced image."""
    ids = _referenced_ids(triplets)
    rows = embed_images(params, [images[item_id] for item_id in ids], use_projection=use_projection)
    return feature_distance({item_id: rows[i].astype(np.float32) for i, item_id in enumerate(ids)})


def biss_distance(biss: Biss, images: Mapping[str, Image], triplets: Sequence[CandidateTriplet]) -> Distance:
    """The BISS's own distance, so a bootstrap scorer is evaluated like a trained model."""
    ids = _referenced_ids(triplets)
    matrix = biss.featurize([images[item_id] for item_id in ids])
    position = {item_id: i for i, item_id in enumerate(ids)}

    def distance(a: str, b: str) -> float:
        return float(biss.distances(matrix[position[a]], matrix[position[b]][None, :])[0])

    return distance


def recall_at_k(
    index: KnnIndex,
    ground_truth: Sequence[GroundTruthQuery],
    ks: Sequence[int],
    method: str = "model",
    embed_query_image: Callable[[str], np.ndarray] | None = None,
) -> list[RecallCurve]:
    """Percent of queries, per category, whose top-k intersects the match set.

    Recall goes through the index query path over every partition; an id query
    leaves itself out.
    """
    ks = tuple(sorted(set(ks)))
    if not ks or ks[0] < 0:
        raise InvalidGroundTruthError(f"invalid k values {list(ks)}")

    missing = sorted(
        {item_id for q in ground_truth for item_id in q.matches if item_id not in index}
        | {q.query_id for q in ground_truth if q.query_id is not None and q.query_id not in index}
    )
    if missing:
        raise MissingIdsError(missing)

    k_max = ks[-1]
    hits: dict[str, list[int]] = defaultdict(lambda: [0] * len(ks))
    totals: dict[str, int] = defaultdict(int)
    for q in ground_truth:
        if q.query_id is not None:
            item = index.item(q.query_id)
            neighbors = index.query(item.embedding, k_max, exclude=q.query_id)
            category = q.category or item.metadata.category_group
        else:
            if embed_query_image is None:
                raise InvalidGroundTruthError("image queries need a model to embed the query image")
            assert q.query_image is not None
            neighbors = index.query(embed_query_image(q.query_image), k_max)
            category = q.category or ALL_CATEGORIES

        retrieved = neighbors.ids
        totals[category] += 1
        for i, k in enumerate(ks):
            if q.matches.intersection(retrieved[:k]):
                hits[category][i] += 1

    return [
        RecallCurve(
            method=method,
            category=category,
            ks=ks,
            recall=tuple(100.0 * h / totals[category] for h in hits[category]),
            queries=totals[category],
        )
        for category in sorted(totals)
    ]


def split_triplets(
    triplets: Sequence[CandidateTriplet], holdout: float, seed: int
) -> tuple[list[CandidateTriplet], list[CandidateTriplet]]:
    """(train, eval) split by triplet key, so the two sets never share a key."""
    if not 0.0 <= holdout <= 1.0:
        raise ValueError(f"holdout must be in [0, 1], got {holdout}")
    keys = sorted({t.key for t in triplets})
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(keys))
    n_eval = math.floor(holdout * len(keys) + 0.5)
    eval_keys = {keys[i] for i in order[:n_eval]}

    train, evaluation, seen = [], [], set()
    for t in triplets:
        if t.key in seen:
            continue
        seen.add(t.key)
        (evaluation if t.key in eval_keys else train).append(t)
    return train, evaluation


def assert_disjoint(evaluation: Iterable[CandidateTriplet], train: Iterable[CandidateTriplet]) -> None:
    train_keys = {t.key for t in train}
    overlap = sum(1 for t in evaluation if t.key in train_keys)
    if overlap:
        raise TripletOverlapError(overlap)
