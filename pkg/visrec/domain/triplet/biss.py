from abc import ABC, abstractmethod
from collections.abc import Sequence

import numpy as np

from visrec.core.image.ppm import Image
from visrec.domain.catalog.exception import ItemNotFoundError
from visrec.domain.embedding.entity import Params
from visrec.domain.embedding.network import embed_images
from visrec.domain.embedding.repository import load_model
from visrec.domain.triplet.colorhist import colorhist_features
from visrec.domain.triplet.entity import BissRanking
from visrec.domain.triplet.exception import RankSizeError, UnknownBissError

COLORHIST = "colorhist"
EMBED_PREFIX = "embed:"


class Biss(ABC):
    """A cheap similarity ranker used only to bootstrap candidate triplets."""

    name: str

    @abstractmethod
    def featurize(self, images: Sequence[Image]) -> np.ndarray:
        ...

    @abstractmethod
    def distances(self, query: np.ndarray, matrix: np.ndarray) -> np.ndarray:
        ...


class ColorHistBiss(Biss):
    name = COLORHIST

    def featurize(self, images: Sequence[Image]) -> np.ndarray:
        if not images:
            return np.zeros((0, 0))
        return np.stack([colorhist_features(image).values for image in images])

    def distances(self, query: np.ndarray, matrix: np.ndarray) -> np.ndarray:
        return np.sum(np.abs(matrix - query), axis=1)


class EmbeddingBiss(Biss):
    def __init__(self, params: Params, name: str = "embed"):
        self.params = params
        self.name = name

    def featurize(self, images: Sequence[Image]) -> np.ndarray:
        return embed_images(self.params, list(images)).astype(np.float32)

    def distances(self, query: np.ndarray, matrix: np.ndarray) -> np.ndarray:
        diff = matrix.astype(np.float64) - query.astype(np.float64)
        return np.sqrt(np.sum(diff * diff, axis=1))


def get_biss(name: str) -> Biss:
    if name == COLORHIST:
        return ColorHistBiss()
    if name.startswith(EMBED_PREFIX) and len(name) > len(EMBED_PREFIX):
        return EmbeddingBiss(load_model(name[len(EMBED_PREFIX) :]), name=name)
    raise UnknownBissError(name)


class FeatureTable:
    """BISS features of a fixed corpus, rows aligned with ascending ids."""

    def __init__(self, biss: Biss, ids: Sequence[str], matrix: np.ndarray):
        self.biss = biss
        self.ids = list(ids)
        self.matrix = matrix
        self._position = {item_id: i for i, item_id in enumerate(self.ids)}

    @classmethod
    def build(cls, biss: Biss, corpus: dict[str, Image]) -> "FeatureTable":
        ids = sorted(corpus)
        return cls(biss, ids, biss.featurize([corpus[item_id] for item_id in ids]))

    def __len__(self) -> int:
        return len(self.ids)

    def rank(self, query_id: str, k: int) -> BissRanking:
        position = self._position.get(query_id)
        if position is None:
            raise ItemNotFoundError(query_id)
        if k > len(self.ids) - 1:
            raise RankSizeError(k, len(self.ids))

        distances = self.biss.distances(self.matrix[position], self.matrix)
        # ids are ascending, so a stable sort breaks ties by id
        order = np.argsort(distances, kind="stable")
        order = order[order != position][:k]
        neighbors = tuple((self.ids[i], float(distances[i])) for i in order)
        return BissRanking(biss=self.biss.name, query_id=query_id, neighbors=neighbors)


def biss_rank(biss: Biss, query_id: str, corpus: dict[str, Image], k: int) -> BissRanking:
    return FeatureTable.build(biss, corpus).rank(query_id, k)
