import json
from dataclasses import dataclass, field

import numpy as np

from visrec.core.exception.base import DimensionMismatchError
from visrec.core.image.ppm import Image
from visrec.domain.embedding.config import NetConfig
from visrec.domain.embedding.constant import PROJECTION_BIAS, PROJECTION_WEIGHT


@dataclass(frozen=True)
class Embedding:
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.ascontiguousarray(self.values, dtype=np.float32))

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.values.astype(np.float64) ** 2)))

    def to_json(self) -> str:
        return embedding_to_json(self.values)

    def check_dim(self, other: "Embedding") -> None:
        if self.dim != other.dim:
            raise DimensionMismatchError(self.dim, other.dim)


def embedding_to_json(values: np.ndarray) -> str:
    return json.dumps([float(v) for v in np.asarray(values, dtype=np.float32)])


@dataclass
class Params:
    """The single shared weight set; tensors are kept in declaration order."""

    config: NetConfig
    tensors: dict[str, np.ndarray]

    def copy(self) -> "Params":
        return Params(config=self.config, tensors={k: v.copy() for k, v in self.tensors.items()})

    @property
    def has_projection(self) -> bool:
        return PROJECTION_WEIGHT in self.tensors

    @property
    def output_dim(self) -> int:
        if self.has_projection:
            return int(self.tensors[PROJECTION_WEIGHT].shape[1])
        return self.config.full_dim

    def without_projection(self) -> "Params":
        tensors = {k: v for k, v in self.tensors.items() if k not in (PROJECTION_WEIGHT, PROJECTION_BIAS)}
        return Params(config=self.config, tensors=tensors)

    def with_projection(self, weight: np.ndarray, bias: np.ndarray) -> "Params":
        tensors = dict(self.without_projection().tensors)
        tensors[PROJECTION_WEIGHT] = np.asarray(weight, dtype=np.float64)
        tensors[PROJECTION_BIAS] = np.asarray(bias, dtype=np.float64)
        return Params(config=self.config, tensors=tensors)

    def is_finite(self) -> bool:
        return all(bool(np.all(np.isfinite(v))) for v in self.tensors.values())


@dataclass
class TripletBatch:
    triplets: list[tuple[Image, Image, Image]]
    classes: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.triplets)


@dataclass
class TrainResult:
    params: Params
    epoch_losses: list[float]
