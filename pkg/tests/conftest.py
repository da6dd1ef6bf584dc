import numpy as np
import pytest

from visrec.core.image.ppm import Image
from visrec.core.image.synthetic import generate_catalog
from visrec.domain.catalog.entity import ItemMetadata
from visrec.domain.catalog.repository import CatalogRepository
from visrec.domain.embedding.config import ConvSpec, DenseSpec, NetConfig, PoolSpec
from visrec.domain.embedding.network import init_params
from visrec.domain.index.entity import CatalogItem

TINY_SIZE = 8


def tiny_config(**overrides) -> NetConfig:
    """An 8x8 network with every layer type and a 12-d full embedding."""
    fields = dict(
        input_width=TINY_SIZE,
        input_height=TINY_SIZE,
        deep=(ConvSpec(filters=3, kernel=3), PoolSpec(size=2), DenseSpec(units=6)),
        shallow=(
            (ConvSpec(filters=2, kernel=4, stride=2), DenseSpec(units=3)),
            (ConvSpec(filters=2, kernel=8, stride=8), DenseSpec(units=3)),
        ),
        reduced_dim=4,
        channel_mean=(0.5, 0.5, 0.5),
    )
    fields.update(overrides)
    return NetConfig(**fields)


def random_image(rng: np.random.Generator, size: int = TINY_SIZE) -> Image:
    return Image.from_array(rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8))


def make_items(
    count: int, dim: int, seed: int, partitions: list[ItemMetadata] | None = None, prefix: str = "item"
) -> list[CatalogItem]:
    rng = np.random.default_rng(seed)
    partitions = partitions or [ItemMetadata("clothing", "shirt", "female")]
    return [
        CatalogItem(
            id=f"{prefix}-{i:04d}",
            embedding=rng.standard_normal(dim).astype(np.float32),
            metadata=partitions[i % len(partitions)],
        )
        for i in range(count)
    ]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_params():
    return init_params(tiny_config(), seed=7)


@pytest.fixture(scope="session")
def synthetic_corpus(tmp_path_factory) -> CatalogRepository:
    out = tmp_path_factory.mktemp("synthetic")
    generate_catalog(out, per_class=6, seed=3)
    return CatalogRepository.from_manifest(out / "manifest.jsonl")
