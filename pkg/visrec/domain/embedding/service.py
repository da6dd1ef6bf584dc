from visrec.core.image.ppm import Image, decode_ppm
from visrec.domain.embedding.entity import Embedding
from visrec.domain.embedding.network import forward
from visrec.domain.embedding.repository import ModelRegistry


class EmbeddingService:
    """The feature-vector extractor shared by ingestion, serving and the embed CLI."""

    def __init__(self, model_registry: ModelRegistry):
        self.model_registry = model_registry

    def extract(self, image: Image, group: str | None = None) -> Embedding:
        return forward(self.model_registry.get(group), image)

    def extract_payload(self, payload: bytes, group: str | None = None) -> Embedding:
        return self.extract(decode_ppm(payload), group)

    def dim(self, group: str | None = None) -> int:
        return self.model_registry.get(group).output_dim
