"""Scaled end-to-end runs on the synthetic catalog; run with ``pytest -m slow``."""

import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from tests.conftest import tiny_config
from visrec.container import Container
from visrec.core.image.ppm import read_ppm
from visrec.core.image.synthetic import generate_catalog
from visrec.domain.catalog.repository import CatalogRepository
from visrec.domain.embedding.config import NetConfig, TrainHyper
from visrec.domain.embedding.network import estimate_channel_mean, forward, init_params
from visrec.domain.embedding.repository import ModelRegistry
from visrec.domain.embedding.service import EmbeddingService
from visrec.domain.embedding.trainer import train, train_projection
from visrec.domain.evaluation.service import assert_disjoint, model_distance, split_triplets, triplet_accuracy
from visrec.domain.index.knn import KnnIndex
from visrec.domain.index.publisher import GenerationPublisher
from visrec.domain.ingest.entity import RefreshPolicy
from visrec.domain.ingest.repository import FeatureStore
from visrec.domain.ingest.service import IngestService
from visrec.domain.recommendation.config import ServiceConfig
from visrec.domain.recommendation.service import RecommendationService
from visrec.domain.triplet.biss import ColorHistBiss
from visrec.domain.triplet.service import generate_candidates
from visrec.server import create_app
from visrec.worker.ingestion.worker import EventLogTailer, IngestionWorker

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy")
    generate_catalog(out, per_class=200, seed=0)
    corpus = CatalogRepository.from_manifest(out / "manifest.jsonl")
    triplets = generate_candidates(corpus, [ColorHistBiss()], count=3000, mix=0.3, seed=0)
    train_set, held_out = split_triplets(triplets, holdout=0.2, seed=0)
    assert_disjoint(held_out, train_set)

    images = {item_id: corpus.image(item_id) for t in triplets for item_id in t.key}
    config = NetConfig(channel_mean=estimate_channel_mean(corpus.images(corpus.ids())))
    result = train(init_params(config, seed=0), train_set, images, TrainHyper(epochs=20))
    return result, train_set, held_out, images


def test_loss_goes_down(toy_run):
    result, *_ = toy_run
    assert result.epoch_losses[-1] < result.epoch_losses[0]


def test_held_out_triplet_accuracy(toy_run):
    result, _, held_out, images = toy_run
    accuracy = triplet_accuracy(model_distance(result.params, images, held_out), held_out)
    assert accuracy.total >= 90.0
    assert accuracy.in_class >= 80.0


def test_reduced_embedding_stays_close(toy_run):
    result, train_set, held_out, images = toy_run
    full = triplet_accuracy(model_distance(result.params, images, held_out, use_projection=False), held_out)
    reduced_params = train_projection(result.params, train_set, images, TrainHyper(epochs=10)).params
    assert reduced_params.output_dim == 64
    reduced = triplet_accuracy(model_distance(reduced_params, images, held_out), held_out)
    assert reduced.total >= full.total - 5.0


def test_ingest_serve_and_dedup_end_to_end(tmp_path):
    rows = generate_catalog(tmp_path / "corpus", per_class=125, seed=5, size=16)
    params = init_params(tiny_config(input_width=16, input_height=16), seed=3)
    planted = [rows[i * 97] for i in range(10)]
    events = [
        {key: row[key] for key in ("id", "image", "category_group", "vertical", "gender")} | {"op": "insert"}
        for row in rows + [{**row, "id": f"dup-{i}"} for i, row in enumerate(planted)]
    ]
    log = tmp_path / "events.jsonl"
    log.write_text("".join(json.dumps({**event, "seq": seq}) + "\n" for seq, event in enumerate(events, start=1)))

    model_registry = ModelRegistry.single(params)
    embedding_service = EmbeddingService(model_registry)
    publisher = GenerationPublisher(KnnIndex.empty(dim=params.output_dim, k=10))
    store = FeatureStore(tmp_path / "store.bin")
    ingest_service = IngestService(store, embedding_service, tmp_path / "dead.jsonl", publisher, workers=4)
    worker = IngestionWorker(EventLogTailer(log), ingest_service, RefreshPolicy(interval="1h", max_batch=300))
    while any(worker.run_once().values()):
        pass
    ingest_service.refresh()
    index = publisher.current()
    assert (len(index), index.generation) == (1010, 1)

    container = Container(
        config=ServiceConfig(model_path="model.bin", k_default=5, request_timeout=10.0),
        model_registry=model_registry,
        embedding_service=embedding_service,
        publisher=publisher,
        recommendation_service=RecommendationService(publisher, embedding_service, k_default=5),
    )
    with TestClient(create_app(container, start_worker=False)) as client:
        for row in rows[::50]:
            body = client.get(f"/v1/similar/{row['id']}?k=10").json()
            distances = [item["distance"] for item in body["items"]]
            assert len(distances) == 10
            assert distances == sorted(distances)
            assert body["generation"] == 1
            assert all(item["metadata"]["vertical"] == row["vertical"] for item in body["items"])

        image_path = rows[3]["image"]
        response = client.post("/v1/extract", content=Path(image_path).read_bytes())
        assert response.text == forward(params, read_ppm(image_path)).to_json()

    pairs = index.near_duplicates(0.0)
    assert {frozenset((a, b)) for a, b, _ in pairs} == {
        frozenset((row["id"], f"dup-{i}")) for i, row in enumerate(planted)
    }
