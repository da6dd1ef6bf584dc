import json

import numpy as np
import pytest

from tests.conftest import random_image, tiny_config
from visrec.core.codec.jsonl import read_jsonl
from visrec.core.image.ppm import write_ppm
from visrec.domain.catalog.entity import ItemMetadata
from visrec.domain.embedding.network import init_params
from visrec.domain.embedding.repository import ModelRegistry
from visrec.domain.embedding.service import EmbeddingService
from visrec.domain.index.knn import KnnIndex
from visrec.domain.index.publisher import GenerationPublisher
from visrec.domain.ingest.entity import IngestionEvent, RefreshPolicy, parse_duration
from visrec.domain.ingest.enum import ApplyOutcome, EventOp, RecordKind
from visrec.domain.ingest.exception import InvalidEventError, OutOfOrderEventError
from visrec.domain.ingest.repository import FeatureStore
from visrec.domain.ingest.service import IngestService, apply_event, refresh
from visrec.worker.ingestion.worker import EventLogTailer, IngestionWorker

SHIRTS = ItemMetadata("clothing", "shirt", "female")


@pytest.fixture
def image_paths(tmp_path, rng):
    paths = []
    for i in range(6):
        path = tmp_path / "images" / f"img{i}.ppm"
        path.parent.mkdir(exist_ok=True)
        write_ppm(path, random_image(rng))
        paths.append(str(path))
    return paths


@pytest.fixture
def extractor(tiny_params):
    return EmbeddingService(ModelRegistry.single(tiny_params))


@pytest.fixture
def store(tmp_path):
    return FeatureStore(tmp_path / "store.bin")


def _event(seq: int, op: str, item_id: str, image: str | None = None, **metadata) -> IngestionEvent:
    row = {"seq": seq, "op": op, "id": item_id, "category_group": "clothing", **metadata}
    if image is not None:
        row["image"] = image
    return IngestionEvent.from_row(row)


def _history(image_paths: list[str]) -> list[IngestionEvent]:
    return [
        _event(1, "insert", "a", image_paths[0]),
        _event(2, "insert", "b", image_paths[1], vertical="shirt"),
        _event(3, "insert", "c", image_paths[2]),
        _event(4, "update", "a", image_paths[3]),
        _event(5, "delete", "b"),
        _event(6, "insert", "d", image_paths[4], gender="female"),
        _event(7, "update", "c", image_paths[5]),
    ]


class TestEvent:
    def test_top_level_metadata_is_lifted(self):
        event = IngestionEvent.from_row({"seq": 1, "op": "insert", "id": "a", "image": "x.ppm", "vertical": "shirt"})
        assert event.op == EventOp.INSERT
        assert event.item_metadata().vertical == "shirt"
        assert event.item_metadata().gender == "unknown"

    @pytest.mark.parametrize(
        "row",
        [
            {"seq": 1, "op": "insert", "id": "a"},
            {"seq": -1, "op": "delete", "id": "a"},
            {"seq": 1, "op": "upsert", "id": "a", "image": "x.ppm"},
            {"seq": 1, "op": "delete", "id": ""},
        ],
    )
    def test_invalid_events(self, row):
        with pytest.raises(InvalidEventError):
            IngestionEvent.from_row(row)

    @pytest.mark.parametrize(
        "text, seconds", [("30m", 1800.0), ("1.5s", 1.5), ("250ms", 0.25), ("2h", 7200.0), (5, 5.0)]
    )
    def test_durations(self, text, seconds):
        assert parse_duration(text) == pytest.approx(seconds)
        assert RefreshPolicy(interval=text).interval == pytest.approx(seconds)


class TestFeatureStore:
    def test_insert_then_delete_is_absent(self, store, extractor, image_paths, tmp_path):
        dead = tmp_path / "dead.jsonl"
        apply_event(store, _event(1, "insert", "a", image_paths[0]), extractor, dead)
        assert "a" in store
        apply_event(store, _event(2, "delete", "a"), extractor, dead)
        assert "a" not in store
        assert store.live_items() == []

    def test_replayed_seq_is_skipped(self, store, extractor, image_paths, tmp_path):
        dead = tmp_path / "dead.jsonl"
        for event in _history(image_paths):
            apply_event(store, event, extractor, dead)
        before = store.state_dump()
        outcomes = [apply_event(store, event, extractor, dead) for event in _history(image_paths)]
        assert outcomes == [ApplyOutcome.SKIPPED] * 7
        assert store.state_dump() == before

    def test_late_new_seq_is_refused(self, store):
        store.put(5, "a", np.ones(3), SHIRTS)
        assert not store.should_apply(5)
        with pytest.raises(OutOfOrderEventError):
            store.should_apply(3)

    def test_reopening_replays_the_log(self, store, extractor, image_paths, tmp_path):
        for event in _history(image_paths):
            apply_event(store, event, extractor, tmp_path / "dead.jsonl")
        reopened = FeatureStore(store.path)
        assert reopened.state_dump() == store.state_dump()
        assert sorted(item.id for item in reopened.live_items()) == ["a", "c", "d"]
        assert reopened.get("a").version == 4

    def test_incomplete_tail_is_dropped(self, store):
        store.put(1, "a", np.ones(3), SHIRTS)
        store.put(2, "b", np.zeros(3), SHIRTS)
        size = store.path.stat().st_size
        with open(store.path, "ab") as f:
            f.write(b"\x00\x00\x01")
        reopened = FeatureStore(store.path)
        assert reopened.state_dump() == store.state_dump()
        assert store.path.stat().st_size == size

    def test_compaction_keeps_the_state(self, store):
        for seq in range(1, 31):
            store.put(seq, f"id{seq % 4}", np.full(3, seq, dtype=np.float32), SHIRTS)
        store.tombstone(31, "id0")
        store.mark_dead(32, "id9")
        before = store.state_dump()

        store.compact()
        assert store.state_dump() == before
        ids = [r.id for r in store.records() if r.kind != RecordKind.CHECKPOINT]
        assert len(ids) == len(set(ids)) == 3
        assert store.is_consumed(32)
        assert not store.should_apply(12)
        assert FeatureStore(store.path).state_dump() == before

    def test_compaction_below_the_head_keeps_newer_records(self, store):
        for seq in range(1, 11):
            store.put(seq, "x", np.full(2, seq, dtype=np.float32), SHIRTS)
        before = store.state_dump()
        store.compact(watermark=6)
        assert store.state_dump() == before
        assert [r.seq for r in store.records()] == [6, 6, 7, 8, 9, 10]


class TestDeadLetter:
    def test_unreadable_image(self, store, extractor, tmp_path):
        dead = tmp_path / "dead.jsonl"
        outcome = apply_event(store, _event(1, "insert", "a", str(tmp_path / "missing.ppm")), extractor, dead)
        assert outcome == ApplyOutcome.DEAD_LETTERED
        assert "a" not in store
        assert store.is_consumed(1)
        [row] = read_jsonl(dead)
        assert row["event"]["id"] == "a"

    def test_failed_update_keeps_the_old_record(self, store, extractor, image_paths, tmp_path):
        dead = tmp_path / "dead.jsonl"
        apply_event(store, _event(1, "insert", "a", image_paths[0]), extractor, dead)
        outcome = apply_event(store, _event(2, "update", "a", str(tmp_path / "missing.ppm")), extractor, dead)
        assert outcome == ApplyOutcome.DEAD_LETTERED
        assert store.get("a").version == 1

    def test_dimension_mismatch(self, store, tiny_params, image_paths, tmp_path):
        shoes = init_params(tiny_config(category_group="shoes"), seed=2, with_projection=True)
        extractor = EmbeddingService(ModelRegistry({"shoes": shoes}, default=tiny_params))
        dead = tmp_path / "dead.jsonl"
        apply_event(store, _event(1, "insert", "a", image_paths[0]), extractor, dead)
        outcome = apply_event(
            store, _event(2, "insert", "b", image_paths[1], category_group="shoes"), extractor, dead
        )
        assert outcome == ApplyOutcome.DEAD_LETTERED
        assert read_jsonl(dead)[0]["code"] == "DIM_MISMATCH"


class TestRefresh:
    def test_empty_diff_returns_the_same_generation(self, store, extractor, image_paths, tmp_path):
        for event in _history(image_paths):
            apply_event(store, event, extractor, tmp_path / "dead.jsonl")
        first = refresh(store, KnnIndex.empty(dim=12, k=2))
        assert refresh(store, first) is first

    def test_refresh_equals_a_rebuild(self, store, extractor, image_paths, tmp_path):
        dead = tmp_path / "dead.jsonl"
        events = _history(image_paths)
        index = KnnIndex.empty(dim=12, k=2)
        publisher = GenerationPublisher(index)
        for chunk in (events[:3], events[3:]):
            for event in chunk:
                apply_event(store, event, extractor, dead)
            index = refresh(store, index, publisher)
            assert index.same_state(KnnIndex.build(store.live_items(), k=2, dim=12))
        assert publisher.current() is index
        assert index.generation == 2
        assert "b" not in index
        assert index.item("a").version == 4

    def test_inserted_item_becomes_queryable(self, store, extractor, image_paths, tmp_path):
        apply_event(store, _event(1, "insert", "a", image_paths[0]), extractor, tmp_path / "dead.jsonl")
        index = refresh(store, KnnIndex.empty(dim=12, k=2))
        result = index.query(store.get("a").embedding, 1)
        assert result.entries == (("a", 0.0),)


class TestIngestService:
    def test_consume_counts_outcomes(self, store, extractor, image_paths, tmp_path):
        publisher = GenerationPublisher(KnnIndex.empty(dim=12, k=2))
        service = IngestService(store, extractor, tmp_path / "dead.jsonl", publisher, workers=3)
        events = _history(image_paths) + [_event(8, "insert", "e", str(tmp_path / "missing.ppm"))]
        counts = service.consume(events)
        assert counts[ApplyOutcome.APPLIED] == 7
        assert counts[ApplyOutcome.DEAD_LETTERED] == 1
        assert service.consume(events)[ApplyOutcome.SKIPPED] == 8
        service.refresh()
        assert sorted(item.id for item in publisher.current().items()) == ["a", "c", "d"]

    def test_threads_commit_in_seq_order(self, tmp_path, extractor, image_paths):
        single, pooled = FeatureStore(tmp_path / "one.bin"), FeatureStore(tmp_path / "many.bin")
        publisher = GenerationPublisher(KnnIndex.empty(dim=12, k=2))
        IngestService(single, extractor, tmp_path / "d1.jsonl", publisher).consume(_history(image_paths))
        IngestService(pooled, extractor, tmp_path / "d2.jsonl", publisher, workers=4).consume(_history(image_paths))
        assert single.path.read_bytes() == pooled.path.read_bytes()

    def test_out_of_order_batch(self, store, extractor, image_paths, tmp_path):
        publisher = GenerationPublisher(KnnIndex.empty(dim=12, k=2))
        service = IngestService(store, extractor, tmp_path / "dead.jsonl", publisher)
        events = _history(image_paths)
        with pytest.raises(OutOfOrderEventError):
            service.consume([events[1], events[0]])
        assert "b" in store
        assert store.last_seq == 2

    def test_repeated_seq_in_one_batch_is_skipped(self, store, extractor, image_paths, tmp_path):
        publisher = GenerationPublisher(KnnIndex.empty(dim=12, k=2))
        service = IngestService(store, extractor, tmp_path / "dead.jsonl", publisher)
        events = [_event(1, "insert", "a", image_paths[0]), _event(2, "insert", "b", image_paths[1])]
        counts = service.consume(events + [_event(2, "insert", "c", image_paths[2])])
        assert (counts[ApplyOutcome.APPLIED], counts[ApplyOutcome.SKIPPED]) == (2, 1)
        assert sorted(item.id for item in store.live_items()) == ["a", "b"]


class TestWorker:
    def test_tailer_waits_for_the_newline(self, tmp_path):
        log = tmp_path / "events.jsonl"
        log.write_text('{"seq": 1}\n{"seq": ')
        tailer = EventLogTailer(log)
        assert tailer.poll(10) == ['{"seq": 1}\n']
        assert tailer.poll(10) == []
        with open(log, "a") as f:
            f.write("2}\n")
        assert tailer.poll(10) == ['{"seq": 2}\n']

    def test_run_once(self, store, extractor, image_paths, tmp_path):
        log = tmp_path / "events.jsonl"
        dead = tmp_path / "dead.jsonl"
        lines = [json.dumps(e.to_row()) for e in _history(image_paths)[:3]] + ["not json"]
        log.write_text("\n".join(lines) + "\n")
        publisher = GenerationPublisher(KnnIndex.empty(dim=12, k=2))
        worker = IngestionWorker(
            EventLogTailer(log),
            IngestService(store, extractor, dead, publisher),
            RefreshPolicy(interval="1h", max_batch=2),
        )
        assert worker.run_once()[ApplyOutcome.APPLIED] == 2
        assert worker.run_once()[ApplyOutcome.APPLIED] == 1
        assert not any(worker.run_once().values())
        assert read_jsonl(dead)[0]["code"] == "BAD_EVENT"
        assert len(store) == 3

    def _drain(self, tmp_path, name, log, extractor, max_batch):
        store = FeatureStore(tmp_path / f"{name}.bin")
        publisher = GenerationPublisher(KnnIndex.empty(dim=12, k=2))
        tailer = EventLogTailer(log)
        worker = IngestionWorker(
            tailer,
            IngestService(store, extractor, tmp_path / f"{name}.dead.jsonl", publisher),
            RefreshPolicy(interval="1h", max_batch=max_batch),
        )
        error = None
        try:
            while any(worker.run_once().values()):
                pass
        except OutOfOrderEventError as e:
            error = e
        return store, tailer.offset, error

    def test_batch_size_does_not_change_the_store(self, extractor, image_paths, tmp_path):
        log = tmp_path / "events.jsonl"
        events = [
            _event(1, "insert", "a", image_paths[0]),
            _event(2, "insert", "b", image_paths[1]),
            _event(2, "insert", "c", image_paths[2]),
            _event(4, "delete", "a"),
            _event(5, "insert", "d", image_paths[3]),
        ]
        log.write_text("".join(json.dumps(e.to_row()) + "\n" for e in events))
        one, offset_one, error_one = self._drain(tmp_path, "one", log, extractor, max_batch=1)
        three, offset_three, error_three = self._drain(tmp_path, "three", log, extractor, max_batch=3)
        assert error_one is None and error_three is None
        assert one.state_dump() == three.state_dump()
        assert sorted(item.id for item in three.live_items()) == ["b", "d"]
        assert offset_one == offset_three == log.stat().st_size

    def test_out_of_order_line_stops_at_the_same_place(self, extractor, image_paths, tmp_path):
        log = tmp_path / "events.jsonl"
        lines = [
            json.dumps(_event(3, "insert", "a", image_paths[0]).to_row()),
            json.dumps(_event(4, "insert", "b", image_paths[1]).to_row()),
            json.dumps(_event(1, "insert", "c", image_paths[2]).to_row()),
            json.dumps(_event(5, "insert", "d", image_paths[3]).to_row()),
        ]
        log.write_text("".join(line + "\n" for line in lines))
        one, offset_one, error_one = self._drain(tmp_path, "one", log, extractor, max_batch=1)
        four, offset_four, error_four = self._drain(tmp_path, "four", log, extractor, max_batch=4)
        assert isinstance(error_one, OutOfOrderEventError) and isinstance(error_four, OutOfOrderEventError)
        assert one.state_dump() == four.state_dump()
        assert sorted(item.id for item in four.live_items()) == ["a", "b"]
        assert offset_one == offset_four == sum(len(line) + 1 for line in lines[:3])


def _random_log(image_paths: list[str], missing: str, count: int, seed: int) -> list[IngestionEvent]:
    rng = np.random.default_rng(seed)
    known: list[str] = []
    events = []
    for seq in range(1, count + 1):
        roll = rng.random()
        image = missing if rng.random() < 0.03 else image_paths[int(rng.integers(len(image_paths)))]
        vertical = ("shirt", "tshirt")[int(rng.integers(2))]
        if not known or roll < 0.4:
            known.append(f"item-{seq:04d}")
            events.append(_event(seq, "insert", known[-1], image, vertical=vertical))
        elif roll < 0.75:
            events.append(_event(seq, "update", known[int(rng.integers(len(known)))], image, vertical=vertical))
        else:
            events.append(_event(seq, "delete", known.pop(int(rng.integers(len(known))))))
    return events


class TestReplay:
    def test_a_thousand_events_replay_to_the_same_bytes(self, extractor, image_paths, tmp_path):
        events = _random_log(image_paths, str(tmp_path / "missing.ppm"), count=1000, seed=17)
        publisher = GenerationPublisher(KnnIndex.empty(dim=12, k=2))

        batched = IngestService(FeatureStore(tmp_path / "batched.bin"), extractor, tmp_path / "d1.jsonl", publisher, 4)
        for start in range(0, len(events), 137):
            batched.consume(events[start : start + 137])

        single = FeatureStore(tmp_path / "single.bin")
        for event in events:
            apply_event(single, event, extractor, tmp_path / "d2.jsonl")

        assert len(single) > 0
        assert batched.store.state_dump() == single.state_dump()
        assert FeatureStore(single.path).state_dump() == single.state_dump()
        assert batched.consume(events)[ApplyOutcome.SKIPPED] == 1000
        assert batched.store.state_dump() == single.state_dump()

    def test_reopening_after_a_cut_anywhere(self, tmp_path):
        operations = [
            lambda s: s.put(1, "a", np.ones(3), SHIRTS),
            lambda s: s.put(2, "b", np.arange(3), SHIRTS),
            lambda s: s.mark_dead(3, "c"),
            lambda s: s.put(4, "a", np.full(3, 2.0), SHIRTS),
            lambda s: s.tombstone(5, "b"),
            lambda s: s.put(6, "d", np.zeros(3), SHIRTS),
        ]
        full = FeatureStore(tmp_path / "full.bin")
        boundaries = [full.path.stat().st_size]
        for operation in operations:
            operation(full)
            boundaries.append(full.path.stat().st_size)
        payload = full.path.read_bytes()

        for n, boundary in enumerate(boundaries):
            expected = FeatureStore(tmp_path / f"expected{n}.bin")
            for operation in operations[:n]:
                operation(expected)
            cuts = [boundary]
            if n < len(operations):
                cuts += sorted({boundary + 1, (boundary + boundaries[n + 1]) // 2, boundaries[n + 1] - 1})
            for cut in cuts:
                path = tmp_path / f"cut{cut}.bin"
                path.write_bytes(payload[:cut])
                reopened = FeatureStore(path)
                assert reopened.state_dump() == expected.state_dump(), cut
                assert path.stat().st_size == boundary
                if n < len(operations):
                    operations[n](reopened)
                    assert reopened.path.read_bytes() == payload[: boundaries[n + 1]]
