import numpy as np
import pytest

from tests.conftest import make_items
from visrec.core.exception.base import CorruptFileError, DimensionMismatchError
from visrec.domain.catalog.entity import ItemMetadata
from visrec.domain.catalog.exception import DuplicateItemError, InvalidFilterError, ItemNotFoundError
from visrec.domain.index.entity import CatalogItem, ScanCounter
from visrec.domain.index.knn import KnnIndex
from visrec.domain.index.publisher import GenerationPublisher
from visrec.domain.index.repository import decode_index, encode_index, load_index, save_index

SHIRTS = ItemMetadata("clothing", "shirt", "female")
TEES = ItemMetadata("clothing", "tshirt", "male")
SHOES = ItemMetadata("shoes", "sneaker", "unisex")


def _line(*positions: float, metadata: ItemMetadata = SHIRTS) -> list[CatalogItem]:
    return [CatalogItem(id=f"x{p:g}", embedding=np.array([p]), metadata=metadata) for p in positions]


def _brute_force(items: list[CatalogItem], owner: CatalogItem, k: int) -> list[str]:
    same = [item for item in items if item.partition == owner.partition and item.id != owner.id]
    scored = [(float(np.linalg.norm(item.embedding.astype(np.float64) - owner.embedding)), item.id) for item in same]
    return [item_id for _, item_id in sorted(scored)[:k]]


def test_number_line():
    index = KnnIndex.build(_line(0, 1, 3), k=1)
    assert index.neighbors("x0").entries == (("x1", 1.0),)
    assert index.neighbors("x1").entries == (("x0", 1.0),)
    assert index.neighbors("x3").entries == (("x1", 2.0),)


def test_neighbor_lists_match_brute_force():
    items = make_items(90, dim=6, seed=2, partitions=[SHIRTS, TEES, SHOES])
    index = KnnIndex.build(items, k=7)
    assert len(index) == 90
    assert index.partition_counts() == {
        ("clothing", "shirt", "female"): 30,
        ("clothing", "tshirt", "male"): 30,
        ("shoes", "sneaker", "unisex"): 30,
    }
    for item in items:
        neighbors = index.neighbors(item.id)
        assert neighbors.ids == _brute_force(items, item, 7)
        assert [d for _, d in neighbors.entries] == sorted(d for _, d in neighbors.entries)
        # pruning never crosses a partition
        assert all(index.item(n).partition == item.partition for n in neighbors.ids)


def test_small_partition_gives_short_lists():
    items = _line(0, 1, 3) + _line(10, metadata=SHOES)
    index = KnnIndex.build(items, k=5)
    assert len(index.neighbors("x0")) == 2
    assert len(index.neighbors("x10")) == 0


def test_build_rejects_bad_input():
    with pytest.raises(DuplicateItemError):
        KnnIndex.build(_line(0, 0))
    with pytest.raises(DimensionMismatchError):
        KnnIndex.build(_line(0) + [CatalogItem(id="y", embedding=np.zeros(2), metadata=SHIRTS)])
    with pytest.raises(ValueError):
        KnnIndex.build([])


class TestQuery:
    @pytest.fixture
    def items(self):
        return make_items(60, dim=5, seed=4, partitions=[SHIRTS, TEES, SHOES])

    def test_own_embedding_ranks_first(self, items):
        index = KnnIndex.build(items, k=5)
        for item in items[:10]:
            result = index.query(item.embedding, 3)
            assert result.entries[0] == (item.id, 0.0)

    def test_exclude_drops_the_query_item(self, items):
        index = KnnIndex.build(items, k=5)
        item = items[0]
        result = index.query(item.embedding, 5, selector=item.metadata.to_dict(), exclude=item.id)
        assert result.ids == index.neighbors(item.id).ids

    def test_filter_restricts_to_matching_items(self, items):
        index = KnnIndex.build(items, k=5)
        query = np.zeros(5, dtype=np.float32)
        clothing = index.query(query, 50, selector={"category_group": "clothing"})
        assert len(clothing) == 40
        assert {index.item(i).metadata.category_group for i in clothing.ids} == {"clothing"}
        unfiltered = index.query(query, 60)
        # filtering is a subsequence of the unfiltered ranking
        assert clothing.ids == [i for i in unfiltered.ids if i in set(clothing.ids)]

    def test_random_filters_match_an_exhaustive_scan(self, items):
        index = KnnIndex.build(items, k=5)
        rng = np.random.default_rng(12)
        choices = {
            "category_group": ["clothing", "shoes"],
            "vertical": ["shirt", "tshirt", "sneaker"],
            "gender": ["female", "male", "unisex"],
        }
        for _ in range(100):
            keys = [key for key in choices if rng.random() < 0.5]
            selector = {key: choices[key][int(rng.integers(len(choices[key])))] for key in keys}
            query = rng.standard_normal(5).astype(np.float32)
            k = int(rng.integers(1, 12))
            matching = [item for item in items if item.metadata.matches(selector)]
            scored = sorted(
                (float(np.sqrt(np.sum((item.embedding.astype(np.float64) - query) ** 2))), item.id) for item in matching
            )
            result = index.query(query, k, selector=selector)
            assert result.ids == [item_id for _, item_id in scored[:k]]
            np.testing.assert_allclose([d for _, d in result.entries], [d for d, _ in scored[:k]], rtol=1e-12)

    def test_filter_with_no_match_is_empty(self, items):
        index = KnnIndex.build(items, k=5)
        assert len(index.query(np.zeros(5), 5, selector={"gender": "kids"})) == 0

    def test_unknown_filter_key(self, items):
        index = KnnIndex.build(items, k=5)
        with pytest.raises(InvalidFilterError) as e:
            index.query(np.zeros(5), 5, selector={"color": "red"})
        assert e.value.code == "BAD_FILTER"

    def test_scan_counter_shows_pruning(self, items):
        index = KnnIndex.build(items, k=5)
        counter = ScanCounter()
        index.query(np.zeros(5), 5, selector={"vertical": "tshirt"}, counter=counter)
        assert (counter.shards, counter.rows) == (1, 20)
        counter = ScanCounter()
        index.query(np.zeros(5), 5, counter=counter)
        assert (counter.shards, counter.rows) == (3, 60)

    def test_wrong_dimension(self, items):
        with pytest.raises(DimensionMismatchError):
            KnnIndex.build(items, k=5).query(np.zeros(4), 5)

    def test_unknown_item(self, items):
        with pytest.raises(ItemNotFoundError):
            KnnIndex.build(items, k=5).neighbors("nope")


class TestApplyDelta:
    def test_identical_embedding_lands_at_distance_zero(self):
        index = KnnIndex.build(_line(0, 1, 3), k=2)
        twin = CatalogItem(id="twin", embedding=np.array([1.0]), metadata=SHIRTS)
        after = index.apply_delta(added=[twin])
        assert after.neighbors("x1").entries[0] == ("twin", 0.0)
        assert after.neighbors("twin").entries[0] == ("x1", 0.0)
        assert after.generation == index.generation + 1

    def test_removing_an_unreferenced_item_rescans_nothing(self):
        index = KnnIndex.build(_line(0, 1, 2, 100), k=1)
        counter = ScanCounter()
        after = index.apply_delta(removed=["x100"], counter=counter)
        assert counter.rows == 0
        for owner in ("x0", "x1", "x2"):
            assert after.neighbors(owner) == index.neighbors(owner)
        assert "x100" not in after

    def test_removing_a_neighbor_rescans_its_owners(self):
        index = KnnIndex.build(_line(0, 1, 3), k=1)
        after = index.apply_delta(removed=["x1"])
        assert after.neighbors("x0").entries == (("x3", 3.0),)
        assert after.neighbors("x3").entries == (("x0", 3.0),)

    def test_previous_generation_is_untouched(self):
        index = KnnIndex.build(_line(0, 1, 3), k=1)
        snapshot = decode_index(encode_index(index))
        index.apply_delta(added=_line(0.5), removed=["x3"])
        assert index.same_state(snapshot)
        assert "x3" in index and "x0.5" not in index

    def test_emptied_partition_is_dropped(self):
        index = KnnIndex.build(_line(0, 1) + _line(9, metadata=SHOES), k=1)
        after = index.apply_delta(removed=["x9"])
        assert after.partitions == [("clothing", "shirt", "female")]

    def test_invalid_deltas(self):
        index = KnnIndex.build(_line(0, 1), k=1)
        with pytest.raises(ItemNotFoundError):
            index.apply_delta(removed=["x7"])
        with pytest.raises(DuplicateItemError):
            index.apply_delta(added=_line(1))
        with pytest.raises(DimensionMismatchError):
            index.apply_delta(added=[CatalogItem(id="y", embedding=np.zeros(3), metadata=SHIRTS)])

    def test_update_in_one_delta(self):
        index = KnnIndex.build(_line(0, 1, 3), k=1)
        moved = CatalogItem(id="x3", embedding=np.array([0.2]), metadata=SHIRTS, version=1)
        after = index.apply_delta(added=[moved], removed=["x3"])
        assert after.neighbors("x0").entries[0][0] == "x3"
        assert after.item("x3").version == 1

    @staticmethod
    def _random_ops(count: int, steps: int, seed: int, k: int):
        rng = np.random.default_rng(seed)
        partitions = [SHIRTS, TEES, SHOES]
        live = {item.id: item for item in make_items(count, dim=4, seed=seed, partitions=partitions)}
        index = KnnIndex.build(live.values(), k=k)
        fresh = 0
        for _ in range(steps):
            added, removed = [], []
            for _ in range(int(rng.integers(1, 4))):
                op = rng.integers(3)
                ids = sorted(set(live) - set(removed) - {a.id for a in added})
                if op == 0 or not ids:
                    fresh += 1
                    item = CatalogItem(
                        id=f"new-{fresh:04d}",
                        embedding=rng.standard_normal(4),
                        metadata=partitions[int(rng.integers(3))],
                    )
                    added.append(item)
                elif op == 1:
                    removed.append(ids[int(rng.integers(len(ids)))])
                else:
                    target = live[ids[int(rng.integers(len(ids)))]]
                    removed.append(target.id)
                    added.append(
                        CatalogItem(
                            id=target.id,
                            embedding=rng.standard_normal(4),
                            metadata=partitions[int(rng.integers(3))],
                            version=target.version + 1,
                        )
                    )
            index = index.apply_delta(added=added, removed=removed)
            for item_id in removed:
                live.pop(item_id)
            live.update({item.id: item for item in added})
            assert index.same_state(KnnIndex.build(live.values(), k=k, dim=4))
        return index, live

    def test_random_deltas_equal_a_rebuild(self):
        index, live = self._random_ops(count=60, steps=40, seed=8, k=6)
        assert len(index) == len(live)

    @pytest.mark.slow
    def test_many_random_deltas_equal_a_rebuild(self):
        index, live = self._random_ops(count=500, steps=200, seed=21, k=20)
        assert len(index) == len(live)


class TestNearDuplicates:
    def test_exact_duplicates_at_zero(self):
        items = make_items(200, dim=8, seed=5)
        planted = [
            CatalogItem(id=f"dup-{i:04d}", embedding=items[i * 7].embedding.copy(), metadata=items[i * 7].metadata)
            for i in range(10)
        ]
        index = KnnIndex.build(items + planted, k=5)
        pairs = index.near_duplicates(0.0)
        assert {(a, b) for a, b, _ in pairs} == {(f"dup-{i:04d}", items[i * 7].id) for i in range(10)}
        assert all(d == 0.0 for _, _, d in pairs)

    def test_planted_near_pairs(self):
        # bases one apart on a line; each partner sits 0.01 away, far inside tau and far from everything else
        bases = [
            CatalogItem(id=f"base-{i:03d}", embedding=np.array([float(i), 0.0, 0.0]), metadata=SHIRTS)
            for i in range(100)
        ]
        partners = [
            CatalogItem(id=f"twin-{i:03d}", embedding=np.array([float(i), 0.01, 0.0]), metadata=SHIRTS)
            for i in range(0, 100, 10)
        ]
        index = KnnIndex.build(bases + partners, k=4)
        pairs = index.near_duplicates(0.1)
        assert {(a, b) for a, b, _ in pairs} == {(f"base-{i:03d}", f"twin-{i:03d}") for i in range(0, 100, 10)}
        assert all(0.0 < d < 0.1 for _, _, d in pairs)

    def test_threshold_is_strict(self):
        index = KnnIndex.build(_line(0, 0.5, 3), k=2)
        assert index.near_duplicates(0.5) == []
        assert index.near_duplicates(0.6) == [("x0", "x0.5", 0.5)]

    def test_duplicates_never_cross_partitions(self):
        index = KnnIndex.build(_line(0) + [CatalogItem(id="s", embedding=np.zeros(1), metadata=SHOES)], k=2)
        assert index.near_duplicates(1.0) == []

    def test_negative_threshold(self):
        with pytest.raises(ValueError):
            KnnIndex.build(_line(0, 1), k=1).near_duplicates(-0.1)


class TestSnapshot:
    def test_save_and_load(self, tmp_path):
        index = KnnIndex.build(make_items(40, dim=3, seed=6, partitions=[SHIRTS, SHOES]), k=4, generation=3)
        save_index(tmp_path / "index.bin", index)
        loaded = load_index(tmp_path / "index.bin")
        assert loaded.same_state(index)
        assert loaded.generation == 3
        assert encode_index(loaded) == encode_index(index)

    def test_empty_index(self):
        loaded = decode_index(encode_index(KnnIndex.empty(dim=3, k=2)))
        assert len(loaded) == 0 and loaded.dim == 3 and loaded.k == 2

    def test_truncated_snapshot(self):
        payload = encode_index(KnnIndex.build(_line(0, 1, 3), k=1))
        with pytest.raises(CorruptFileError):
            decode_index(payload[:-4])

    def test_missing_snapshot(self, tmp_path):
        with pytest.raises(CorruptFileError):
            load_index(tmp_path / "absent.bin")


class TestPublisher:
    def test_publish_swaps_and_notifies(self):
        first = KnnIndex.build(_line(0, 1), k=1)
        publisher = GenerationPublisher(first)
        seen = []
        publisher.subscribe(lambda index: seen.append(index.generation))
        second = first.apply_delta(added=_line(2))
        publisher.publish(second)
        assert publisher.current() is second
        assert seen == [1]

    def test_older_generation_is_refused(self):
        first = KnnIndex.build(_line(0, 1), k=1)
        second = first.apply_delta(added=_line(2))
        publisher = GenerationPublisher(second)
        with pytest.raises(ValueError):
            publisher.publish(first)
        assert publisher.current() is second
