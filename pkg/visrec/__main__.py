import argparse
import json
import logging
import sys
from collections.abc import Callable
from pathlib import Path

import uvicorn
from pydantic import ValidationError

from visrec.config import load_config
from visrec.core.exception.base import BaseCustomException, ConfigError
from visrec.core.image.ppm import read_ppm
from visrec.core.image.synthetic import generate_catalog
from visrec.domain.catalog.repository import CatalogRepository
from visrec.domain.embedding.config import NetConfig, TrainHyper, load_net_config
from visrec.domain.embedding.network import estimate_channel_mean, init_params
from visrec.domain.embedding.repository import ModelRegistry, load_model, save_model
from visrec.domain.embedding.service import EmbeddingService
from visrec.domain.embedding.trainer import train, train_projection
from visrec.domain.evaluation.constant import DEFAULT_RECALL_KS
from visrec.domain.evaluation.entity import EvalReport
from visrec.domain.evaluation.repository import emit_report, read_ground_truth, read_ratings
from visrec.domain.evaluation.service import biss_distance, model_distance, recall_at_k, triplet_accuracy
from visrec.domain.index.constant import DEFAULT_K
from visrec.domain.index.entity import CatalogItem
from visrec.domain.index.knn import KnnIndex
from visrec.domain.index.publisher import GenerationPublisher
from visrec.domain.index.repository import load_index, save_index
from visrec.domain.ingest.entity import RefreshPolicy
from visrec.domain.ingest.repository import FeatureStore
from visrec.domain.ingest.service import IngestService
from visrec.domain.recommendation.config import load_service_config
from visrec.domain.triplet.biss import get_biss
from visrec.domain.triplet.constant import DEFAULT_IN_CLASS_MIX
from visrec.domain.triplet.repository import read_triplets, read_vetting, write_triplets
from visrec.domain.triplet.service import generate_candidates
from visrec.domain.triplet.vetting import apply_vetting
from visrec.worker.ingestion.worker import EventLogTailer, IngestionWorker

logger = logging.getLogger("visrec")


def _print_json(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def _parse_filter(pairs: list[str] | None) -> dict[str, str]:
    selector = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise ConfigError(f"--filter expects key=value, got {pair!r}")
        selector[key] = value
    return selector


def _catalog_items(corpus: CatalogRepository, extractor: EmbeddingService) -> list[CatalogItem]:
    items = []
    for entry in corpus.entries():
        embedding = extractor.extract(corpus.image(entry.id), entry.metadata.category_group)
        items.append(CatalogItem(id=entry.id, embedding=embedding.values, metadata=entry.metadata, version=0))
    return items


def cmd_synth(args: argparse.Namespace) -> None:
    rows = generate_catalog(args.out, per_class=args.per_class, seed=args.seed, size=args.size)
    logger.info(f"Wrote {len(rows)} synthetic items to {args.out}")


def cmd_train(args: argparse.Namespace) -> None:
    config = load_net_config(args.config) if args.config else NetConfig()
    corpus = CatalogRepository.from_manifest(args.corpus)
    triplets = read_triplets(args.triplets)
    hyper = TrainHyper(
        lr=args.lr,
        momentum=args.momentum,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        lr_decay=args.lr_decay,
        decay_every=args.decay_every,
    )
    images = {item_id: corpus.image(item_id) for t in triplets for item_id in t.key}

    if args.base:
        params = load_model(args.base)
    else:
        if args.estimate_mean:
            mean = estimate_channel_mean(corpus.images(corpus.ids()))
            config = config.model_copy(update={"channel_mean": mean})
        params = init_params(config, seed=args.seed)

    if args.projection:
        result = train_projection(params, triplets, images, hyper)
    else:
        result = train(params, triplets, images, hyper)
    save_model(args.out, result.params)
    _print_json({"epoch_losses": result.epoch_losses, "model": args.out})


def cmd_embed(args: argparse.Namespace) -> None:
    registry = ModelRegistry.from_path(args.model)
    print(EmbeddingService(registry).extract(read_ppm(args.image), args.group).to_json())


def cmd_gen_triplets(args: argparse.Namespace) -> None:
    corpus = CatalogRepository.from_manifest(args.corpus)
    biss_list = [get_biss(name.strip()) for name in args.biss.split(",") if name.strip()]
    triplets = generate_candidates(corpus, biss_list, count=args.count, mix=args.mix, seed=args.seed)
    write_triplets(args.out, triplets)
    logger.info(f"Wrote {len(triplets)} candidate triplets to {args.out}")


def cmd_vet(args: argparse.Namespace) -> None:
    kept = apply_vetting(read_triplets(args.input), read_vetting(args.vetting))
    write_triplets(args.out, kept)
    logger.info(f"Kept {len(kept)} vetted triplets in {args.out}")


def cmd_index_build(args: argparse.Namespace) -> None:
    if args.store:
        items = FeatureStore(args.store).live_items()
    else:
        if not (args.corpus and args.model):
            raise ConfigError("index build needs --store, or --corpus with --model")
        extractor = EmbeddingService(ModelRegistry.from_path(args.model))
        items = _catalog_items(CatalogRepository.from_manifest(args.corpus), extractor)
    if not items:
        raise ConfigError("nothing to index")
    index = KnnIndex.build(items, k=args.k)
    save_index(args.out, index)
    _print_json({"generation": index.generation, "items": len(index), "partitions": len(index.partitions)})


def cmd_index_query(args: argparse.Namespace) -> None:
    index = load_index(args.index)
    if args.id:
        item = index.item(args.id)
        embedding, exclude = item.embedding, args.id
    else:
        if not (args.image and args.model):
            raise ConfigError("index query needs --id, or --image with --model")
        extractor = EmbeddingService(ModelRegistry.from_path(args.model))
        embedding, exclude = extractor.extract(read_ppm(args.image), args.group).values, None
    neighbors = index.query(embedding, args.k, selector=_parse_filter(args.filter), exclude=exclude)
    _print_json([{"distance": distance, "id": item_id} for item_id, distance in neighbors.entries])


def cmd_index_delta(args: argparse.Namespace) -> None:
    index = load_index(args.index)
    added: list[CatalogItem] = []
    if args.add:
        if not args.model:
            raise ConfigError("--add needs --model")
        extractor = EmbeddingService(ModelRegistry.from_path(args.model))
        added = _catalog_items(CatalogRepository.from_manifest(args.add), extractor)
    removed = [item_id for item_id in (args.remove or "").split(",") if item_id]
    index_next = index.apply_delta(added=added, removed=removed)
    save_index(args.out, index_next)
    _print_json(
        {"added": len(added), "generation": index_next.generation, "items": len(index_next), "removed": len(removed)}
    )


def cmd_index_dedup(args: argparse.Namespace) -> None:
    for a, b, distance in load_index(args.index).near_duplicates(args.tau):
        _print_json({"a": a, "b": b, "distance": distance})


def cmd_ingest(args: argparse.Namespace) -> None:
    registry = ModelRegistry.from_path(args.model)
    store = FeatureStore(args.store)
    if args.index and Path(args.index).exists():
        index = load_index(args.index)
    else:
        dims = registry.dims()
        if len(dims) != 1:
            raise ConfigError(f"models disagree on the embedding dim {sorted(dims)}")
        index = KnnIndex.empty(dim=dims.pop(), k=args.k)
    publisher = GenerationPublisher(index)
    if args.index:
        publisher.subscribe(lambda generation: save_index(args.index, generation))

    paths = load_config().paths
    ingest_service = IngestService(
        store=store,
        extractor=EmbeddingService(registry),
        dead_letter_path=args.dead_letter or paths.resolve(paths.dead_letter),
        publisher=publisher,
        workers=args.workers,
    )
    worker = IngestionWorker(
        tailer=EventLogTailer(args.events),
        ingest_service=ingest_service,
        policy=RefreshPolicy(interval=args.refresh_interval),
    )
    if args.once:
        while any(worker.run_once().values()):
            pass
        index = ingest_service.refresh()
        _print_json({"generation": index.generation, "items": len(index), "last_seq": store.last_seq})
    else:
        worker.run_forever()


def cmd_serve(args: argparse.Namespace) -> None:
    from visrec.container import build_container
    from visrec.server import create_app

    app_config = load_config()
    config_path = args.config or app_config.server.serve_config
    if not config_path:
        raise ConfigError("serve needs --config or VISREC_SERVE_CONFIG")
    config = load_service_config(config_path)
    host, port = config.host_port()
    uvicorn.run(
        create_app(build_container(config)),
        host=host,
        port=port,
        log_level=app_config.log.level.lower(),
    )


def _recall_ks(k: int) -> list[int]:
    return sorted({value for value in DEFAULT_RECALL_KS if value <= k} | {k})


def cmd_eval_triplets(args: argparse.Namespace) -> None:
    corpus = CatalogRepository.from_manifest(args.corpus)
    triplets = read_triplets(args.triplets)
    images = {item_id: corpus.image(item_id) for t in triplets for item_id in t.key}
    report = EvalReport()
    if args.model:
        params = load_model(args.model)
        report.accuracy["model"] = triplet_accuracy(model_distance(params, images, triplets), triplets)
        if params.has_projection:
            full = model_distance(params, images, triplets, use_projection=False)
            report.accuracy["model-full"] = triplet_accuracy(full, triplets)
    for name in (args.biss or "").split(","):
        if name.strip():
            biss = get_biss(name.strip())
            report.accuracy[biss.name] = triplet_accuracy(biss_distance(biss, images, triplets), triplets)
    emit_report(report, args.out)
    _print_json(report.to_dict())


def cmd_eval_recall(args: argparse.Namespace) -> None:
    extractor = EmbeddingService(ModelRegistry.from_path(args.model))
    if args.index:
        index = load_index(args.index)
    elif args.corpus:
        index = KnnIndex.build(
            _catalog_items(CatalogRepository.from_manifest(args.corpus), extractor), k=max(args.k, DEFAULT_K)
        )
    else:
        raise ConfigError("eval recall needs --index or --corpus")

    def embed_query_image(path: str):
        return extractor.extract(read_ppm(path)).values

    curves = recall_at_k(
        index, read_ground_truth(args.ground_truth), _recall_ks(args.k), args.method, embed_query_image
    )
    report = EvalReport(recall=curves, ratings=read_ratings(args.ratings) if args.ratings else None)
    emit_report(report, args.out)
    _print_json(report.to_dict())


def extract_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="visrec", description="visual similarity recommendations")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="Write a synthetic 8-class catalog")
    synth.add_argument("--out", required=True)
    synth.add_argument("--per-class", type=int, default=20)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--size", type=int, default=32)
    synth.set_defaults(handler=cmd_synth)

    train_parser = commands.add_parser("train", help="Train the embedding network on triplets")
    train_parser.add_argument("--config", help="net.json; the built-in network when omitted")
    train_parser.add_argument("--triplets", required=True)
    train_parser.add_argument("--corpus", required=True, help="catalog manifest the triplet ids refer to")
    train_parser.add_argument("--out", required=True)
    train_parser.add_argument("--seed", type=int, default=0)
    train_parser.add_argument("--lr", type=float, default=0.01)
    train_parser.add_argument("--momentum", type=float, default=0.9)
    train_parser.add_argument("--epochs", type=int, default=20)
    train_parser.add_argument("--batch-size", type=int, default=32)
    train_parser.add_argument("--lr-decay", type=float, default=0.5)
    train_parser.add_argument("--decay-every", type=int, default=8)
    train_parser.add_argument("--estimate-mean", action="store_true", help="Subtract the corpus channel mean")
    train_parser.add_argument("--base", help="Start from this model instead of a fresh initialization")
    train_parser.add_argument("--projection", action="store_true", help="Retrain only the reduced projection")
    train_parser.set_defaults(handler=cmd_train)

    embed = commands.add_parser("embed", help="Print the embedding of one image as a JSON array")
    embed.add_argument("--model", required=True)
    embed.add_argument("--image", required=True)
    embed.add_argument("--group")
    embed.set_defaults(handler=cmd_embed)

    gen = commands.add_parser("gen-triplets", help="Sample candidate triplets from BISS rankings")
    gen.add_argument("--corpus", required=True)
    gen.add_argument("--biss", default="colorhist", help="comma separated: colorhist, embed:<model>")
    gen.add_argument("--count", type=int, required=True)
    gen.add_argument("--mix", type=float, default=DEFAULT_IN_CLASS_MIX)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(handler=cmd_gen_triplets)

    vet = commands.add_parser("vet", help="Apply human verdicts to candidate triplets")
    vet.add_argument("--in", dest="input", required=True)
    vet.add_argument("--vetting", required=True)
    vet.add_argument("--out", required=True)
    vet.set_defaults(handler=cmd_vet)

    index = commands.add_parser("index", help="Build, query and maintain index snapshots")
    index_commands = index.add_subparsers(dest="index_command", required=True)

    build = index_commands.add_parser("build")
    build.add_argument("--corpus")
    build.add_argument("--model")
    build.add_argument("--store")
    build.add_argument("--k", type=int, default=DEFAULT_K)
    build.add_argument("--out", required=True)
    build.set_defaults(handler=cmd_index_build)

    query = index_commands.add_parser("query")
    query.add_argument("--index", required=True)
    query.add_argument("--id")
    query.add_argument("--image")
    query.add_argument("--model")
    query.add_argument("--group")
    query.add_argument("--k", type=int, default=DEFAULT_K)
    query.add_argument("--filter", action="append", help="key=value, repeatable")
    query.set_defaults(handler=cmd_index_query)

    delta = index_commands.add_parser("delta")
    delta.add_argument("--index", required=True)
    delta.add_argument("--add", help="manifest of items to insert")
    delta.add_argument("--model")
    delta.add_argument("--remove", help="comma separated ids")
    delta.add_argument("--out", required=True)
    delta.set_defaults(handler=cmd_index_delta)

    dedup = index_commands.add_parser("dedup")
    dedup.add_argument("--index", required=True)
    dedup.add_argument("--tau", type=float, default=0.0)
    dedup.set_defaults(handler=cmd_index_dedup)

    ingest = commands.add_parser("ingest", help="Consume an event log into the feature store")
    ingest.add_argument("--events", required=True)
    ingest.add_argument("--store", required=True)
    ingest.add_argument("--model", required=True)
    ingest.add_argument("--index", help="snapshot to start from and rewrite on every refresh")
    ingest.add_argument("--k", type=int, default=DEFAULT_K)
    ingest.add_argument("--refresh-interval", default="30m")
    ingest.add_argument("--dead-letter")
    ingest.add_argument("--workers", type=int, default=1)
    ingest.add_argument("--once", action="store_true", help="Drain the log, refresh once and exit")
    ingest.set_defaults(handler=cmd_ingest)

    serve = commands.add_parser("serve", help="Run the HTTP service")
    serve.add_argument("--config")
    serve.set_defaults(handler=cmd_serve)

    evaluation = commands.add_parser("eval", help="Triplet accuracy and recall@k reports")
    eval_commands = evaluation.add_subparsers(dest="eval_command", required=True)

    eval_triplets = eval_commands.add_parser("triplets")
    eval_triplets.add_argument("--triplets", required=True)
    eval_triplets.add_argument("--corpus", required=True)
    eval_triplets.add_argument("--model")
    eval_triplets.add_argument("--biss", help="comma separated BISS baselines to score alongside")
    eval_triplets.add_argument("--out", required=True)
    eval_triplets.set_defaults(handler=cmd_eval_triplets)

    eval_recall = eval_commands.add_parser("recall")
    eval_recall.add_argument("--model", required=True)
    eval_recall.add_argument("--ground-truth", required=True)
    eval_recall.add_argument("--index")
    eval_recall.add_argument("--corpus")
    eval_recall.add_argument("--k", type=int, default=20)
    eval_recall.add_argument("--method", default="model")
    eval_recall.add_argument("--ratings", help="JSONL of externally collected ratings")
    eval_recall.add_argument("--out", required=True)
    eval_recall.set_defaults(handler=cmd_eval_recall)

    return parser.parse_args(argv)


def main(handler: Callable[[argparse.Namespace], None], args: argparse.Namespace) -> int:
    try:
        handler(args)
    except ConfigError as e:
        logger.error(str(e))
        print(json.dumps(e.to_body()), file=sys.stderr)
        return 2
    except ValidationError as e:
        error = ConfigError(str(e))
        print(json.dumps(error.to_body()), file=sys.stderr)
        return 2
    except BaseCustomException as e:
        logger.error(str(e))
        print(json.dumps(e.to_body()), file=sys.stderr)
        return 1
    return 0


def run(argv: list[str] | None = None) -> None:
    logging.basicConfig(level=load_config().log.level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    args = extract_args(argv)
    sys.exit(main(args.handler, args))


# Run `python -m visrec <command>`
if __name__ == "__main__":
    run()
