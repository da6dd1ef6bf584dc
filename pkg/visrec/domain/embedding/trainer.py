import logging
from collections.abc import Mapping, Sequence

import numpy as np

from visrec.core.image.ppm import Image
from visrec.domain.embedding.config import TrainHyper
from visrec.domain.embedding.constant import MIN_NORM, PROJECTION_BIAS, PROJECTION_WEIGHT
from visrec.domain.embedding.entity import Params, TrainResult, TripletBatch
from visrec.domain.embedding.exception import EmptyBatchError, NumericError, TrainingDivergedError
from visrec.domain.embedding.layers import Grads, l2_normalize, l2_normalize_backward
from visrec.domain.embedding.loss import triplet_loss_batch
from visrec.domain.embedding.network import backward_batch, embed_images, forward_batch, init_projection, preprocess
from visrec.domain.triplet.entity import CandidateTriplet, TripletKey

logger = logging.getLogger(__name__)


def backward(params: Params, batch: TripletBatch, g: float) -> tuple[Grads, float]:
    """Gradient of the mean batch hinge loss w.r.t. the single shared weight set."""
    if len(batch) == 0:
        raise EmptyBatchError()
    xq = preprocess([t[0] for t in batch.triplets], params.config)
    xp = preprocess([t[1] for t in batch.triplets], params.config)
    xn = preprocess([t[2] for t in batch.triplets], params.config)
    return backward_arrays(params, xq, xp, xn, g)


def backward_arrays(
    params: Params, xq: np.ndarray, xp: np.ndarray, xn: np.ndarray, g: float
) -> tuple[Grads, float]:
    count = xq.shape[0]
    if count == 0:
        raise EmptyBatchError()
    # q, p and n run as one batch through the same tensors
    out, cache = forward_batch(params, np.concatenate([xq, xp, xn], axis=0))
    bad = np.flatnonzero(~np.all(np.isfinite(out), axis=1))
    if bad.size:
        raise NumericError(int(bad[0] % count), "activation")

    q, p, n = out[:count], out[count : 2 * count], out[2 * count :]
    losses, (dq, dp, dn) = triplet_loss_batch(q, p, n, g)
    grads = backward_batch(params, np.concatenate([dq, dp, dn], axis=0), cache)
    return grads, float(np.mean(losses))


def _triplet_keys(triplets: Sequence[CandidateTriplet | TripletKey]) -> list[TripletKey]:
    return [t.key if isinstance(t, CandidateTriplet) else (t[0], t[1], t[2]) for t in triplets]


def _index_images(
    params: Params, keys: list[TripletKey], images: Mapping[str, Image]
) -> tuple[np.ndarray, np.ndarray]:
    """Preprocesses every referenced image once; returns (pixels, (T, 3) row indices)."""
    ids = sorted({item_id for key in keys for item_id in key})
    position = {item_id: i for i, item_id in enumerate(ids)}
    pixels = preprocess([images[item_id] for item_id in ids], params.config) if ids else np.zeros((0,))
    rows = np.array([[position[item_id] for item_id in key] for key in keys], dtype=np.int64).reshape(-1, 3)
    return pixels, rows


def _sgd_step(
    tensors: dict[str, np.ndarray], grads: Grads, velocity: dict[str, np.ndarray], lr: float, momentum: float
) -> None:
    for key, grad in grads.items():
        v = velocity.get(key)
        v = -lr * grad if v is None else momentum * v - lr * grad
        velocity[key] = v
        tensors[key] = tensors[key] + v


def train(
    params: Params,
    triplets: Sequence[CandidateTriplet | TripletKey],
    images: Mapping[str, Image],
    hyper: TrainHyper,
    margin: float | None = None,
) -> TrainResult:
    """SGD with momentum over shuffled mini-batches; bit-reproducible for a fixed seed."""
    g = params.config.margin if margin is None else margin
    keys = _triplet_keys(triplets)
    if not keys:
        raise EmptyBatchError()
    pixels, rows = _index_images(params, keys, images)

    rng = np.random.default_rng(hyper.seed)
    current = params.copy()
    velocity: dict[str, np.ndarray] = {}
    epoch_losses: list[float] = []

    for epoch in range(hyper.epochs):
        lr = hyper.lr_at(epoch)
        order = rng.permutation(len(keys))
        batch_losses = []
        for batch_no, start in enumerate(range(0, len(keys), hyper.batch_size)):
            idx = rows[order[start : start + hyper.batch_size]]
            try:
                grads, loss = backward_arrays(current, pixels[idx[:, 0]], pixels[idx[:, 1]], pixels[idx[:, 2]], g)
            except NumericError:
                raise TrainingDivergedError(epoch, batch_no, lr, float("nan"))
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, batch_no, lr, loss)
            _sgd_step(current.tensors, grads, velocity, lr, hyper.momentum)
            batch_losses.append(loss * len(idx))

        epoch_loss = float(np.sum(batch_losses) / len(keys))
        if not current.is_finite():
            raise TrainingDivergedError(epoch, -1, lr, epoch_loss)
        epoch_losses.append(epoch_loss)
        logger.info(f"epoch {epoch + 1}/{hyper.epochs}: mean loss {epoch_loss:.6f} (lr={lr:g})")

    return TrainResult(params=current, epoch_losses=epoch_losses)


def _projection_step(
    u: np.ndarray, weight: np.ndarray, bias: np.ndarray, normalize: bool
) -> tuple[np.ndarray, tuple | None]:
    out = u @ weight + bias
    if not normalize:
        return out, None
    return l2_normalize(out, MIN_NORM)


def train_projection(
    params: Params,
    triplets: Sequence[CandidateTriplet | TripletKey],
    images: Mapping[str, Image],
    hyper: TrainHyper,
    margin: float | None = None,
) -> TrainResult:
    """Retrains only the linear projection on top of frozen base weights.

    The full embeddings are computed once, since the base never changes; the
    projection starts from the weights already in ``params`` if present,
    otherwise from the seeded initialization.
    """
    config = params.config
    g = config.margin if margin is None else margin
    keys = _triplet_keys(triplets)
    if not keys:
        raise EmptyBatchError()

    ids = sorted({item_id for key in keys for item_id in key})
    position = {item_id: i for i, item_id in enumerate(ids)}
    base = params.without_projection()
    full = embed_images(base, [images[item_id] for item_id in ids], use_projection=False)
    rows = np.array([[position[item_id] for item_id in key] for key in keys], dtype=np.int64)

    rng = np.random.default_rng(hyper.seed)
    if params.has_projection:
        weight = params.tensors[PROJECTION_WEIGHT].copy()
        bias = params.tensors[PROJECTION_BIAS].copy()
    else:
        weight, bias = init_projection(config, rng)
    tensors = {PROJECTION_WEIGHT: weight, PROJECTION_BIAS: bias}
    velocity: dict[str, np.ndarray] = {}
    epoch_losses: list[float] = []

    for epoch in range(hyper.epochs):
        lr = hyper.lr_at(epoch)
        order = rng.permutation(len(keys))
        batch_losses = []
        for batch_no, start in enumerate(range(0, len(keys), hyper.batch_size)):
            idx = rows[order[start : start + hyper.batch_size]]
            count = len(idx)
            u = np.concatenate([full[idx[:, 0]], full[idx[:, 1]], full[idx[:, 2]]], axis=0)
            weight, bias = tensors[PROJECTION_WEIGHT], tensors[PROJECTION_BIAS]
            out, norm_cache = _projection_step(u, weight, bias, config.normalize)
            losses, (dq, dp, dn) = triplet_loss_batch(out[:count], out[count : 2 * count], out[2 * count :], g)
            loss = float(np.mean(losses))
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, batch_no, lr, loss)

            dout = np.concatenate([dq, dp, dn], axis=0)
            if norm_cache is not None:
                dout = l2_normalize_backward(dout, norm_cache)
            grads = {PROJECTION_WEIGHT: u.T @ dout, PROJECTION_BIAS: dout.sum(axis=0)}
            _sgd_step(tensors, grads, velocity, lr, hyper.momentum)
            batch_losses.append(loss * count)

        epoch_loss = float(np.sum(batch_losses) / len(keys))
        epoch_losses.append(epoch_loss)
        logger.info(f"projection epoch {epoch + 1}/{hyper.epochs}: mean loss {epoch_loss:.6f} (lr={lr:g})")

    trained = base.with_projection(tensors[PROJECTION_WEIGHT], tensors[PROJECTION_BIAS])
    if not trained.is_finite():
        raise TrainingDivergedError(hyper.epochs - 1, -1, hyper.lr, float("nan"))
    return TrainResult(params=trained, epoch_losses=epoch_losses)
