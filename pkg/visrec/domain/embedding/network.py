from collections.abc import Sequence
from functools import lru_cache

import numpy as np

from visrec.core.image.ppm import Image
from visrec.domain.embedding.config import ConvSpec, DenseSpec, NetConfig, PoolSpec
from visrec.domain.embedding.constant import FORWARD_BATCH_SIZE, MIN_NORM, PROJECTION_BIAS, PROJECTION_WEIGHT
from visrec.domain.embedding.entity import Embedding, Params
from visrec.domain.embedding.exception import ImageDimensionError, NumericError
from visrec.domain.embedding.layers import (
    Conv2D,
    Dense,
    Grads,
    Layer,
    MaxPool2D,
    ReLU,
    l2_normalize,
    l2_normalize_backward,
)


def _build_path(name: str, specs: list, height: int, width: int) -> list[Layer]:
    layers: list[Layer] = []
    c, h, w = 3, height, width
    flat: int | None = None
    for i, spec in enumerate(specs):
        layer_name = f"{name}.{i}"
        if isinstance(spec, ConvSpec):
            pad = spec.resolved_padding()
            layers.append(Conv2D(f"{layer_name}.conv", c, spec.filters, spec.kernel, spec.stride, pad))
            layers.append(ReLU(f"{layer_name}.relu"))
            h = (h + 2 * pad - spec.kernel) // spec.stride + 1
            w = (w + 2 * pad - spec.kernel) // spec.stride + 1
            c = spec.filters
        elif isinstance(spec, PoolSpec):
            layers.append(MaxPool2D(f"{layer_name}.pool", spec.size))
            h, w = h // spec.size, w // spec.size
        elif isinstance(spec, DenseSpec):
            in_features = flat if flat is not None else c * h * w
            layers.append(Dense(f"{layer_name}.dense", in_features, spec.units, relu_follows=spec.relu))
            if spec.relu:
                layers.append(ReLU(f"{layer_name}.relu"))
            flat = spec.units
    return layers


@lru_cache(maxsize=32)
def build_plan(config: NetConfig) -> tuple[tuple[str, tuple[Layer, ...]], ...]:
    return tuple(
        (name, tuple(_build_path(name, specs, config.input_height, config.input_width)))
        for name, specs in config.paths()
    )


def init_params(config: NetConfig, seed: int, with_projection: bool = False) -> Params:
    """He-style fan-in initialization from a seeded generator, in declaration order."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for _, layers in build_plan(config):
        for layer in layers:
            tensors.update(layer.init_params(rng))
    params = Params(config=config, tensors=tensors)
    if with_projection and config.reduced_dim is not None:
        weight, bias = init_projection(config, rng)
        params = params.with_projection(weight, bias)
    return params


def init_projection(config: NetConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    d_full = config.full_dim
    d_red = config.reduced_dim if config.reduced_dim is not None else d_full
    if d_red == d_full:
        return np.eye(d_full), np.zeros(d_full)
    return rng.standard_normal((d_full, d_red)) / np.sqrt(d_full), np.zeros(d_red)


def param_shapes(config: NetConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for _, layers in build_plan(config):
        for layer in layers:
            shapes.update(layer.param_shapes())
    return shapes


def preprocess(images: Sequence[Image], config: NetConfig) -> np.ndarray:
    """Scales to [0, 1], subtracts the per-channel corpus mean; returns NCHW float64."""
    for image in images:
        if image.width != config.input_width or image.height != config.input_height:
            raise ImageDimensionError((config.input_width, config.input_height), (image.width, image.height))
    pixels = np.stack([image.to_array() for image in images]).astype(np.float64) / 255.0
    pixels -= np.asarray(config.channel_mean, dtype=np.float64)
    return np.ascontiguousarray(pixels.transpose(0, 3, 1, 2))


def estimate_channel_mean(images: Sequence[Image]) -> tuple[float, float, float]:
    total = np.zeros(3)
    count = 0
    for image in images:
        pixels = image.to_array().reshape(-1, 3).astype(np.float64) / 255.0
        total += pixels.sum(axis=0)
        count += pixels.shape[0]
    mean = total / max(count, 1)
    return float(mean[0]), float(mean[1]), float(mean[2])


def forward_batch(params: Params, x: np.ndarray, use_projection: bool = True) -> tuple[np.ndarray, dict]:
    """Runs all paths on preprocessed input; returns (N, D) float64 embeddings and the backward cache."""
    config = params.config
    path_caches = []
    outputs = []
    for name, layers in build_plan(config):
        h = x
        caches = []
        for layer in layers:
            h, cache = layer.forward(params.tensors, h)
            caches.append(cache)
        flat = h.reshape(h.shape[0], -1)
        path_caches.append((name, caches, h.shape))
        outputs.append(flat)

    z = np.concatenate(outputs, axis=1)
    cache: dict = {"paths": path_caches, "widths": [o.shape[1] for o in outputs]}

    u = z
    if config.normalize:
        u, cache["norm_full"] = l2_normalize(z, MIN_NORM)

    out = u
    if use_projection and params.has_projection:
        cache["projection_input"] = u
        out = u @ params.tensors[PROJECTION_WEIGHT] + params.tensors[PROJECTION_BIAS]
        if config.normalize:
            out, cache["norm_reduced"] = l2_normalize(out, MIN_NORM)
    return out, cache


def backward_batch(params: Params, dout: np.ndarray, cache: dict) -> Grads:
    config = params.config
    grads: Grads = {}

    du = dout
    if "projection_input" in cache:
        dv = l2_normalize_backward(dout, cache["norm_reduced"]) if config.normalize else dout
        grads[PROJECTION_WEIGHT] = cache["projection_input"].T @ dv
        grads[PROJECTION_BIAS] = dv.sum(axis=0)
        du = dv @ params.tensors[PROJECTION_WEIGHT].T

    dz = l2_normalize_backward(du, cache["norm_full"]) if config.normalize else du

    offset = 0
    plan = dict(build_plan(config))
    for (name, caches, out_shape), width in zip(cache["paths"], cache["widths"]):
        dh = dz[:, offset : offset + width].reshape(out_shape)
        offset += width
        for layer, layer_cache in zip(reversed(plan[name]), reversed(caches)):
            dh, layer_grads = layer.backward(params.tensors, dh, layer_cache)
            for key, g in layer_grads.items():
                grads[key] = grads[key] + g if key in grads else g
    return grads


def forward(params: Params, image: Image) -> Embedding:
    """Canonical single-image inference path; a pure function of (params, image)."""
    x = preprocess([image], params.config)
    out, _ = forward_batch(params, x)
    if not np.all(np.isfinite(out)):
        raise NumericError(0, "embedding")
    return Embedding(out[0])


def embed_images(params: Params, images: Sequence[Image], use_projection: bool = True) -> np.ndarray:
    rows = []
    for start in range(0, len(images), FORWARD_BATCH_SIZE):
        x = preprocess(images[start : start + FORWARD_BATCH_SIZE], params.config)
        out, _ = forward_batch(params, x, use_projection=use_projection)
        rows.append(out)
    if not rows:
        return np.zeros((0, params.output_dim if use_projection else params.config.full_dim))
    return np.concatenate(rows, axis=0)
