import logging
import os
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from visrec.core.codec.binary import BinaryReader, BinaryWriter, TruncatedError
from visrec.domain.embedding.config import NetConfig
from visrec.domain.embedding.constant import MODEL_FORMAT_VERSION, MODEL_MAGIC
from visrec.domain.embedding.entity import Params
from visrec.domain.embedding.exception import ModelFileError, ModelNotFoundError
from visrec.domain.embedding.network import param_shapes

logger = logging.getLogger(__name__)

DEFAULT_MODEL_NAME = "default"


def encode_model(params: Params) -> bytes:
    header = {
        "config": params.config.canonical(),
        "format": MODEL_FORMAT_VERSION,
        "tensors": [[name, list(tensor.shape)] for name, tensor in params.tensors.items()],
    }
    writer = BinaryWriter().magic(MODEL_MAGIC).json(header)
    for tensor in params.tensors.values():
        writer.f32(tensor)
    return writer.getvalue()


def decode_model(payload: bytes, path: str = "<memory>") -> Params:
    reader = BinaryReader(payload)
    try:
        reader.expect_magic(MODEL_MAGIC)
        header = reader.json()
        if header.get("format") != MODEL_FORMAT_VERSION:
            raise ModelFileError(path, f"unsupported format {header.get('format')!r}")
        config = NetConfig.model_validate(header["config"])
        tensors: dict[str, np.ndarray] = {}
        for name, shape in header["tensors"]:
            count = int(np.prod(shape)) if shape else 1
            # stored as f32, widened for arithmetic
            tensors[name] = reader.f32(count).reshape(shape).astype(np.float64)
    except (TruncatedError, ValueError, KeyError, TypeError, ValidationError) as e:
        raise ModelFileError(path, str(e))
    if not reader.at_end():
        raise ModelFileError(path, f"{reader.remaining()} trailing bytes")

    expected = param_shapes(config)
    for name, shape in expected.items():
        if name not in tensors:
            raise ModelFileError(path, f"missing tensor {name}")
        if tensors[name].shape != shape:
            raise ModelFileError(path, f"tensor {name} has shape {tensors[name].shape}, expected {shape}")
    return Params(config=config, tensors=tensors)


def save_model(path: str | Path, params: Params) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_model(params))
    os.replace(tmp, path)


def load_model(path: str | Path) -> Params:
    try:
        payload = Path(path).read_bytes()
    except OSError as e:
        raise ModelFileError(str(path), e.strerror or str(e))
    return decode_model(payload, str(path))


class ModelRegistry:
    """Models keyed by category group, with an optional default.

    A single model file serves every group. A directory holds ``<group>.bin``
    files, and ``default.bin`` when present answers for unlisted groups.
    """

    def __init__(self, models: dict[str, Params], default: Params | None = None):
        self._models = dict(models)
        self._default = default

    @classmethod
    def single(cls, params: Params) -> "ModelRegistry":
        return cls({}, default=params)

    @classmethod
    def from_path(cls, path: str | Path) -> "ModelRegistry":
        path = Path(path)
        if not path.is_dir():
            return cls.single(load_model(path))

        models: dict[str, Params] = {}
        default: Params | None = None
        for model_path in sorted(path.glob("*.bin")):
            params = load_model(model_path)
            if model_path.stem == DEFAULT_MODEL_NAME:
                default = params
            else:
                models[model_path.stem] = params
        logger.info(f"Loaded {len(models)} group model(s) from {path}, default={'yes' if default else 'no'}")
        return cls(models, default)

    def groups(self) -> list[str]:
        return sorted(self._models)

    @property
    def default(self) -> Params | None:
        return self._default

    def get(self, group: str | None) -> Params:
        if group is not None and group in self._models:
            return self._models[group]
        if self._default is None:
            raise ModelNotFoundError(group)
        return self._default

    def dims(self) -> set[int]:
        params = list(self._models.values()) + ([self._default] if self._default else [])
        return {p.output_dim for p in params}
