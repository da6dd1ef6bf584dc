import json
from pathlib import Path
from typing import Annotated, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from visrec.core.exception.base import ConfigError
from visrec.domain.embedding.constant import DEFAULT_INPUT_SIZE, DEFAULT_MARGIN, DEFAULT_REDUCED_DIM


class ConvSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["conv"] = "conv"
    filters: int = Field(..., gt=0)
    kernel: int = Field(..., gt=0)
    stride: int = Field(1, gt=0)
    # None means "same" padding for stride-1 convolutions and no padding otherwise
    padding: int | None = Field(None, ge=0)

    def resolved_padding(self) -> int:
        if self.padding is not None:
            return self.padding
        return self.kernel // 2 if self.stride == 1 else 0


class PoolSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["pool"] = "pool"
    size: int = Field(2, gt=1)


class DenseSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["dense"] = "dense"
    units: int = Field(..., gt=0)
    relu: bool = False


LayerSpec = Annotated[ConvSpec | PoolSpec | DenseSpec, Field(discriminator="kind")]


def _conv(filters: int, kernel: int, stride: int = 1) -> ConvSpec:
    return ConvSpec(filters=filters, kernel=kernel, stride=stride)


DEFAULT_DEEP_PATH: tuple[LayerSpec, ...] = (
    _conv(16, 3),
    _conv(16, 3),
    PoolSpec(size=2),
    _conv(32, 3),
    _conv(32, 3),
    PoolSpec(size=2),
    _conv(64, 3),
    _conv(64, 3),
    PoolSpec(size=2),
    DenseSpec(units=128),
)

DEFAULT_SHALLOW_PATHS: tuple[tuple[LayerSpec, ...], ...] = (
    (_conv(8, 8, stride=4), PoolSpec(size=2), DenseSpec(units=32)),
    (_conv(8, 16, stride=8), DenseSpec(units=32)),
)


class NetConfig(BaseModel):
    """One deep and two shallow parallel paths, concatenated, optionally projected."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    input_width: int = Field(DEFAULT_INPUT_SIZE, gt=0)
    input_height: int = Field(DEFAULT_INPUT_SIZE, gt=0)
    # tuples keep the config hashable, so layer plans can be memoized per config
    deep: tuple[LayerSpec, ...] = DEFAULT_DEEP_PATH
    shallow: tuple[tuple[LayerSpec, ...], ...] = DEFAULT_SHALLOW_PATHS
    reduced_dim: int | None = Field(DEFAULT_REDUCED_DIM, gt=0)
    margin: float = Field(DEFAULT_MARGIN, ge=0.0)
    normalize: bool = True
    channel_mean: tuple[float, float, float] = (0.5, 0.5, 0.5)
    category_group: str | None = None

    @model_validator(mode="after")
    def check_paths(self) -> "NetConfig":
        if len(self.shallow) != 2:
            raise ValueError(f"exactly two shallow paths are required, got {len(self.shallow)}")
        if not self.deep:
            raise ValueError("deep path is empty")
        for name, path in self.paths():
            _path_output_dim(path, self.input_height, self.input_width, name)
        if self.reduced_dim is not None and self.reduced_dim > self.full_dim:
            raise ValueError(f"reduced_dim {self.reduced_dim} exceeds full embedding dim {self.full_dim}")
        return self

    def paths(self) -> list[tuple[str, list[LayerSpec]]]:
        return [("deep", list(self.deep)), ("shallow1", list(self.shallow[0])), ("shallow2", list(self.shallow[1]))]

    @property
    def full_dim(self) -> int:
        return sum(_path_output_dim(path, self.input_height, self.input_width, name) for name, path in self.paths())

    def canonical(self) -> dict:
        return self.model_dump(mode="json")


def _path_output_dim(path: list[LayerSpec], height: int, width: int, name: str) -> int:
    c, h, w = 3, height, width
    flat: int | None = None
    for i, spec in enumerate(path):
        where = f"{name}[{i}]"
        if isinstance(spec, ConvSpec):
            if flat is not None:
                raise ValueError(f"{where}: convolution after a dense layer")
            pad = spec.resolved_padding()
            h = (h + 2 * pad - spec.kernel) // spec.stride + 1
            w = (w + 2 * pad - spec.kernel) // spec.stride + 1
            c = spec.filters
        elif isinstance(spec, PoolSpec):
            if flat is not None:
                raise ValueError(f"{where}: pooling after a dense layer")
            h, w = h // spec.size, w // spec.size
        else:
            flat = spec.units
        if flat is None and (h <= 0 or w <= 0):
            raise ValueError(f"{where}: spatial size collapsed to {h}x{w}")
    return flat if flat is not None else c * h * w


class TrainHyper(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    lr: float = Field(0.01, ge=0.0)
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    epochs: int = Field(20, ge=0)
    batch_size: int = Field(32, gt=0)
    seed: int = 0
    lr_decay: float = Field(0.5, gt=0.0, le=1.0)
    decay_every: int = Field(8, gt=0)

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_decay ** (epoch // self.decay_every)


def load_net_config(path: str | Path) -> NetConfig:
    try:
        raw = json.loads(Path(path).read_text())
        return NetConfig.model_validate(raw)
    except (OSError, json.JSONDecodeError, ValidationError) as e:
        raise ConfigError(f"Invalid net config {path}: {e}")
