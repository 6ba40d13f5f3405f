"""Python access to the windcnn core: models, counting, data generation and Pareto analysis.

Model configurations are plain dicts with the same field names as the JSON
config files used by the command-line tool.
"""

from __future__ import annotations

import json
from typing import Iterable

import numpy as np

from . import _windcnn
from ._windcnn import ConfigError, DataError, NumericError, ShapeError, dequantize, quantize

__all__ = [
    "ConfigError",
    "DataError",
    "Model",
    "NumericError",
    "ShapeError",
    "build_dataset",
    "count_macs",
    "count_params",
    "default_config",
    "dequantize",
    "generate_scene",
    "pareto_front",
    "quantize",
    "sample_config",
    "validate_config",
    "wind_oracle",
]

V_MAX = 16.0


def default_config() -> dict:
    """Half-U-NeXt at width 32 with one block per stage."""
    width = [32] * 5
    return {
        "block_type": "convnext",
        "decoder_type": "half_unet",
        "encoder_channels": width,
        "decoder_channels": width,
        "encoder_blocks": [1] * 5,
        "decoder_blocks": [1] * 5,
        "output_blocks": 1,
        "resmerge_blocks": 1,
        "dropout": 0.1,
        "input_channels": 1,
        "output_channels": 3,
    }


def _dump(config: dict) -> str:
    return json.dumps(config)


def validate_config(config: dict) -> dict:
    """Returns the normalized config or raises ConfigError."""
    return json.loads(_windcnn.validate_config(_dump(config)))


def count_params(config: dict) -> int:
    return _windcnn.count_params(_dump(config))


def count_macs(config: dict, height: int = 128, width: int | None = None) -> int:
    return _windcnn.count_macs(_dump(config), height, height if width is None else width)


def sample_config(architecture: str, seed: int = 0, tiny: bool = False) -> dict:
    """One draw from the search space of `architecture` (slug or display name)."""
    return json.loads(_windcnn.sample_config(architecture, seed, tiny))


class Model:
    """A float32 network built deterministically from a config and seed."""

    def __init__(self, config: dict | None = None, seed: int = 0):
        self._impl = _windcnn._Model(_dump(config or default_config()), seed)

    @property
    def config(self) -> dict:
        return json.loads(self._impl.config())

    @property
    def num_params(self) -> int:
        return self._impl.num_params()

    def __call__(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        """Forward pass on an (N, 1, H, W) array; H and W must be multiples of 64."""
        return self._impl.forward(np.ascontiguousarray(x, dtype=np.float32), train)

    def fit(self, data_root: str, epochs: int = 5, lr: float = 1e-3, batch: int = 4, seed: int = 0):
        """Trains on a dataset directory; returns (epoch, train_loss, val_loss) tuples."""
        return self._impl.fit(str(data_root), epochs, lr, batch, seed)

    def evaluate(self, data_root: str, split: str = "val", delta: float = 1.0) -> float:
        return self._impl.evaluate(str(data_root), split, delta)

    def bench(self, grid: int = 128, warmup: int = 10, repeats: int = 50) -> dict:
        return self._impl.bench(grid, warmup, repeats)


def pareto_front(points: Iterable[tuple[str, float, float]], relative: bool = True) -> list[dict]:
    """Non-dominated (name, loss, runtime_ms) points in descending runtime."""
    return _windcnn.pareto_front([(str(n), float(l), float(r)) for n, l, r in points], relative)


def generate_scene(seed: int, grid: int = 128) -> np.ndarray:
    """Procedural height map in meters, shape (grid, grid)."""
    return _windcnn.generate_scene(seed, grid)


def wind_oracle(height: np.ndarray, direction: int = 0, extent: float = 1100.0):
    """World-frame (u, v, w) velocity planes in m/s for one inflow direction 0..7."""
    return _windcnn.wind_oracle(np.ascontiguousarray(height, dtype=np.float64), direction, extent)


def build_dataset(root: str, scenes: int, grid: int = 128, seed: int = 0, workers: int = 1) -> int:
    """Writes a dataset directory and returns the number of samples."""
    return _windcnn.build_dataset(str(root), scenes, grid, seed, workers)
