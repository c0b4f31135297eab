"""Scalogram-to-embedding backends.

The reference backend pools the rendered scalogram image into a g x g grid
of per-cell statistic vectors. The optional external backend runs a saved
neural network (TorchScript) over the image and returns its 7x7x1280
feature map in the same grid layout, so either can feed the ensemble.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cwt import Scalogram, to_image
from .errors import EmbedError

GRID_POOL_STATS = ("mean", "std", "min", "max", "median", "mean_abs", "energy", "range")

EXTERNAL_INPUT_SIZE = 224
EXTERNAL_GRID = 7
EXTERNAL_DEPTH = 1280


@dataclass(frozen=True)
class EmbeddingGrid:
    """A g x g grid of d-dimensional feature vectors."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[0] != v.shape[1]:
            raise EmbedError(f"embedding grid must be g x g x d, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise EmbedError("embedding grid contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def g(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[2]

    def flatten(self) -> np.ndarray:
        """Row-major (g*g) x d view: cell (i, j) is slice i*g + j."""
        return self.values.reshape(self.g * self.g, self.d)


@dataclass(frozen=True)
class EmbedBackendSpec:
    """Exactly one backend: handcrafted grid pooling or an external model."""

    kind: str = "grid_pool"
    g: int = 7
    cell_px: int = 32
    stats: tuple[str, ...] = GRID_POOL_STATS
    model_path: str | None = None
    input_size: int = EXTERNAL_INPUT_SIZE

    def __post_init__(self):
        if self.kind not in ("grid_pool", "external_model"):
            raise EmbedError(f"unknown backend kind {self.kind!r}")
        if self.kind == "external_model" and not self.model_path:
            raise EmbedError("external_model backend requires model_path")
        if self.kind == "grid_pool" and self.g < 1:
            raise EmbedError(f"grid side must be >= 1, got {self.g}")


_STAT_FUNCS = {
    "mean": lambda c: c.mean(axis=-1),
    "std": lambda c: c.std(axis=-1),
    "min": lambda c: c.min(axis=-1),
    "max": lambda c: c.max(axis=-1),
    "median": lambda c: np.median(c, axis=-1),
    "mean_abs": lambda c: np.abs(c).mean(axis=-1),
    "energy": lambda c: np.square(c).mean(axis=-1),
    "range": lambda c: c.max(axis=-1) - c.min(axis=-1),
}


def grid_pool_embed(scalogram, g: int = 7, stats: tuple[str, ...] = GRID_POOL_STATS,
                    cell_px: int = 32) -> EmbeddingGrid:
    """Pool the normalized scalogram image into per-cell statistic vectors.

    The image is rendered at (cell_px * g) squared so cells tile it exactly,
    mirroring a 224-input backbone when cell_px = 32 and g = 7. Amplitude
    scaling of the input does not change the result (normalization first).
    """
    if g < 1:
        raise EmbedError(f"grid side must be >= 1, got {g}")
    unknown = [s for s in stats if s not in _STAT_FUNCS]
    if unknown:
        raise EmbedError(f"unknown cell statistics: {unknown}")
    side = cell_px * g
    img = to_image(scalogram, side, side).astype(np.float64, copy=False)
    cells = img.reshape(g, cell_px, g, cell_px).transpose(0, 2, 1, 3).reshape(g, g, cell_px * cell_px)
    values = np.stack([_STAT_FUNCS[s](cells) for s in stats], axis=-1)
    return EmbeddingGrid(values)


class ExternalModel:
    """A loaded TorchScript feature extractor with a validated output shape."""

    def __init__(self, path: str | Path, input_size: int = EXTERNAL_INPUT_SIZE):
        try:
            import torch
        except ImportError as exc:
            raise EmbedError(
                "external_model backend requires torch (install the 'external' extra)"
            ) from exc
        path = Path(path)
        if not path.exists():
            raise EmbedError(f"model file not found: {path}")
        self._torch = torch
        try:
            self.module = torch.jit.load(str(path), map_location="cpu")
        except Exception as exc:
            raise EmbedError(f"failed to load model {path}: {exc}") from exc
        self.module.eval()
        self.input_size = input_size
        probe = self._run(np.zeros((input_size, input_size), dtype=np.float32))
        if probe.shape != (EXTERNAL_GRID, EXTERNAL_GRID, EXTERNAL_DEPTH):
            raise EmbedError(
                f"model {path} declares output shape {probe.shape}, "
                f"expected {(EXTERNAL_GRID, EXTERNAL_GRID, EXTERNAL_DEPTH)}"
            )

    def _run(self, image: np.ndarray) -> np.ndarray:
        torch = self._torch
        x = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32))
        x = x.reshape(1, 1, *image.shape)
        with torch.no_grad():
            out = self.module(x)
        arr = out.numpy()
        if arr.ndim != 4 or arr.shape[0] != 1:
            raise EmbedError(f"model returned shape {arr.shape}, expected (1, d, g, g)")
        return np.transpose(arr[0], (1, 2, 0)).astype(np.float64)  # (g, g, d)


def external_embed(image: np.ndarray, spec: EmbedBackendSpec,
                   model: ExternalModel | None = None) -> EmbeddingGrid:
    """Run the external model on a [0, 1] grayscale image of spec.input_size."""
    if spec.kind != "external_model":
        raise EmbedError(f"backend spec is {spec.kind!r}, not external_model")
    if model is None:
        model = ExternalModel(spec.model_path, spec.input_size)
    image = np.asarray(image, dtype=np.float32)
    if image.shape != (spec.input_size, spec.input_size):
        raise EmbedError(
            f"image shape {image.shape} does not match model input "
            f"({spec.input_size}, {spec.input_size})"
        )
    return EmbeddingGrid(model._run(image))


def embed_scalogram(scalogram: Scalogram, spec: EmbedBackendSpec,
                    model: ExternalModel | None = None) -> EmbeddingGrid:
    """Dispatch a scalogram through the configured backend."""
    if spec.kind == "grid_pool":
        return grid_pool_embed(scalogram, g=spec.g, stats=spec.stats, cell_px=spec.cell_px)
    img = to_image(scalogram, spec.input_size, spec.input_size)
    return external_embed(img, spec, model=model)
