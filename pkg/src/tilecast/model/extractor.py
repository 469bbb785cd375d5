"""Per-frame visual descriptor extractors (pluggable, identified by name).

Two implementations:

* ``stub``: deterministic, weight-free hash projection. Frames are
  grayscaled, mean-pooled onto a coarse grid, and projected through a fixed
  seeded random matrix to the descriptor dimension. Used by tests/CI and the
  synthetic pipeline; needs no pretrained weights.
* ``mobilenet_v2``: pretrained CNN producing 1000-dim descriptors (lazy
  optional dependency on torch/torchvision; used for real experiments).

Extractors are frozen feature maps: identical frames give identical
descriptors, and extraction is strictly per-frame.
"""

from __future__ import annotations

import numpy as np

from .. import kernels

_HASH_SEED = 0x7A11E
_POOL_ROWS = 24
_POOL_COLS = 48


class StubExtractor:
    """Hash-projection descriptor: box-pool + fixed Rademacher projection."""

    def __init__(self, dim: int = 1000):
        self.dim = dim
        self._proj_cache: dict[int, np.ndarray] = {}

    @property
    def identity(self) -> str:
        return f"stub-hash-v1-d{self.dim}"

    def _projection(self, n_cells: int) -> np.ndarray:
        if n_cells not in self._proj_cache:
            rng = np.random.Generator(np.random.PCG64(_HASH_SEED + n_cells))
            proj = rng.integers(0, 2, size=(n_cells, self.dim)).astype(np.float32)
            proj = (2.0 * proj - 1.0) / np.float32(np.sqrt(n_cells))
            self._proj_cache[n_cells] = proj
        return self._proj_cache[n_cells]

    def extract(self, frames: np.ndarray) -> np.ndarray:
        """(n, H, W, 3) uint8 -> (n, dim) float32."""
        if frames.ndim != 4 or frames.shape[-1] != 3:
            raise ValueError(f"expected (n, H, W, 3) frames, got shape {frames.shape}")
        n, h, w = frames.shape[:3]
        ph, pw = min(_POOL_ROWS, h), min(_POOL_COLS, w)
        proj = self._projection(ph * pw)
        out = np.empty((n, self.dim), dtype=np.float32)
        for k in range(n):
            gray = frames[k].astype(np.float32).mean(axis=2) / np.float32(255.0)
            pooled = kernels.box_pool(gray, ph, pw)
            out[k] = pooled.reshape(-1) @ proj
        return out


class MobileNetExtractor:
    """Pretrained lightweight CNN descriptor (1000-dim classifier logits), frozen."""

    def __init__(self):
        try:
            import torch
            import torchvision
        except ImportError as exc:  # pragma: no cover - optional dependency
            raise RuntimeError(
                "mobilenet_v2 extractor needs the optional torch/torchvision install"
            ) from exc
        self._torch = torch
        weights = torchvision.models.MobileNet_V2_Weights.IMAGENET1K_V1
        self._net = torchvision.models.mobilenet_v2(weights=weights).eval()
        for p in self._net.parameters():
            p.requires_grad_(False)
        self._mean = np.array([0.485, 0.456, 0.406], dtype=np.float32)
        self._std = np.array([0.229, 0.224, 0.225], dtype=np.float32)
        self.dim = 1000

    @property
    def identity(self) -> str:
        return "mobilenet_v2-imagenet1k-v1"

    def extract(self, frames: np.ndarray) -> np.ndarray:  # pragma: no cover - optional
        torch = self._torch
        x = frames.astype(np.float32) / 255.0
        x = (x - self._mean) / self._std
        with torch.no_grad():
            t = torch.from_numpy(np.transpose(x, (0, 3, 1, 2)))
            return self._net(t).numpy().astype(np.float32)


def get_extractor(name: str, dim: int = 1000):
    if name == "stub":
        return StubExtractor(dim=dim)
    if name == "mobilenet_v2":
        if dim != 1000:
            raise ValueError("mobilenet_v2 descriptors are fixed at 1000 dims")
        return MobileNetExtractor()
    raise ValueError(f"unknown extractor {name!r} (choose 'stub' or 'mobilenet_v2')")
