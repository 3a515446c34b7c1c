"""Embedding backends: a deterministic spectral reference and a serialized ViT.

Both backends expose the same minimal surface: ``embed_dim``, ``input_size``,
``layer_count``, ``embed(img)``, ``embed_batch(imgs)``, and ``with_layer(l)``.
The detector and evaluation harness run unchanged against either kind.

Spectral reference backend
--------------------------
A closed-form stand-in for a vision foundation model that needs no weights
and no network access.  Its embedding measures radial-band energies of the
image's full-frame DFT *coherently*: each band's coefficients are projected
onto a fixed bank of unit-norm pseudo-random complex filters and the squared
magnitudes of those projections are the features, followed by the three
channel means.  Coherent projection (project, then square) preserves the
interference between an image's own spectral content and any additive
perturbation, so images rich in genuine high-frequency detail respond more
strongly to high-frequency noise than spectrally sparse ones, mirroring the
behaviour of learned embeddings.

Exact definition, reproducible independently:

* Input: a square (S, S, 3) array; values may lie outside [0, 1].
* Per channel c, with ``m_c = mean(x[:, :, c])``:
  ``F = rfft2(x[:, :, c] - m_c) / S**2`` on the half-spectrum grid of shape
  (S, S//2 + 1), flattened row-major.  Mean removal only clears the DC bin,
  which carries no band energy, but keeps constant images exactly at zero.
* Radial frequency of bin (u, v): ``hypot(fu, fv)`` with the signed
  convention of :func:`specdetect.perturb.signed_frequencies`; the maximum is
  ``RMAX = sqrt(2)/2``.
* Band index of a bin: ``min(floor(NUM_BANDS * r / RMAX), NUM_BANDS - 1)``;
  the DC bin is excluded from band 0.
* Filter bank: for channel c = 0..2, band j = 0..NUM_BANDS-1 in that order,
  draw ``re`` then ``im`` as ``standard_normal((PROJECTIONS_PER_BAND, n_j))``
  from one Philox stream ``philox_stream(BANK_SEED, domain=DOMAIN_BANK)``
  (n_j = number of bins in band j, ordered by flat index) and set
  ``g = (re + 1j*im)`` with rows normalized to unit L2 norm.
* Features: ``|g @ F[band bins]| ** 2`` for every (c, j, k), concatenated in
  (c, j, k) order, followed by ``mean(x[:, :, c])`` for c = 0..2.

Dimension: 3 * NUM_BANDS * PROJECTIONS_PER_BAND + 3 = 771.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BundleLoadError, LayerOutOfRange, ShapeMismatch
from .perturb import signed_frequencies
from .rng import philox_stream

NUM_BANDS = 16
PROJECTIONS_PER_BAND = 16
RMAX = float(np.sqrt(2.0) / 2.0)
BANK_SEED = 20240501
DOMAIN_BANK = 7


@dataclass(frozen=True)
class BackendDescriptor:
    """How to open an embedding backend."""

    kind: str = "spectral-reference"  # or "serialized-vit"
    layer: int = 13
    bundle: str | None = None
    input_size: int = 224

    def __post_init__(self):
        if self.kind not in ("spectral-reference", "serialized-vit"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "serialized-vit" and not self.bundle:
            raise ValueError("serialized-vit requires a bundle directory")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "layer": self.layer,
            "bundle": self.bundle,
            "input_size": self.input_size,
        }


def _check_square_rgb(img: np.ndarray, size: int) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape != (size, size, 3):
        raise ShapeMismatch(f"expected ({size}, {size}, 3) image, got {arr.shape}")
    return arr


class _ProjectionBank:
    """Fixed per-size bank of band-limited complex filters."""

    _cache: dict[int, "_ProjectionBank"] = {}
    _lock = threading.Lock()

    def __init__(self, size: int):
        f_u = signed_frequencies(size)[:, None]
        f_v = (np.arange(size // 2 + 1) / size)[None, :]
        radius = np.hypot(f_u, f_v).ravel()
        band = np.minimum((NUM_BANDS * radius / RMAX).astype(int), NUM_BANDS - 1)
        bins = [np.flatnonzero(band == j) for j in range(NUM_BANDS)]
        bins[0] = bins[0][bins[0] != 0]  # DC carries no band energy
        rng = philox_stream(BANK_SEED, domain=DOMAIN_BANK)
        self.filters: list[list[tuple[np.ndarray, np.ndarray]]] = []
        for _channel in range(3):
            per_band = []
            for j in range(NUM_BANDS):
                re = rng.standard_normal((PROJECTIONS_PER_BAND, bins[j].size))
                im = rng.standard_normal((PROJECTIONS_PER_BAND, bins[j].size))
                g = re + 1j * im
                g /= np.linalg.norm(g, axis=1, keepdims=True)
                per_band.append((bins[j], g))
            self.filters.append(per_band)

    @classmethod
    def for_size(cls, size: int) -> "_ProjectionBank":
        with cls._lock:
            if size not in cls._cache:
                cls._cache[size] = cls(size)
            return cls._cache[size]


def spectral_reference_features(img: np.ndarray) -> np.ndarray:
    """Compute the spectral reference embedding of one square RGB image."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] != arr.shape[1]:
        raise ShapeMismatch(f"expected square (S, S, 3) image, got {arr.shape}")
    size = arr.shape[0]
    bank = _ProjectionBank.for_size(size)
    npix = size * size
    means = arr.mean(axis=(0, 1))
    parts = []
    for c in range(3):
        spectrum = np.fft.rfft2(arr[:, :, c] - means[c]).ravel() / npix
        for bins, g in bank.filters[c]:
            parts.append(np.abs(g @ spectrum[bins]) ** 2)
    parts.append(means)
    return np.concatenate(parts)


class SpectralBackend:
    """Weight-free deterministic backend built on the projection bank."""

    kind = "spectral-reference"

    def __init__(self, input_size: int = 224):
        self.input_size = input_size
        self.embed_dim = 3 * NUM_BANDS * PROJECTIONS_PER_BAND + 3
        self.layer_count = 1
        self.layer = 1
        _ProjectionBank.for_size(input_size)  # build eagerly

    def embed(self, img: np.ndarray) -> np.ndarray:
        arr = _check_square_rgb(img, self.input_size)
        return spectral_reference_features(arr)

    def embed_batch(self, imgs: list[np.ndarray]) -> list[np.ndarray]:
        return [self.embed(im) for im in imgs]

    def with_layer(self, layer: int) -> "SpectralBackend":
        if layer != 1:
            raise LayerOutOfRange(f"spectral backend exposes a single layer (1), got {layer}")
        return self

    def describe(self) -> dict:
        return {"kind": self.kind, "layer": 1, "input_size": self.input_size, "embed_dim": self.embed_dim}


_REQUIRED_METADATA = (
    "weights_file",
    "input_size",
    "normalization_mean",
    "normalization_std",
    "layer_count",
    "embed_dim",
    "cls_token_index",
)


class TorchVitBackend:
    """Serialized vision transformer with per-layer hidden states exposed.

    The bundle is a directory holding a TorchScript module plus
    ``metadata.json``.  The module maps a normalized NCHW float32 batch to a
    stacked hidden-state tensor of shape (layer_count + 1, batch, tokens,
    embed_dim), where index 0 is the pre-transformer token embedding and
    index l the output of block l.  Channel normalization (metadata mean/std)
    is applied inside :meth:`embed`, after any perturbation.
    """

    kind = "serialized-vit"

    def __init__(self, bundle: str | Path, layer: int = 13):
        try:
            import torch
        except ImportError as exc:  # pragma: no cover - environment dependent
            raise BundleLoadError("the serialized-vit backend requires torch") from exc
        self._torch = torch
        bundle = Path(bundle)
        meta_path = bundle / "metadata.json"
        if not meta_path.is_file():
            raise BundleLoadError(f"missing metadata.json in {bundle}")
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise BundleLoadError(f"unreadable metadata.json in {bundle}: {exc}") from exc
        missing = [k for k in _REQUIRED_METADATA if k not in meta]
        if missing:
            raise BundleLoadError(f"metadata.json missing fields: {missing}")
        weights = bundle / meta["weights_file"]
        if not weights.is_file():
            raise BundleLoadError(f"missing weights file {weights}")
        self.metadata = meta
        self.input_size = int(meta["input_size"])
        self.layer_count = int(meta["layer_count"])
        self.embed_dim = int(meta["embed_dim"])
        self.cls_token_index = int(meta["cls_token_index"])
        if not 0 <= layer <= self.layer_count:
            raise LayerOutOfRange(f"layer {layer} outside [0, {self.layer_count}]")
        self.layer = layer
        self._mean = np.asarray(meta["normalization_mean"], dtype=np.float64).reshape(1, 1, 3)
        self._std = np.asarray(meta["normalization_std"], dtype=np.float64).reshape(1, 1, 3)
        try:
            self._module = torch.jit.load(str(weights), map_location="cpu").eval()
        except (RuntimeError, OSError) as exc:
            raise BundleLoadError(f"cannot load TorchScript weights {weights}: {exc}") from exc
        self._lock = threading.Lock()

    def _forward(self, batch: np.ndarray) -> np.ndarray:
        torch = self._torch
        tensor = torch.from_numpy(np.ascontiguousarray(batch, dtype=np.float32))
        with self._lock, torch.no_grad():
            hidden = self._module(tensor)
        return hidden[self.layer, :, self.cls_token_index, :].numpy().astype(np.float64)

    def _normalize(self, img: np.ndarray) -> np.ndarray:
        arr = _check_square_rgb(img, self.input_size)
        return ((arr - self._mean) / self._std).transpose(2, 0, 1)

    def embed(self, img: np.ndarray) -> np.ndarray:
        return self._forward(self._normalize(img)[None])[0]

    def embed_batch(self, imgs: list[np.ndarray]) -> list[np.ndarray]:
        if not imgs:
            return []
        batch = np.stack([self._normalize(im) for im in imgs])
        out = self._forward(batch)
        return [out[i] for i in range(out.shape[0])]

    def with_layer(self, layer: int) -> "TorchVitBackend":
        if not 0 <= layer <= self.layer_count:
            raise LayerOutOfRange(f"layer {layer} outside [0, {self.layer_count}]")
        view = object.__new__(TorchVitBackend)
        view.__dict__ = dict(self.__dict__)
        view.layer = layer
        return view

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "layer": self.layer,
            "input_size": self.input_size,
            "embed_dim": self.embed_dim,
            "layer_count": self.layer_count,
        }


def open_backend(desc: BackendDescriptor):
    """Open a backend handle from its descriptor.

    Raises:
        BundleLoadError: serialized-vit bundle missing or malformed.
        LayerOutOfRange: requested layer exceeds the bundle's depth.
    """
    if desc.kind == "spectral-reference":
        return SpectralBackend(input_size=desc.input_size)
    return TorchVitBackend(desc.bundle, layer=desc.layer)


def embed(handle, img: np.ndarray) -> np.ndarray:
    """Functional alias for ``handle.embed(img)``."""
    return handle.embed(img)


def embed_batch(handle, imgs: list[np.ndarray]) -> list[np.ndarray]:
    """Functional alias for ``handle.embed_batch(imgs)``."""
    return handle.embed_batch(imgs)
