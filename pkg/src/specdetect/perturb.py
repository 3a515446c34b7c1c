"""Structured high-frequency perturbations via patchwise FFT masking.

The perturbation delta for an image is built patch by patch: sample white
Gaussian noise per patch and channel, transform with a 2D FFT, zero every
coefficient whose normalized radial frequency does not exceed the threshold
tau, and invert back to pixel space.  The perturbed image is x + delta, with
no clipping (clipping would reintroduce low-frequency content).

Frequency convention: DFT bin k of a length-P axis maps to the signed
normalized frequency k/P for k <= P//2 and (k-P)/P otherwise, so frequencies
lie in [-0.5, 0.5] and the radial frequency sqrt(fu^2 + fv^2) peaks at
sqrt(2)/2 in the grid corners.  A bin is kept iff its radial frequency is
strictly greater than tau; the DC bin is therefore always suppressed and
every patch of delta has exactly zero mean per channel.

The mask is symmetric under frequency negation, so the masked spectrum of
real noise stays Hermitian and the inverse transform is real.  For small
patch sizes the whole FFT -> mask -> inverse FFT pipeline is collapsed into
one precomputed real matrix per patch (a circular-convolution operator),
which is numerically equivalent and considerably faster than per-patch FFTs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import DimensionError
from .imaging import validate_image
from .rng import DOMAIN_PERTURB, philox_stream

# Largest patch size for which the dense circulant operator is precomputed;
# above this the batched real-FFT path is used (operator memory grows as P^4).
OPERATOR_MAX_P = 32


@dataclass(frozen=True)
class PerturbConfig:
    """Parameters of the high-frequency perturbation.

    lam is the per-pixel Gaussian noise variance in squared pixel units
    (pixel values live in [0, 1]), tau the normalized radial frequency
    threshold, patch_size the tile edge in pixels, and seed the base of
    every derived random stream.
    """

    lam: float = 0.01
    tau: float = 0.5
    patch_size: int = 14
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if self.patch_size < 1:
            raise ValueError(f"patch_size must be >= 1, got {self.patch_size}")


def signed_frequencies(n: int) -> np.ndarray:
    """Signed normalized DFT frequencies for an axis of length n."""
    k = np.arange(n)
    return np.where(k <= n // 2, k / n, (k - n) / n)


class HighPassMask:
    """Boolean keep-grid over the P x P DFT bins of one patch.

    kept[u, v] is True iff the bin's radial frequency strictly exceeds tau.
    """

    def __init__(self, patch_size: int, tau: float):
        if patch_size < 1:
            raise ValueError(f"patch_size must be >= 1, got {patch_size}")
        if tau < 0:
            raise ValueError(f"tau must be >= 0, got {tau}")
        self.patch_size = patch_size
        self.tau = tau
        f = signed_frequencies(patch_size)
        radius = np.hypot(f[:, None], f[None, :])
        self.kept = radius > tau
        self.kept_fraction = float(self.kept.sum()) / (patch_size * patch_size)
        self._half = np.ascontiguousarray(self.kept[:, : patch_size // 2 + 1]).astype(np.float64)
        self._operator: np.ndarray | None = None

    def operator(self) -> np.ndarray:
        """Real (P^2, P^2) matrix equal to IDFT2 . diag(kept) . DFT2.

        Masking in the Fourier domain is a circular convolution, so the
        operator is built by indexing the mask's inverse transform rather
        than by dense matrix products.
        """
        if self._operator is None:
            p = self.patch_size
            kernel = np.fft.ifft2(self.kept.astype(np.float64)).real
            idx = np.arange(p)
            d = (idx[:, None] - idx[None, :]) % p
            self._operator = np.ascontiguousarray(
                kernel[d[:, None, :, None], d[None, :, None, :]].reshape(p * p, p * p)
            )
        return self._operator


def make_highpass_mask(patch_size: int, tau: float) -> HighPassMask:
    """Build the keep-mask for one patch size and threshold."""
    return HighPassMask(patch_size, tau)


def _mask_noise(eps: np.ndarray, mask: HighPassMask, scale: float = 1.0) -> np.ndarray:
    """Apply scale * (FFT -> mask -> inverse FFT) to a (..., P, P) noise stack.

    The scalar is folded into the small mask/operator rather than applied to
    the full noise array; the composite is linear either way.
    """
    p = mask.patch_size
    if p <= OPERATOR_MAX_P:
        flat = eps.reshape(-1, p * p)
        op = mask.operator() if scale == 1.0 else mask.operator() * scale
        return (flat @ op.T).reshape(eps.shape)
    spec = scipy.fft.rfft2(eps, axes=(-2, -1), workers=1)
    spec *= mask._half if scale == 1.0 else mask._half * scale
    return scipy.fft.irfft2(spec, s=(p, p), axes=(-2, -1), workers=1)


def gen_patch_noise(
    patch_size: int,
    channels: int,
    lam: float,
    mask: HighPassMask,
    stream: np.random.Generator,
) -> np.ndarray:
    """Draw one band-limited noise patch of shape (P, P, channels).

    Channels consume independent draws from the given stream in channel
    order.  Fourier coefficients of the result are zero on every suppressed
    bin up to floating-point roundoff.
    """
    if mask.patch_size != patch_size:
        raise DimensionError(f"mask is for P={mask.patch_size}, requested P={patch_size}")
    eps = stream.standard_normal((channels, patch_size, patch_size))
    return np.ascontiguousarray(_mask_noise(eps, mask, np.sqrt(lam)).transpose(1, 2, 0))


def generate_delta(
    height: int,
    width: int,
    channels: int,
    cfg: PerturbConfig,
    image_index: int = 0,
    mask: HighPassMask | None = None,
) -> np.ndarray:
    """Assemble the full-image perturbation delta of shape (H, W, C).

    The noise for all patches of one image comes from a single
    counter-derived stream keyed by (seed, image_index) and is drawn in one
    canonical order (patch-major, then channel, then rows), so delta is
    independent of batching, worker count, and evaluation order.
    """
    p = cfg.patch_size
    if height % p or width % p:
        raise DimensionError(f"patch size {p} does not tile {height}x{width}")
    if mask is None:
        mask = make_highpass_mask(p, cfg.tau)
    gh, gw = height // p, width // p
    stream = philox_stream(cfg.seed, domain=DOMAIN_PERTURB, image_index=image_index)
    eps = stream.standard_normal((gh * gw, channels, p, p))
    d = _mask_noise(eps, mask, np.sqrt(cfg.lam))
    return np.ascontiguousarray(
        d.reshape(gh, gw, channels, p, p).transpose(0, 3, 1, 4, 2).reshape(height, width, channels)
    )


def perturb_image(
    x: np.ndarray,
    cfg: PerturbConfig,
    image_index: int = 0,
    mask: HighPassMask | None = None,
) -> np.ndarray:
    """Return x + delta.  delta depends only on (cfg, image_index), not on x.

    Output is intentionally not clipped to [0, 1].

    Raises:
        DimensionError: patch size does not tile the image.
    """
    arr = validate_image(x)
    if cfg.lam == 0.0:
        h, w = arr.shape[:2]
        if h % cfg.patch_size or w % cfg.patch_size:
            raise DimensionError(f"patch size {cfg.patch_size} does not tile {h}x{w}")
        return arr.copy()
    delta = generate_delta(arr.shape[0], arr.shape[1], arr.shape[2], cfg, image_index, mask)
    return arr + delta


@dataclass(frozen=True)
class ProfileRow:
    height: int
    width: int
    pixels: int
    seconds: float


def perturbation_cost_profile(
    sizes: list[tuple[int, int]],
    cfg: PerturbConfig = PerturbConfig(),
    channels: int = 3,
    repeats: int = 5,
) -> list[ProfileRow]:
    """Wall-clock of delta generation per image size, best of `repeats`.

    Measures generation only (noise, masking, assembly).  Repeats are
    interleaved round-robin across sizes so every size samples the same
    machine conditions; must be run single-threaded for stable numbers.
    """
    if not sizes:
        return []
    mask = make_highpass_mask(cfg.patch_size, cfg.tau)
    for h, w in sizes:
        generate_delta(h, w, channels, cfg, 0, mask)  # warm caches
    best = [float("inf")] * len(sizes)
    for rep in range(max(1, repeats)):
        for i, (h, w) in enumerate(sizes):
            t0 = time.perf_counter()
            generate_delta(h, w, channels, cfg, rep, mask)
            best[i] = min(best[i], time.perf_counter() - t0)
    return [
        ProfileRow(height=h, width=w, pixels=h * w, seconds=best[i])
        for i, (h, w) in enumerate(sizes)
    ]
