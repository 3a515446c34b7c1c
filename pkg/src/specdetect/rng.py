"""Counter-based random streams for reproducible, order-independent sampling.

Every stochastic draw in the package comes from a Philox generator whose
key/counter encode *where* the draw is used, never *when*.  Two runs that
touch the same (seed, domain, image) coordinates therefore produce identical
bits regardless of batch size, worker count, or evaluation order.

Key layout:    key     = (seed, domain)
Counter layout: counter = (0, channel, patch_index, image_index)

Domains separate independent uses of the same user seed so that, for
example, perturbation noise and corruption noise never share a stream.
"""

from __future__ import annotations

import numpy as np

DOMAIN_PERTURB = 0
DOMAIN_CORRUPT = 1
DOMAIN_FIXTURE = 2

_MASK64 = (1 << 64) - 1


def philox_stream(
    seed: int,
    *,
    domain: int = DOMAIN_PERTURB,
    image_index: int = 0,
    patch_index: int = 0,
    channel: int = 0,
) -> np.random.Generator:
    """Return a dedicated Generator for the given stream coordinates."""
    key = np.array([seed & _MASK64, domain & _MASK64], dtype=np.uint64)
    counter = np.array(
        [0, channel & _MASK64, patch_index & _MASK64, image_index & _MASK64],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key, counter=counter))
