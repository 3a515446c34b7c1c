import json
from pathlib import Path

import numpy as np
import pytest

from specdetect.fixtures import FixtureSpec, build_fixture


@pytest.fixture(scope="session")
def small_fixture(tmp_path_factory) -> Path:
    """12 real + 12 fake at 56 px; fast structural tests."""
    d = tmp_path_factory.mktemp("fixture_small")
    return build_fixture(d, FixtureSpec(n_real=12, n_fake=12, size=56, seed=1))


@pytest.fixture(scope="session")
def medium_fixture(tmp_path_factory) -> Path:
    """24 real + 24 fake at 112 px; robustness and bench tests."""
    d = tmp_path_factory.mktemp("fixture_medium")
    return build_fixture(d, FixtureSpec(n_real=24, n_fake=24, size=112, seed=2))


@pytest.fixture(scope="session")
def full_fixture(tmp_path_factory) -> Path:
    """200 real + 200 fake at 224 px; acceptance-scale dataset."""
    d = tmp_path_factory.mktemp("fixture_full")
    return build_fixture(d, FixtureSpec(n_real=200, n_fake=200, size=224, seed=0))


@pytest.fixture(scope="session")
def toy_bundle(tmp_path_factory) -> Path:
    """A tiny serialized ViT bundle: 4 blocks, dim 16, input 56."""
    torch = pytest.importorskip("torch")

    size, patch, dim, layers = 56, 14, 16, 4
    tokens = (size // patch) ** 2

    class ToyViT(torch.nn.Module):
        def __init__(self):
            super().__init__()
            g = torch.Generator().manual_seed(99)
            self.proj = torch.nn.Parameter(torch.randn(patch * patch * 3, dim, generator=g) * 0.05)
            self.cls = torch.nn.Parameter(torch.randn(1, 1, dim, generator=g))
            self.blocks = torch.nn.ParameterList(
                [torch.nn.Parameter(torch.randn(dim, dim, generator=g) * 0.2) for _ in range(layers)]
            )

        def forward(self, pixel_values):
            b = pixel_values.shape[0]
            grid = pixel_values.unfold(2, patch, patch).unfold(3, patch, patch)
            flat = grid.permute(0, 2, 3, 1, 4, 5).reshape(b, tokens, patch * patch * 3)
            h = torch.cat([self.cls.expand(b, 1, dim), flat @ self.proj], dim=1)
            states = [h]
            for w in self.blocks:
                h = torch.tanh(h @ w)
                states.append(h)
            return torch.stack(states, dim=0)

    model = ToyViT().eval()
    example = torch.zeros(1, 3, size, size)
    traced = torch.jit.trace(model, example)

    bundle = tmp_path_factory.mktemp("toy_bundle")
    torch.jit.save(traced, str(bundle / "model.pt"))
    meta = {
        "format": "torchscript",
        "weights_file": "model.pt",
        "input_size": size,
        "normalization_mean": [0.5, 0.5, 0.5],
        "normalization_std": [0.25, 0.25, 0.25],
        "layer_count": layers,
        "embed_dim": dim,
        "cls_token_index": 0,
        "hidden_state_norm": "raw",
    }
    (bundle / "metadata.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    return bundle


@pytest.fixture()
def rng():
    return np.random.default_rng(4242)
