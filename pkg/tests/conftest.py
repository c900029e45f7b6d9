import numpy as np
import pytest

from voxedit.network import ArchConfig, init_model
from voxedit.tensorops import LabelMap, SeededRng, Shape3D, Volume
from voxedit.volio import SynthConfig, generate_synthetic_case


@pytest.fixture
def rng():
    return SeededRng(0)


@pytest.fixture
def shape8():
    return Shape3D(8, 8, 8)


@pytest.fixture
def tiny_arch():
    # L=1: 1 image channel + 2 guidance channels -> 2 classes
    return ArchConfig(in_channels=3, num_classes=2, base_width=4, levels=2, dropout_rate=0.1)


@pytest.fixture
def tiny_params(tiny_arch, rng):
    return init_model(tiny_arch, rng.fork("init"))


@pytest.fixture
def small_synth():
    cfg = SynthConfig(
        shape=Shape3D(16, 16, 16),
        num_labels=1,
        noise_std=0.5,
        intensity_offsets=(1.0,),
        min_blob_radius=2,
        max_blob_radius=4,
    )
    return generate_synthetic_case(cfg, SeededRng(0).fork("case", 0))


def random_volume(seed: int, channels: int, shape: Shape3D) -> Volume:
    gen = np.random.default_rng(seed)
    return Volume(shape, gen.normal(size=(channels, *shape)).astype(np.float32))


def random_labels(seed: int, shape: Shape3D, num_labels: int) -> LabelMap:
    gen = np.random.default_rng(seed)
    labels = gen.integers(0, num_labels + 1, size=tuple(shape)).astype(np.uint8)
    return LabelMap(shape, labels, num_labels)
