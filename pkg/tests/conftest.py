import numpy as np
import pytest

from csibench.data import TENSOR_SHAPE, CsiSample, Dataset, PostureLabel


def random_tensor(rng: np.random.Generator) -> np.ndarray:
    amp = rng.uniform(0.0, 4.0, TENSOR_SHAPE[:-1])
    phase = rng.uniform(-np.pi, np.pi * 0.999, TENSOR_SHAPE[:-1])
    return np.stack([amp, phase], axis=-1)


def random_sample(rng: np.random.Generator, label=None) -> CsiSample:
    if label is None:
        label = PostureLabel(int(rng.integers(0, 3)))
    return CsiSample(random_tensor(rng), label)


def random_dataset(rng: np.random.Generator, n: int, env: str = "lab") -> Dataset:
    return Dataset([random_sample(rng) for _ in range(n)], env)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
