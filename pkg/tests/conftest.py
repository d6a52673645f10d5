import numpy as np
import pytest

from actgrad.data import Dataset


def learnable(n, seed=0, hw=32, noise=0.15):
    """Class-coded images: each class has its own mean colour and a bright quadrant."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 10
    rng.shuffle(labels)
    palette = np.random.default_rng(1234).uniform(0.2, 0.8, size=(10, 3))
    images = palette[labels][:, :, None, None] + noise * rng.standard_normal((n, 3, hw, hw))
    half = hw // 2
    for k in range(n):
        q = labels[k] % 4
        y, x = divmod(q, 2)
        images[k, :, y * half:(y + 1) * half, x * half:(x + 1) * half] += 0.3 if labels[k] < 5 else -0.3
    return Dataset(np.clip(images, 0.0, 1.0), labels)


@pytest.fixture(scope="session")
def small_sets():
    return learnable(400, seed=1), learnable(200, seed=2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
