import numpy as np
import pytest

from lmk.cascade import CascadeModel
from lmk.ensemble import BoostedEnsemble
from lmk.imaging import GrayImage, Region
from lmk.tree import RegressionTree, SampleSet

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_image(rng, width=32, height=32):
    return GrayImage(rng.integers(0, 256, size=(height, width), dtype=np.uint8))


def random_sample_set(rng, n, n_images=5, width=32, height=32):
    images = [random_image(rng, width, height) for _ in range(n_images)]
    index = rng.integers(0, n_images, size=n)
    regions = np.column_stack([rng.uniform(8, 24, n), rng.uniform(8, 24, n), rng.uniform(8, 30, n)])
    targets = rng.normal(0, 0.5, size=(n, 2))
    return SampleSet(images, index, regions, targets)


def random_tree(rng, depth):
    n = 1 << depth
    return RegressionTree(depth, rng.integers(-127, 128, size=(n - 1, 4)),
                          rng.normal(0, 0.3, size=(n, 2)).astype(np.float32))


def random_model(rng, n_stages=3, n_trees=4, depth=3, label="pt"):
    stages = [BoostedEnsemble(rng.normal(0, 0.2, 2), [random_tree(rng, depth) for _ in range(n_trees)],
                              0.5, depth) for _ in range(n_stages)]
    return CascadeModel(stages, 0.7, label)


def constant_model(outputs, scale_decay=0.7, label="nose"):
    stages = [BoostedEnsemble(np.asarray(o, np.float32), [], 0.5, 1) for o in outputs]
    return CascadeModel(stages, scale_decay, label)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def box():
    return Region(32.0, 32.0, 48.0)
