import numpy as np
import pytest

from finegrain.kb import parse_kb
from finegrain.scene import Box, Detection, Scene
from finegrain.synthgen import DEFAULT_KB, GenConfig, empty_dataset, gen_dataset


def onehot(k, n=5):
    p = [0.0] * n
    p[k] = 1.0
    return tuple(p)


def det(cx, cy, w, h, coarse, score=0.9, fine=None, rels=None):
    return Detection(Box(cx, cy, w, h), score, onehot(coarse), fine, rels)


@pytest.fixture(scope="session")
def header():
    return empty_dataset()


@pytest.fixture(scope="session")
def kb(header):
    return parse_kb(DEFAULT_KB, header)


@pytest.fixture(scope="session")
def synth200():
    return gen_dataset(GenConfig(num_scenes=200, seed=42))


@pytest.fixture
def names(header):
    """Name -> index lookups for coarse classes, fine classes and relations."""
    class N:
        coarse = {n: k for k, n in enumerate(header.coarse_classes)}
        fine = {n: k for k, n in enumerate(header.fine_classes)}
        rel = {n: k for k, n in enumerate(header.relations)}
    return N


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_box(rng, extent=100.0):
    w, h = rng.uniform(1, extent / 2, size=2)
    cx, cy = rng.uniform(0, extent, size=2)
    return Box(float(cx), float(cy), float(w), float(h))


def lamp_table_scene():
    """A lamp standing on a table in a 100x100 image."""
    return Scene("lt", 100.0, 100.0, (det(50, 20, 10, 10, 3), det(50, 60, 40, 30, 2)))
