import numpy as np
import pytest

from patchfield.encoders import EncoderSpec, make_toy_encoder
from patchfield.regions import Region, RegionSet


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def desk_encoder(kind, seed, size=64, **kw):
    return make_toy_encoder(
        EncoderSpec(size, size, 8, 8, 32, 32, kind, seed, **kw)
    )


def desk_regions(bbox=(16, 16, 32, 32), size=64):
    return RegionSet("desk", size, size, [Region(1, bbox, "wall")], selected=1)


def random_image(rng, h, w, lo=0.0, hi=1.0):
    return rng.uniform(lo, hi, size=(h, w, 3))
