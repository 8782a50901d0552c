import numpy as np
import pytest
from hypothesis import strategies as st

from anchorpose import kernels, so3


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=sorted(kernels.BACKENDS))
def backend(request):
    return request.param


finite = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)


@st.composite
def unit_quats(draw):
    v = np.array(draw(st.lists(finite, min_size=4, max_size=4)))
    if np.linalg.norm(v) < 1e-3:
        v = np.array([1.0, 0.0, 0.0, 0.0])
    return so3.normalize(v)


@st.composite
def axis_angles(draw, max_angle=np.pi - 1e-6):
    v = np.array(draw(st.lists(finite, min_size=3, max_size=3)))
    n = np.linalg.norm(v)
    if n < 1e-3:
        return np.zeros(3)
    return v / n * draw(st.floats(0.0, max_angle))


def make_scene(rng, k=1000, outlier_fraction=0.0, noise_deg=0.0):
    """Points in a 1 m cube around a random center, voting for it; returns (field, center)."""
    from anchorpose import bench, voting

    center = rng.uniform(-0.5, 0.5, 3)
    pts = center + rng.uniform(-0.5, 0.5, (k, 3))
    field, _ = bench.corrupt_field(voting.make_field(pts, center), outlier_fraction, noise_deg, rng)
    return field, center
