import numpy as np
import pytest

from vanishkit import _accel
from vanishkit.features import DESCRIPTOR_DIM, Feature, Keypoint


def make_feature(fid, x, y, size=2.0, angle=0.0, desc=None):
    if desc is None:
        desc = np.ones(DESCRIPTOR_DIM) / np.sqrt(DESCRIPTOR_DIM)
    return Feature(Keypoint(float(x), float(y), float(size), float(angle), 1.0, 0),
                   np.asarray(desc, dtype=float), fid)


def make_features(xy, sizes=None, angles=None, descs=None):
    xy = np.asarray(xy, dtype=float)
    n = len(xy)
    sizes = np.full(n, 2.0) if sizes is None else sizes
    angles = np.zeros(n) if angles is None else angles
    return [make_feature(i, xy[i, 0], xy[i, 1], sizes[i], angles[i],
                         None if descs is None else descs[i]) for i in range(n)]


def random_unit_descriptors(rng, n):
    d = np.abs(rng.standard_normal((n, DESCRIPTOR_DIM)))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    if request.param == "numba" and not _accel.HAVE_NUMBA:
        pytest.skip("numba not installed")
    previous = _accel.backend()
    _accel.set_backend(request.param)
    yield request.param
    _accel.set_backend(previous)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
