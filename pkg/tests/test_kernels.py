"""Lane-parity tests: every available kernel backend computes the same thing."""

import numpy as np
import pytest

from yieldnet import kernels

LANES = kernels.available_backends()
SHAPES = [
    ((1, 1, 1), 1, 1),
    ((2, 3, 10), 4, 3),
    ((25, 6, 52), 8, 3),
    ((25, 20, 2), 24, 3),
    ((3, 2, 7), 2, 5),
    ((4, 5, 64), 8, 3),
]


def _rand(shape, co, k, seed):
    rng = np.random.default_rng(seed)
    x = np.ascontiguousarray(rng.normal(size=shape))
    w = np.ascontiguousarray(rng.normal(size=(co, shape[1], k)))
    b = rng.normal(size=co)
    return x, w, b


@pytest.mark.parametrize("shape,co,k", SHAPES)
def test_conv_forward_parity(shape, co, k):
    x, w, b = _rand(shape, co, k, 1)
    results = [kernels.get_backend(lane).conv1d_forward(x, w, b) for lane in LANES]
    for other in results[1:]:
        np.testing.assert_allclose(results[0], other, atol=1e-12)


@pytest.mark.parametrize("shape,co,k", SHAPES)
def test_conv_backward_parity(shape, co, k):
    x, w, b = _rand(shape, co, k, 2)
    gy = np.ascontiguousarray(np.random.default_rng(3).normal(size=(shape[0], co, shape[2])))
    results = [kernels.get_backend(lane).conv1d_backward(x, w, gy) for lane in LANES]
    for other in results[1:]:
        for a, b2 in zip(results[0], other):
            np.testing.assert_allclose(a, b2, atol=1e-12)


@pytest.mark.parametrize("length", [2, 3, 8, 13, 52])
def test_pool_parity_and_truncation(length):
    rng = np.random.default_rng(length)
    x = np.ascontiguousarray(rng.normal(size=(3, 4, length)))
    outs = [kernels.get_backend(lane).avgpool2_forward(x) for lane in LANES]
    assert outs[0].shape == (3, 4, length // 2)
    for other in outs[1:]:
        np.testing.assert_allclose(outs[0], other, atol=1e-15)
    gy = np.ascontiguousarray(rng.normal(size=outs[0].shape))
    backs = [kernels.get_backend(lane).avgpool2_backward(gy, length) for lane in LANES]
    for other in backs[1:]:
        np.testing.assert_allclose(backs[0], other, atol=1e-15)
    if length % 2 == 1:
        assert np.all(backs[0][:, :, -1] == 0.0)


def test_forced_lane_is_honored(monkeypatch):
    assert kernels.backend_name() in LANES
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
