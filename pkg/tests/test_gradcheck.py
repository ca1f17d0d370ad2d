"""Finite-difference verification of every differentiable primitive.

Random points are seeded; ReLU inputs are kept away from the kink by
shifting and by rejecting points with tiny pre-activations.
"""

import numpy as np
import pytest

from yieldnet import autodiff as ad
from yieldnet.errors import ContractViolation
from yieldnet.model import CnnRnnConfig, build_cnn_rnn, cnn_rnn_apply

TOL = 1e-4


def _lstm_params_point(rng, d, h):
    point = []
    for _ in range(4):
        point.append(rng.normal(size=(h, d + h)) * 0.5)
        point.append(rng.normal(size=h) * 0.5)
    return point


def test_affine_tight():
    rng = np.random.default_rng(0)
    err = ad.grad_check(
        lambda x, w, b: ad.affine(x, w, b),
        [rng.normal(size=6), rng.normal(size=(4, 6)), rng.normal(size=4)],
    )
    assert err < 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_conv_pool_relu_stack(seed):
    rng = np.random.default_rng(100 + seed)
    x = rng.normal(size=(3, 12))
    x += np.sign(x) * 1e-3  # nudge away from ReLU kinks

    def f(xa, w, b):
        return ad.relu(ad.avgpool1d(ad.conv1d(xa, w, b)))

    err = ad.grad_check(f, [x, rng.normal(size=(4, 3, 3)), rng.normal(size=4)])
    assert err < TOL


@pytest.mark.parametrize("seed", range(5))
def test_lstm_cell_step(seed):
    rng = np.random.default_rng(200 + seed)
    d, h = 3, 4
    point = [rng.normal(size=d), rng.normal(size=h), rng.normal(size=h)]
    point += _lstm_params_point(rng, d, h)

    def f(x, h0, c0, wi, bi, wf, bf, wg, bg, wo, bo):
        params = ad.LstmParams(wi, bi, wf, bf, wg, bg, wo, bo)
        hh, cc = ad.lstm_cell_step(x, h0, c0, params)
        return ad.add(hh, cc)

    assert ad.grad_check(f, point) < TOL


@pytest.mark.parametrize("seed", range(3))
def test_elementwise_ops(seed):
    rng = np.random.default_rng(300 + seed)
    a = rng.normal(size=5)
    b = rng.normal(size=5)
    assert ad.grad_check(lambda x: ad.sigmoid(x), [a]) < 1e-6
    assert ad.grad_check(lambda x: ad.tanh(x), [a]) < 1e-6
    assert ad.grad_check(lambda x, y: ad.mul(ad.sub(x, y), ad.add(x, y)), [a, b]) < 1e-6
    assert ad.grad_check(lambda x: ad.mean(ad.mul(x, x)), [a]) < 1e-6


def test_concat_and_reshape():
    rng = np.random.default_rng(17)
    a = rng.normal(size=4)
    b = rng.normal(size=3)

    def f(xa, xb):
        joined = ad.concat([xa, xb])
        return ad.mul(joined, joined)

    assert ad.grad_check(f, [a, b]) < 1e-6
    assert ad.grad_check(
        lambda x: ad.reshape(ad.mul(x, x), (6,)), [rng.normal(size=(2, 3))]
    ) < 1e-6


def test_batch_norm_training_mode():
    rng = np.random.default_rng(23)
    x = rng.normal(size=(6, 3))
    gamma = rng.normal(size=3) + 1.5
    beta = rng.normal(size=3)

    def f(xa, g, bt):
        rm = np.zeros(3)
        rv = np.ones(3)
        return ad.batch_norm(xa, g, bt, rm, rv, training=True)

    assert ad.grad_check(f, [x, gamma, beta]) < TOL


def test_tiny_cnn_rnn_end_to_end():
    cfg = CnnRnnConfig(
        k=1, lstm_hidden=3, fc_w_out=4, fc_s_out=3, management_dim=2,
        weather_vars=2, weeks=8, soil_vars=2, soil_depths=5, surface_dim=2,
        wcnn_channels=(3, 4), wcnn_pool=(True, True),
        scnn_channels=(3,), scnn_pool=(True,),
    )
    model = build_cnn_rnn(cfg, 91)
    rng = np.random.default_rng(91)
    names = list(model.params)

    def f(*leaves):
        n_params = len(names)
        bound = dict(zip(names, leaves[:n_params]))
        tape = leaves[0].tape
        steps = []
        per_step = 5
        rest = leaves[n_params:]
        for s in range(cfg.k + 1):
            w, so, su, av, mg = rest[s * per_step : (s + 1) * per_step]
            steps.append({"weather": w, "soil": so, "surface": su, "avg": av, "mgmt": mg})
        res = cnn_rnn_apply(cfg, bound, tape, steps)
        return res.preds[-1]

    point = [model.params[n] for n in names]
    for _ in range(cfg.k + 1):
        point += [
            rng.normal(size=(1, cfg.weather_vars, cfg.weeks)),
            rng.normal(size=(1, cfg.soil_vars, cfg.soil_depths)),
            rng.normal(size=(1, cfg.surface_dim)),
            rng.normal(size=(1, 1)),
            rng.normal(size=(1, cfg.management_dim)),
        ]
    err = ad.grad_check(f, point)
    assert err < TOL


def test_non_finite_point_rejected():
    with pytest.raises(ContractViolation):
        ad.grad_check(lambda x: ad.relu(x), [np.array([np.nan])])
