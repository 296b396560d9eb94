"""Adversarial adaptation baseline."""

import numpy as np
import pytest

from rfloc.dann import DannConfig, _disc_loss_grads, disc_loss, reg_loss, run_dann
from rfloc.errors import ConfigError, UsageError
from rfloc.networks import Discriminator
from rfloc.nn import Rng

from util import max_rel_error


def test_reg_loss_hand_value():
    preds = np.array([[3.0, 4.0], [0.0, 0.0]])
    labels = np.array([[0.0, 0.0], [1.0, 1.0]])
    # ((3 + 4) + (1 + 1)) / 2
    assert reg_loss(preds, labels) == pytest.approx(4.5)


def test_reg_loss_requires_labels():
    with pytest.raises(UsageError):
        reg_loss(np.zeros((2, 2)), None)


def test_disc_loss_at_half_is_two_log_two():
    # A discriminator emitting exactly 0.5 everywhere scores
    # -(log 0.5 + log 0.5) = 2 log 2 regardless of batch size.
    loss, dp_s, dp_t = _disc_loss_grads(np.full((7, 1), 0.5), np.full((7, 1), 0.5))
    assert loss == pytest.approx(2.0 * np.log(2.0), abs=1e-15)
    assert np.allclose(dp_s, -2.0 / 7.0)
    assert np.allclose(dp_t, 2.0 / 7.0)


def test_disc_loss_hand_value():
    p_s = np.array([[0.9], [0.5]])
    p_t = np.array([[0.2], [0.5]])
    expected = -(np.log(0.9) + np.log(0.5) + np.log(0.8) + np.log(0.5)) / 2.0
    loss, _, _ = _disc_loss_grads(p_s, p_t)
    assert loss == pytest.approx(expected, abs=1e-15)


def test_disc_loss_gradient_matches_finite_difference():
    gen = np.random.default_rng(0)
    p_s = gen.uniform(0.05, 0.95, size=(6, 1))
    p_t = gen.uniform(0.05, 0.95, size=(6, 1))
    _, dp_s, dp_t = _disc_loss_grads(p_s, p_t)
    eps = 1e-7
    for arr, grad in ((p_s, dp_s), (p_t, dp_t)):
        fd = np.zeros_like(arr)
        for i in range(len(arr)):
            hi, lo = arr.copy(), arr.copy()
            hi[i] += eps
            lo[i] -= eps
            fd[i] = (
                _disc_loss_grads(hi if arr is p_s else p_s, hi if arr is p_t else p_t)[0]
                - _disc_loss_grads(lo if arr is p_s else p_s, lo if arr is p_t else p_t)[0]
            ) / (2 * eps)
        assert max_rel_error(grad, fd) < 1e-6


def test_disc_loss_clamps_extreme_probabilities():
    loss, dp_s, dp_t = _disc_loss_grads(np.array([[0.0]]), np.array([[1.0]]))
    assert np.isfinite(loss)
    assert dp_s[0, 0] == 0.0 and dp_t[0, 0] == 0.0


def test_disc_loss_rejects_unequal_batches():
    d = Discriminator(init_gen=Rng(0).stream("d"))
    with pytest.raises(ConfigError):
        disc_loss(np.zeros((3, 768)), np.zeros((2, 768)), d)


def test_run_requires_labeled_source(source_model, small_source, small_target):
    with pytest.raises(UsageError):
        run_dann(source_model, small_source.without_labels(), small_target, DannConfig(epochs=1))


def test_feat_loss_is_reg_minus_disc(source_model, small_source, small_target):
    _, diags = run_dann(source_model, small_source, small_target, DannConfig(epochs=2, seed=0))
    for d in diags:
        assert abs(d.feat_loss - (d.reg_loss - d.disc_loss)) <= 1e-10


def test_identical_domains_keep_disc_near_chance(source_model, small_source):
    # When source and target are the same dataset the discriminator cannot
    # separate them; its loss should hover near 2 log 2.
    _, diags = run_dann(source_model, small_source, small_source, DannConfig(epochs=6, seed=0))
    tail = [d.disc_loss for d in diags[-3:]]
    for v in tail:
        assert abs(v - 2.0 * np.log(2.0)) < 0.3


def test_unequal_sizes_cycled(source_model, small_source, small_target):
    short = small_target.subset(np.arange(40))
    model, diags = run_dann(source_model, small_source, short, DannConfig(epochs=1, seed=0))
    assert len(diags) == 1
    assert np.isfinite(diags[0].disc_loss)
    assert model.meta["kind"] == "dann"


def test_deterministic(source_model, small_source, small_target):
    cfg = DannConfig(epochs=2, seed=3)
    m1, d1 = run_dann(source_model, small_source, small_target, cfg)
    m2, d2 = run_dann(source_model, small_source, small_target, cfg)
    for name in m1.net.params.names():
        assert np.array_equal(m1.net.params[name].value, m2.net.params[name].value)
    assert [d.disc_loss for d in d1] == [d.disc_loss for d in d2]


def test_source_model_untouched(source_model, small_source, small_target):
    before = {n: source_model.net.params[n].value.copy() for n in source_model.net.params.names()}
    run_dann(source_model, small_source, small_target, DannConfig(epochs=1, seed=0))
    for name, v in before.items():
        assert np.array_equal(source_model.net.params[name].value, v)


def test_config_validation():
    with pytest.raises(ConfigError):
        DannConfig(epochs=-1).validate()
    with pytest.raises(ConfigError):
        DannConfig(batch_size=0).validate()
    with pytest.raises(ConfigError):
        DannConfig(lr=0.0).validate()
