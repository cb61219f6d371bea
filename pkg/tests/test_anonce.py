import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from lemo.anonce import (AdamHyper, LossConfig, adam_step, anonce_loss,
                         loss_given_assignment, margin_dist)
from lemo.errors import ConfigError, NumericalError, ShapeError
from lemo.memory import PrototypeBank, pos_neg_masks


def _naive_loss(z, protos, pos_mask, cfg):
    """Per-position reference in plain Python: no shifting, no vectorization."""
    d, h, w = z.shape
    total = 0.0
    for i in range(h):
        for j in range(w):
            v = z[:, i, j].astype(np.float64)
            num = den = 0.0
            for k in range(protos.shape[0]):
                dist = math.sqrt(((v - protos[k].astype(np.float64)) ** 2).sum())
                term = math.exp(-max(dist - cfg.r, 0.0) / cfg.tau)
                den += term
                if pos_mask[i * w + j, k]:
                    num += term
            total += -math.log(num / den)
    return total / (h * w)


def _random_instance(rng, d=5, h=3, w=3, k=4):
    z = rng.standard_normal((d, h, w)).astype(np.float32)
    bank = PrototypeBank(protos=rng.standard_normal((k, d)).astype(np.float32))
    return z, bank


class TestMarginDist:
    def test_zero_margin_is_identity(self):
        assert margin_dist(1.5, 0.0) == 1.5

    def test_clips_below_margin(self):
        assert margin_dist(0.3, 0.5) == 0.0

    def test_shifts_above_margin(self):
        assert margin_dist(2.0, 0.5) == 1.5

    def test_negative_distance_rejected(self):
        with pytest.raises(ConfigError):
            margin_dist(-0.1, 0.0)


class TestLossValue:
    def test_matches_naive_reference(self, rng):
        cfg = LossConfig(tau=0.1, r=1e-5, n_pos=2)
        for _ in range(5):
            z, bank = _random_instance(rng)
            loss, _, _ = anonce_loss(z, bank, cfg)
            flat = z.reshape(5, 9).T.astype(np.float64)
            dist = np.sqrt(((flat[:, None, :]
                             - bank.protos.astype(np.float64)[None]) ** 2).sum(2))
            mask = pos_neg_masks(dist, cfg.n_pos)
            want = _naive_loss(z, bank.protos, mask, cfg)
            assert abs(loss - want) <= 1e-9 * max(1.0, abs(want))
            assert abs(loss_given_assignment(z, bank.protos, mask, cfg) - want) <= 1e-9

    def test_loss_bounds(self, rng):
        cfg = LossConfig(tau=0.1, n_pos=2)
        for _ in range(10):
            z, bank = _random_instance(rng, k=6)
            loss, _, _ = anonce_loss(z, bank, cfg)
            assert 0.0 <= loss <= math.log(6) + 1e-12

    def test_all_distances_clipped_gives_uniform_softmax(self, rng):
        # a margin larger than every distance zeroes all logits, so the loss
        # is exactly log(K / n_pos) and the gradients vanish
        z, bank = _random_instance(rng, k=5)
        cfg = LossConfig(tau=0.5, r=1e6, n_pos=2)
        loss, gz, gp = anonce_loss(z, bank, cfg)
        assert abs(loss - math.log(5 / 2)) <= 1e-12
        assert not gz.any()
        assert not gp.any()

    def test_feature_on_prototype_stays_finite(self, rng):
        z, bank = _random_instance(rng)
        z[:, 0, 0] = bank.protos[2]
        loss, gz, gp = anonce_loss(z, bank, LossConfig())
        assert np.isfinite(loss)
        assert np.isfinite(gz).all() and np.isfinite(gp).all()

    def test_non_finite_input_rejected(self, rng):
        z, bank = _random_instance(rng)
        z[0, 0, 0] = np.nan
        with pytest.raises(NumericalError):
            anonce_loss(z, bank, LossConfig())

    def test_dim_mismatch_rejected(self, rng):
        z, _ = _random_instance(rng, d=5)
        _, bank = _random_instance(rng, d=6)
        with pytest.raises(ShapeError):
            anonce_loss(z, bank, LossConfig())

    @given(st.integers(0, 10_000))
    def test_prototype_permutation_invariance(self, seed):
        rng = np.random.Generator(np.random.PCG64(seed))
        z, bank = _random_instance(rng)
        cfg = LossConfig(n_pos=2)
        loss, gz, gp = anonce_loss(z, bank, cfg)
        perm = rng.permutation(4)
        bank2 = PrototypeBank(protos=bank.protos[perm])
        loss2, gz2, gp2 = anonce_loss(z, bank2, cfg)
        assert abs(loss - loss2) <= 1e-6 * max(1.0, abs(loss))
        np.testing.assert_allclose(gz, gz2, atol=1e-7)
        np.testing.assert_allclose(gp[perm], gp2, atol=1e-7)


class TestGradients:
    def test_match_central_differences(self, rng):
        cfg = LossConfig(tau=0.1, r=1e-5, n_pos=2)
        eps = 1e-3
        for _ in range(3):
            z, bank = _random_instance(rng, d=6, h=3, w=2, k=5)
            loss, gz, gp = anonce_loss(z, bank, cfg)
            flat = z.reshape(6, 6).T.astype(np.float64)
            dist = np.sqrt(((flat[:, None, :]
                             - bank.protos.astype(np.float64)[None]) ** 2).sum(2))
            mask = pos_neg_masks(dist, cfg.n_pos)

            fd_z = np.zeros_like(gz, dtype=np.float64)
            for idx in np.ndindex(z.shape):
                zp, zm = z.astype(np.float64), z.astype(np.float64)
                zp[idx] += eps
                zm[idx] -= eps
                fd_z[idx] = (loss_given_assignment(zp, bank.protos, mask, cfg)
                             - loss_given_assignment(zm, bank.protos, mask, cfg)) / (2 * eps)
            rel = np.linalg.norm(gz - fd_z) / max(np.linalg.norm(fd_z), 1e-12)
            assert rel <= 1e-4

            fd_p = np.zeros_like(gp, dtype=np.float64)
            p64 = bank.protos.astype(np.float64)
            for idx in np.ndindex(p64.shape):
                pp, pm = p64.copy(), p64.copy()
                pp[idx] += eps
                pm[idx] -= eps
                fd_p[idx] = (loss_given_assignment(z, pp, mask, cfg)
                             - loss_given_assignment(z, pm, mask, cfg)) / (2 * eps)
            rel = np.linalg.norm(gp - fd_p) / max(np.linalg.norm(fd_p), 1e-12)
            assert rel <= 1e-4


class TestAdamStep:
    def _run_both(self, rng, weight_decay, steps=5):
        shape = (4, 6)
        param = rng.standard_normal(shape)
        mine = param.copy()
        m = np.zeros(shape)
        v = np.zeros(shape)
        hyper = AdamHyper(lr=0.01, weight_decay=weight_decay)
        t_param = torch.nn.Parameter(torch.from_numpy(param.copy()))
        opt = torch.optim.AdamW([t_param], lr=hyper.lr, betas=(hyper.beta1, hyper.beta2),
                                eps=hyper.eps, weight_decay=weight_decay)
        step = 0
        for _ in range(steps):
            grad = rng.standard_normal(shape)
            step = adam_step(mine, grad, m, v, step, hyper)
            t_param.grad = torch.from_numpy(grad.copy())
            opt.step()
        return mine, t_param.detach().numpy(), step

    def test_matches_torch_adam_without_decay(self, rng):
        mine, ref, step = self._run_both(rng, weight_decay=0.0)
        np.testing.assert_allclose(mine, ref, rtol=1e-10, atol=1e-12)
        assert step == 5

    def test_matches_torch_adamw_with_decoupled_decay(self, rng):
        mine, ref, _ = self._run_both(rng, weight_decay=5e-4)
        np.testing.assert_allclose(mine, ref, rtol=1e-10, atol=1e-12)

    def test_zero_lr_freezes_params_but_not_moments(self, rng):
        param = rng.standard_normal((3, 3)).astype(np.float32)
        before = param.copy()
        m = np.zeros_like(param)
        v = np.zeros_like(param)
        step = adam_step(param, np.ones_like(param), m, v, 0,
                         AdamHyper(lr=0.0, weight_decay=5e-4))
        assert np.array_equal(param, before)
        assert m.any() and v.any()
        assert step == 1

    def test_shape_mismatch_rejected(self, rng):
        param = rng.standard_normal((3, 3))
        with pytest.raises(ShapeError):
            adam_step(param, np.zeros((2, 2)), np.zeros_like(param),
                      np.zeros_like(param), 0, AdamHyper())

    def test_updates_run_in_place(self, rng):
        param = rng.standard_normal((2, 2))
        ref = param
        adam_step(param, np.ones_like(param), np.zeros_like(param),
                  np.zeros_like(param), 0, AdamHyper())
        assert ref is param


class TestConfigs:
    @pytest.mark.parametrize("kwargs", [
        {"tau": 0.0}, {"tau": -1.0}, {"r": -1e-9}, {"n_pos": 0}])
    def test_loss_config_validation(self, kwargs):
        with pytest.raises(ConfigError):
            LossConfig(**kwargs)

    @pytest.mark.parametrize("kwargs", [
        {"lr": -1e-3}, {"beta1": 0.0}, {"beta1": 1.0}, {"beta2": 1.5}])
    def test_adam_hyper_validation(self, kwargs):
        with pytest.raises(ConfigError):
            AdamHyper(**kwargs)

    def test_zero_lr_is_allowed(self):
        assert AdamHyper(lr=0.0).lr == 0.0
