import math

import numpy as np
import pytest

from repdiff.diffusion import (
    DiffusionSample,
    ddim_step,
    ddpm_step,
    forward_sample,
    from_model_range,
    posterior_sigma,
    sample,
    sample_batch,
    timestep_sequence,
    to_model_range,
    training_loss,
)
from repdiff.errors import DimensionMismatchError, ValidationError
from repdiff.schedule import make_schedule


def mse_oracle(a, b):
    """Explicit elementwise loop, independent of the vectorized loss."""
    total = 0.0
    count = 0
    for x, y in zip(a.ravel().tolist(), b.ravel().tolist()):
        total += (x - y) ** 2
        count += 1
    return total / count


class TestForwardSample:
    def test_t_zero_identity(self, toy_schedule, rng):
        x0 = DiffusionSample(rng.standard_normal((1, 4, 4)), t=0)
        out = forward_sample(x0, 0, toy_schedule, np.zeros((1, 4, 4)))
        np.testing.assert_array_equal(out.data, x0.data)
        assert out.t == 0

    def test_zero_signal(self, toy_schedule, rng):
        x0 = DiffusionSample(np.zeros((1, 4, 4)), t=0)
        noise = rng.standard_normal((1, 4, 4))
        out = forward_sample(x0, 2, toy_schedule, noise)
        np.testing.assert_allclose(out.data, math.sqrt(1 - 0.72) * noise, rtol=1e-12)

    def test_hand_value_at_final_step(self, toy_schedule):
        # abar_4 = 0.9*0.8*0.7*0.6 = 0.3024, so x_4 = sqrt(0.3024) for x0 = 1
        x0 = DiffusionSample(np.ones((1, 1, 1)), t=0)
        out = forward_sample(x0, 4, toy_schedule, np.zeros((1, 1, 1)))
        assert out.data[0, 0, 0] == pytest.approx(math.sqrt(0.3024), abs=1e-12)
        assert out.t == 4

    def test_rejections(self, toy_schedule):
        x0 = DiffusionSample(np.zeros((1, 4, 4)), t=0)
        with pytest.raises(ValidationError):
            forward_sample(x0, 5, toy_schedule, np.zeros((1, 4, 4)))
        with pytest.raises(DimensionMismatchError):
            forward_sample(x0, 1, toy_schedule, np.zeros((1, 2, 2)))
        noisy = DiffusionSample(np.zeros((1, 4, 4)), t=2)
        with pytest.raises(ValidationError):
            forward_sample(noisy, 3, toy_schedule, np.zeros((1, 4, 4)))

    def test_marginal_moments(self):
        schedule = make_schedule("linear", T=1000, beta_start=1e-4, beta_end=0.02)
        rng = np.random.default_rng(123)
        x0 = rng.standard_normal((1, 4, 4))
        n = 10_000
        for t in (10, 300, 1000):
            ab = schedule.alpha_bar(t)
            draws = rng.standard_normal((n,) + x0.shape)
            xt = math.sqrt(ab) * x0 + math.sqrt(1 - ab) * draws
            mean_se = math.sqrt((1 - ab) / n)
            assert np.all(np.abs(xt.mean(axis=0) - math.sqrt(ab) * x0) <= 4 * mean_se)
            var = xt.var(axis=0, ddof=1)
            var_se = (1 - ab) * math.sqrt(2.0 / (n - 1))
            assert np.all(np.abs(var - (1 - ab)) <= 4 * var_se)

    def test_composition_matches_iterated_noising(self, toy_schedule):
        # one closed-form jump to t=4 vs stepping the chain 4 times
        rng = np.random.default_rng(7)
        x0 = np.full((1, 2, 2), 0.5)
        n = 10_000
        x = np.broadcast_to(x0, (n,) + x0.shape).copy()
        for t in range(1, 5):
            eps = rng.standard_normal(x.shape)
            x = math.sqrt(toy_schedule.alpha(t)) * x + math.sqrt(toy_schedule.beta(t)) * eps
        ab = toy_schedule.alpha_bar(4)
        mean_se = math.sqrt((1 - ab) / n)
        var_se = (1 - ab) * math.sqrt(2.0 / (n - 1))
        assert np.all(np.abs(x.mean(axis=0) - math.sqrt(ab) * x0) <= 4 * mean_se)
        assert np.all(np.abs(x.var(axis=0, ddof=1) - (1 - ab)) <= 4 * var_se)


class TestTrainingLoss:
    def test_identity_and_offset(self):
        a = np.arange(8.0).reshape(2, 4)
        assert training_loss(a, a) == 0.0
        assert training_loss(np.zeros((3, 5)), np.ones((3, 5))) == 1.0

    def test_matches_loop_oracle_and_symmetry(self, rng):
        a = rng.standard_normal((4, 7))
        b = rng.standard_normal((4, 7))
        assert training_loss(a, b) == pytest.approx(mse_oracle(a, b), abs=1e-12)
        assert training_loss(a, b) == pytest.approx(training_loss(b, a), abs=0)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            training_loss(np.zeros(3), np.zeros(4))

    def test_gradient_matches_finite_differences(self, rng):
        eps_true = rng.standard_normal(8)
        eps_pred = rng.standard_normal(8)
        analytic = 2.0 * (eps_pred - eps_true) / eps_pred.size
        h = 1e-5
        for i in range(8):
            up = eps_pred.copy()
            up[i] += h
            dn = eps_pred.copy()
            dn[i] -= h
            num = (training_loss(eps_true, up) - training_loss(eps_true, dn)) / (2 * h)
            assert abs(num - analytic[i]) / max(abs(num), abs(analytic[i])) <= 1e-4


class TestDdpmStep:
    def test_terminates_at_zero(self, toy_schedule):
        x1 = DiffusionSample(np.full((1, 2, 2), 0.3), t=1)
        out = ddpm_step(x1, np.zeros((1, 2, 2)), toy_schedule, np.zeros((1, 2, 2)))
        assert out.t == 0

    def test_sigma_one_is_zero(self, toy_schedule):
        # z is irrelevant at t=1 because sigma_1 = beta_1 * (1 - abar_0) / (1 - abar_1) = 0
        assert posterior_sigma(toy_schedule, 1) == 0.0
        x1 = DiffusionSample(np.full((1, 2, 2), 0.3), t=1)
        a = ddpm_step(x1, np.zeros((1, 2, 2)), toy_schedule, np.zeros((1, 2, 2)))
        b = ddpm_step(x1, np.zeros((1, 2, 2)), toy_schedule, np.full((1, 2, 2), 9.0))
        np.testing.assert_array_equal(a.data, b.data)

    def test_zero_eps_degenerate_formula(self, toy_schedule):
        x = DiffusionSample(np.full((1, 2, 2), 0.7), t=3)
        out = ddpm_step(x, np.zeros((1, 2, 2)), toy_schedule, np.zeros((1, 2, 2)))
        np.testing.assert_allclose(out.data, x.data / math.sqrt(0.7), rtol=1e-12)

    def test_hand_evaluated_posterior_mean(self, toy_schedule):
        # substitute beta_4 = 0.4, abar_4 = 0.3024, alpha_4 = 0.6 by hand
        x = DiffusionSample(np.full((1, 1, 1), 0.5), t=4)
        out = ddpm_step(x, np.full((1, 1, 1), 0.1), toy_schedule, np.zeros((1, 1, 1)))
        expected = (0.5 - 0.4 / math.sqrt(1 - 0.3024) * 0.1) / math.sqrt(0.6)
        assert out.data[0, 0, 0] == pytest.approx(expected, abs=1e-12)
        assert out.t == 3

    def test_posterior_sigma_hand_value(self, toy_schedule):
        # sigma_4^2 = beta_4 (1 - abar_3) / (1 - abar_4) with abar_3 = 0.504
        expected = math.sqrt(0.4 * (1 - 0.504) / (1 - 0.3024))
        assert posterior_sigma(toy_schedule, 4) == pytest.approx(expected, abs=1e-12)

    def test_sigma_nonnegative_everywhere(self):
        for kind, kwargs in (("linear", dict(beta_start=1e-4, beta_end=0.02)), ("cosine", {})):
            s = make_schedule(kind, T=200, **kwargs)
            for t in range(1, 201):
                assert posterior_sigma(s, t) >= 0.0

    def test_out_of_range(self, toy_schedule):
        x = DiffusionSample(np.zeros((1, 2, 2)), t=0)
        with pytest.raises(ValidationError):
            ddpm_step(x, np.zeros((1, 2, 2)), toy_schedule, np.zeros((1, 2, 2)))


class TestDdimStep:
    def test_inverts_single_step_forward(self):
        s = make_schedule("linear", T=1, beta_start=0.1, beta_end=0.1)
        rng = np.random.default_rng(5)
        x0 = DiffusionSample(rng.standard_normal((1, 4, 4)).astype(np.float32), t=0)
        eps = rng.standard_normal((1, 4, 4)).astype(np.float32)
        x1 = forward_sample(x0, 1, s, eps)
        back = ddim_step(x1, eps, s, 0)
        assert back.t == 0
        assert np.abs(back.data - x0.data).max() <= 1e-6

    def test_zero_eps_degenerate_formula(self, toy_schedule):
        x = DiffusionSample(np.full((1, 2, 2), 0.4), t=4)
        out = ddim_step(x, np.zeros((1, 2, 2)), toy_schedule, 0)
        np.testing.assert_allclose(out.data, x.data / math.sqrt(0.3024), rtol=1e-12)

    def test_deterministic(self, toy_schedule, rng):
        x = DiffusionSample(rng.standard_normal((1, 4, 4)), t=3)
        eps = rng.standard_normal((1, 4, 4))
        a = ddim_step(x, eps, toy_schedule, 1)
        b = ddim_step(x, eps, toy_schedule, 1)
        np.testing.assert_array_equal(a.data, b.data)

    def test_order_rejection(self, toy_schedule):
        x = DiffusionSample(np.zeros((1, 2, 2)), t=2)
        with pytest.raises(ValidationError):
            ddim_step(x, np.zeros((1, 2, 2)), toy_schedule, 2)


class TestTimestepSequence:
    def test_endpoints_and_monotonicity(self):
        for T, steps in ((1000, 50), (4, 4), (10, 3), (7, 1)):
            ts = timestep_sequence(T, steps)
            assert ts[0] == T and ts[-1] == 0 and len(ts) == steps + 1
            assert all(a > b for a, b in zip(ts, ts[1:]))

    def test_rejects_bad_step_counts(self):
        with pytest.raises(ValidationError):
            timestep_sequence(10, 0)
        with pytest.raises(ValidationError):
            timestep_sequence(10, 11)


class TestSampling:
    def test_ddim_deterministic(self, tiny_denoiser, toy_schedule):
        cond = np.arange(4.0)
        a = sample(tiny_denoiser, cond, toy_schedule, sampler="ddim", steps=4, seed=3)
        b = sample(tiny_denoiser, cond, toy_schedule, sampler="ddim", steps=4, seed=3)
        np.testing.assert_array_equal(a.data, b.data)
        assert a.t == 0

    def test_conditions_change_output(self, tiny_denoiser, toy_schedule):
        a = sample(tiny_denoiser, np.zeros(4), toy_schedule, steps=4, seed=3)
        b = sample(tiny_denoiser, np.ones(4), toy_schedule, steps=4, seed=3)
        assert np.linalg.norm(a.data - b.data) > 0

    def test_untrained_model_finite(self, tiny_denoiser, toy_schedule):
        for sampler in ("ddpm", "ddim"):
            out = sample(tiny_denoiser, np.zeros(4), toy_schedule, sampler=sampler, steps=4, seed=0)
            assert np.isfinite(out.data).all()

    def test_rejections(self, tiny_denoiser, toy_schedule):
        with pytest.raises(ValidationError):
            sample(tiny_denoiser, np.zeros(4), toy_schedule, sampler="euler", steps=4)
        with pytest.raises(ValidationError):
            sample(tiny_denoiser, np.zeros(4), toy_schedule, steps=9)
        with pytest.raises(DimensionMismatchError):
            sample(tiny_denoiser, np.zeros(5), toy_schedule, steps=4)

    def test_full_ddpm_chain_matches_single_steps(self, tiny_denoiser, toy_schedule):
        # sample_batch draws the initial state first, then one z per step;
        # replaying those draws through ddpm_step must reproduce the output
        cond = np.arange(4.0, dtype=np.float32)[None, :]
        batch = sample_batch(tiny_denoiser, cond, toy_schedule, sampler="ddpm", steps=4, seed=9)
        rng = np.random.default_rng(9)
        shape = (1, 8, 8, 1)
        x = rng.standard_normal(shape).astype(np.float32)
        for t in (4, 3, 2, 1):
            eps = tiny_denoiser.predict_batch(x, np.array([t]), cond)
            z = np.zeros(shape, np.float32) if t == 1 else rng.standard_normal(shape).astype(np.float32)
            stepped = ddpm_step(DiffusionSample(x[0], t), eps[0], toy_schedule, z[0])
            x = stepped.data[None, ...]
        np.testing.assert_allclose(batch[0], np.moveaxis(x[0], -1, 0), atol=1e-5)


class TestRangeConversion:
    def test_round_trip(self, rng):
        img = rng.random((3, 4, 4)).astype(np.float32)
        np.testing.assert_allclose(from_model_range(to_model_range(img)), img, atol=1e-6)

    def test_clipping(self):
        assert from_model_range(np.array([-3.0])).item() == 0.0
        assert from_model_range(np.array([3.0])).item() == 1.0
