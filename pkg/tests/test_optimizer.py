"""
Tests for the Adam update
"""
import numpy as np
import pytest

from neural.optimizer import AdamConfig, AdamOptimizer, AdamState, optimizer_step
from utils.error_handler import ShapeMismatch


@pytest.fixture
def params(rng):
    return {"w": rng.normal(size=(3, 2)), "b": rng.normal(size=3)}


class TestOptimizerStep:
    """Functional form"""

    def test_zero_gradients_leave_parameters(self, params):
        grads = {k: np.zeros_like(v) for k, v in params.items()}
        new, state = optimizer_step(params, grads, AdamState.zeros_like(params), AdamConfig())
        for k in params:
            assert np.array_equal(new[k], params[k])
        assert state.step == 1

    def test_first_step_moves_by_lr_against_gradient_sign(self, params, rng):
        grads = {k: rng.choice([-1.0, 1.0], size=v.shape) * rng.uniform(0.5, 2.0, size=v.shape)
                 for k, v in params.items()}
        config = AdamConfig(lr=1e-3)
        new, _ = optimizer_step(params, grads, AdamState.zeros_like(params), config)
        for k in params:
            np.testing.assert_allclose(new[k] - params[k], -1e-3 * np.sign(grads[k]), rtol=1e-6)

    def test_inputs_not_mutated(self, params, rng):
        before = {k: v.copy() for k, v in params.items()}
        grads = {k: rng.normal(size=v.shape) for k, v in params.items()}
        state = AdamState.zeros_like(params)
        optimizer_step(params, grads, state, AdamConfig())
        assert state.step == 0
        assert all(np.all(m == 0) for m in state.m.values())
        for k in params:
            assert np.array_equal(params[k], before[k])

    def test_deterministic(self, params, rng):
        grads = {k: rng.normal(size=v.shape) for k, v in params.items()}
        state = AdamState.zeros_like(params)
        a, _ = optimizer_step(params, grads, state, AdamConfig())
        b, _ = optimizer_step(params, grads, state, AdamConfig())
        for k in params:
            assert np.array_equal(a[k], b[k])

    def test_shape_mismatch(self, params):
        grads = {"w": np.zeros((2, 3)), "b": np.zeros(3)}
        with pytest.raises(ShapeMismatch):
            optimizer_step(params, grads, AdamState.zeros_like(params), AdamConfig())

    def test_missing_gradient(self, params):
        with pytest.raises(ShapeMismatch):
            optimizer_step(params, {"w": np.zeros((3, 2))}, AdamState(), AdamConfig())

    def test_bias_correction_after_two_steps(self):
        params = {"p": np.array([0.0])}
        config = AdamConfig(lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8)
        state = AdamState.zeros_like(params)
        params, state = optimizer_step(params, {"p": np.array([1.0])}, state, config)
        params, state = optimizer_step(params, {"p": np.array([3.0])}, state, config)
        m = 0.9 * 0.1 + 0.1 * 3.0
        v = 0.999 * 0.001 + 0.001 * 9.0
        m_hat = m / (1 - 0.9 ** 2)
        v_hat = v / (1 - 0.999 ** 2)
        expected = -0.1 / (1.0 + 1e-8) - 0.1 * m_hat / (np.sqrt(v_hat) + 1e-8)
        assert params["p"][0] == pytest.approx(expected, rel=1e-9)


class TestAdamOptimizer:
    """In-place form"""

    def test_matches_functional_form(self, params, rng):
        live = {k: v.copy() for k, v in params.items()}
        optimizer = AdamOptimizer(live, AdamConfig(lr=1e-2))
        functional, state = params, AdamState.zeros_like(params)
        for _ in range(3):
            grads = {k: rng.normal(size=v.shape) for k, v in params.items()}
            optimizer.step(grads)
            functional, state = optimizer_step(functional, grads, state, AdamConfig(lr=1e-2))
        for k in params:
            assert np.array_equal(live[k], functional[k])
        assert optimizer.state.step == 3
