import numpy as np
import pytest

from physe_inv.autodiff import GradientMap, Tape, backward
from physe_inv.exceptions import ConfigError, NumericError
from physe_inv.model import ModelParams
from physe_inv.training import OptimizerState, adam_step


@pytest.fixture
def params():
    store = ModelParams()
    store.add("w", np.array([1.0, -2.0, 0.5]))
    store.add("b", np.array([0.0]))
    return store


def test_first_step_moves_by_learning_rate_against_gradient_sign(params):
    state = OptimizerState.for_params(params, learning_rate=0.01)
    before = params["w"].data.copy()
    adam_step(params, GradientMap(w=np.array([3.0, -0.2, 1e-3]), b=np.array([0.0])), state)
    np.testing.assert_allclose(before - params["w"].data, 0.01 * np.array([1.0, -1.0, 1.0]), atol=1e-6)
    assert state.step == 1


def test_missing_gradient_means_no_first_step_update(params):
    state = OptimizerState.for_params(params)
    adam_step(params, GradientMap(w=np.ones(3)), state)
    np.testing.assert_array_equal(params["b"].data, [0.0])


def test_non_finite_gradient_leaves_parameters_untouched(params):
    state = OptimizerState.for_params(params)
    before = params.snapshot()
    with pytest.raises(NumericError, match="'b'"):
        adam_step(params, GradientMap(w=np.ones(3), b=np.array([np.inf])), state)
    assert state.step == 0
    np.testing.assert_array_equal(params["w"].data, before["w"])


def test_adam_minimizes_a_quadratic():
    store = ModelParams()
    x = store.add("x", np.array([0.0, 10.0]))
    state = OptimizerState.for_params(store, learning_rate=0.05)
    for _ in range(1500):
        with Tape() as tape:
            diff = x - 3.0
            grads = backward(tape, (diff * diff).sum())
        adam_step(store, grads, state)
    np.testing.assert_allclose(x.data, [3.0, 3.0], atol=0.05)


@pytest.mark.parametrize("kwargs", [{"learning_rate": 0.0}, {"beta1": 1.0}, {"beta2": -0.1}, {"epsilon": 0.0}])
def test_hyperparameter_validation(kwargs):
    with pytest.raises(ConfigError):
        OptimizerState(**kwargs)
