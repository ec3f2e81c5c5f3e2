import numpy as np
import pytest

from physe_inv.autodiff import (
    GradientMap,
    Tape,
    Tensor,
    active_tape,
    backward,
    concat,
    cosine_similarity,
    dropout,
    forward_op,
)
from physe_inv.exceptions import (
    ContractError,
    DegenerateSimilarityError,
    DimensionError,
    DomainError,
    NumericError,
)


def leaf(data, name):
    return Tensor(np.asarray(data, dtype=float), requires_grad=True, name=name)


def test_broadcast_add_sums_gradient_over_expanded_axes():
    x = leaf(np.ones((3, 4)), "x")
    b = leaf(np.zeros(4), "b")
    with Tape() as tape:
        loss = (x + b).sum()
        grads = backward(tape, loss)
    np.testing.assert_array_equal(grads["x"], np.ones((3, 4)))
    np.testing.assert_array_equal(grads["b"], np.full(4, 3.0))


def test_matmul_gradients(rng):
    a = leaf(rng.normal(size=(2, 3)), "a")
    b = leaf(rng.normal(size=(3, 4)), "b")
    with Tape() as tape:
        grads = backward(tape, (a @ b).sum())
    np.testing.assert_allclose(grads["a"], np.ones((2, 4)) @ b.data.T)
    np.testing.assert_allclose(grads["b"], a.data.T @ np.ones((2, 4)))


def test_fan_out_accumulates_adjoints():
    x = leaf([1.0, -2.0, 3.0], "x")
    with Tape() as tape:
        grads = backward(tape, (x * x + x).sum())
    np.testing.assert_allclose(grads["x"], 2.0 * x.data + 1.0)


def test_backward_resets_tape_and_rejects_non_scalar():
    x = leaf([1.0, 2.0], "x")
    with Tape() as tape:
        y = x * 2.0
        with pytest.raises(ContractError):
            backward(tape, y)
        backward(tape, y.sum())
        assert len(tape) == 0


def test_constants_are_not_recorded():
    with Tape() as tape:
        Tensor([1.0, 2.0]) * 3.0
    assert len(tape) == 0


def test_gradient_map_defaults_to_zeros():
    x = leaf(np.ones((2, 2)), "unused")
    np.testing.assert_array_equal(GradientMap().of(x), np.zeros((2, 2)))


def test_non_finite_construction_is_rejected():
    with pytest.raises(NumericError):
        Tensor([1.0, np.nan])


@pytest.mark.parametrize(
    "build, error",
    [
        (lambda: Tensor([0.0, 1.0]).log(), DomainError),
        (lambda: Tensor([1.0]) / Tensor([0.0]), DomainError),
        (lambda: Tensor([800.0]).exp(), DomainError),
        (lambda: Tensor([-1.0]) ** 0.5, DomainError),
        (lambda: Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3))), DimensionError),
        (lambda: Tensor(np.ones((2, 3))) + Tensor(np.ones((4,))), DimensionError),
        (lambda: cosine_similarity(Tensor([0.0, 0.0]), Tensor([1.0, 0.0])), DegenerateSimilarityError),
        (lambda: forward_op("no_such_op", [Tensor([1.0])]), ContractError),
        (lambda: Tensor([1.0]).clip(1.0, 0.0), ContractError),
    ],
)
def test_operation_contracts(build, error):
    with pytest.raises(error):
        build()


def test_row_softmax_rows_sum_to_one(rng):
    out = Tensor(rng.normal(size=(2, 3, 5)) * 50.0).row_softmax()
    np.testing.assert_allclose(out.data.sum(axis=-1), np.ones((2, 3)))


def test_concat_splits_gradient_back():
    a = leaf(np.ones((2, 2)), "a")
    b = leaf(np.ones((1, 2)), "b")
    with Tape() as tape:
        joined = concat([a, b], axis=0)
        weights = np.arange(6.0).reshape(3, 2)
        grads = backward(tape, (joined * weights).sum())
    np.testing.assert_array_equal(grads["a"], weights[:2])
    np.testing.assert_array_equal(grads["b"], weights[2:])


def test_dropout_is_identity_in_eval_mode_and_needs_rng_in_train_mode():
    x = Tensor(np.arange(6.0).reshape(2, 3))
    np.testing.assert_array_equal(dropout(x, 0.4, train=False).data, x.data)
    with pytest.raises(ContractError):
        dropout(x, 0.4, train=True)
    with pytest.raises(ContractError):
        dropout(x, 1.0, train=False)


def test_dropout_scales_kept_units(rng):
    out = dropout(Tensor(np.ones(1000)), 0.5, train=True, rng=rng)
    kept = out.data[out.data != 0.0]
    np.testing.assert_allclose(kept, 2.0)


def test_cosine_similarity_broadcasts_pairwise():
    z = Tensor([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
    sim = cosine_similarity(z.reshape((3, 1, 2)), z.reshape((1, 3, 2)))
    assert sim.shape == (3, 3)
    np.testing.assert_allclose(np.diag(sim.data), np.ones(3))
    assert sim.data[0, 1] == pytest.approx(0.0)
    assert sim.data[0, 2] == pytest.approx(1.0 / np.sqrt(2.0))


def test_active_tape_follows_nested_blocks():
    assert active_tape() is None
    with Tape() as outer:
        assert active_tape() is outer
        with Tape() as inner:
            assert active_tape() is inner
            Tensor([1.0], requires_grad=True, name="x").exp()
        assert active_tape() is outer
    assert active_tape() is None
    assert len(inner) == 1 and len(outer) == 0


def test_gradients_of_independent_subgraphs_add(rng):
    x0, y0 = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    w = rng.normal(size=(3, 2))

    def grads(build):
        x = Tensor(x0, requires_grad=True, name="x")
        y = Tensor(y0, requires_grad=True, name="y")
        with Tape() as tape:
            return backward(tape, build(x, y))

    def first(x, y):
        return (x.tanh() * x).sum()

    def second(x, y):
        return ((x @ y) * w).sum() + (y * y).sum()

    combined = grads(lambda x, y: first(x, y) + second(x, y))
    separate = [grads(first), grads(second)]
    np.testing.assert_allclose(combined["x"], separate[0]["x"] + separate[1]["x"], atol=1e-12)
    np.testing.assert_allclose(combined["y"], separate[0].get("y", 0.0) + separate[1]["y"], atol=1e-12)
