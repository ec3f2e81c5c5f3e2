import math

import numpy as np
import pytest

from physe_inv.autodiff import Tape, Tensor, backward
from physe_inv.exceptions import ConfigError, ContractError, DegenerateSimilarityError, DimensionError
from physe_inv.objectives import (
    LossWeights,
    contrastive_loss,
    mse_loss,
    nt_xent_loss,
    pe_loss,
    stability_regularizer,
    total_loss,
)


def test_mse_value_and_contracts():
    assert mse_loss(Tensor([1.0, 2.0]), np.array([0.0, 0.0])).item() == pytest.approx(2.5)
    with pytest.raises(DimensionError):
        mse_loss(Tensor([1.0, 2.0]), np.array([0.0, 0.0, 0.0]))
    with pytest.raises(ContractError):
        mse_loss(Tensor(np.empty(0)), np.empty(0))


def test_pe_loss_averages_per_sequence_then_over_batch():
    pred = Tensor([[1.0, 1.0], [0.0, 4.0]])
    est = Tensor([[1.0, 3.0], [0.0, 0.0]])
    # sequence means of squared gaps: 2 and 8
    assert pe_loss(pred, est).item() == pytest.approx(5.0)
    assert pe_loss(pred, pred).item() == 0.0


def test_nt_xent_single_pair_is_zero():
    loss = contrastive_loss(Tensor([[1.0, 0.0]]), Tensor([[0.0, 1.0]]), LossWeights())
    assert loss.item() == pytest.approx(0.0, abs=1e-12)


def test_nt_xent_reference_value():
    z = Tensor([[1.0, 0.0], [0.0, 1.0]])
    loss = contrastive_loss(z, Tensor(z.data.copy()), LossWeights(tau=0.5))
    assert loss.item() == pytest.approx(math.log1p(2.0 * math.exp(-2.0)))


def test_nt_xent_prefers_aligned_views(rng):
    z = Tensor(rng.normal(size=(4, 3)))
    aligned = contrastive_loss(z, Tensor(z.data + 0.01), LossWeights()).item()
    shuffled = contrastive_loss(z, Tensor(z.data[::-1].copy()), LossWeights()).item()
    assert aligned < shuffled


@pytest.mark.parametrize("pairing", [[0, 1], [1, 1], [1, 0, 3], [2, 3, 1, 0], [1, 5]])
def test_nt_xent_rejects_invalid_pairings(pairing, rng):
    with pytest.raises(ContractError):
        nt_xent_loss(Tensor(rng.normal(size=(len(pairing), 3))), pairing, tau=0.5)


def test_nt_xent_rejects_bad_temperature_and_zero_embeddings(rng):
    with pytest.raises(ContractError):
        nt_xent_loss(Tensor(rng.normal(size=(2, 3))), [1, 0], tau=0.0)
    with pytest.raises(DegenerateSimilarityError):
        nt_xent_loss(Tensor([[0.0, 0.0], [1.0, 0.0]]), [1, 0], tau=0.5)


def test_nt_xent_gradient_flows_to_both_views(rng):
    z = Tensor(rng.normal(size=(3, 4)), requires_grad=True, name="z")
    z_aug = Tensor(rng.normal(size=(3, 4)), requires_grad=True, name="z_aug")
    with Tape() as tape:
        grads = backward(tape, contrastive_loss(z, z_aug, LossWeights()))
    assert np.any(grads["z"] != 0.0) and np.any(grads["z_aug"] != 0.0)


def test_stability_variant():
    z = Tensor([[1.0, 2.0], [3.0, -1.0]])
    assert stability_regularizer(z, Tensor(z.data * 3.0)).item() == pytest.approx(0.0, abs=1e-12)
    opposite = contrastive_loss(z, Tensor(-z.data), LossWeights(cl_variant="stability"))
    assert opposite.item() == pytest.approx(2.0)


def test_total_loss_weights_components():
    components = {"mse": Tensor(1.0), "pe": Tensor(2.0), "cl": Tensor(4.0)}
    total, report = total_loss(components, LossWeights(lambda_pe=1.0, lambda_cl=0.5))
    assert total.item() == pytest.approx(5.0)
    assert report == {"L_MSE": 1.0, "L_PE": 2.0, "L_CL": 4.0, "L_total": 5.0}


def test_total_loss_absent_and_zero_weighted_components():
    total, report = total_loss({"mse": Tensor(1.5), "pe": None}, LossWeights())
    assert report["L_PE"] == 0.0 and report["L_CL"] == 0.0
    assert total.item() == 1.5
    total, report = total_loss({"mse": Tensor(1.0), "cl": Tensor(3.0)}, LossWeights(lambda_cl=0.0))
    assert total.item() == 1.0
    assert report["L_CL"] == 3.0


def test_total_loss_contracts():
    with pytest.raises(ContractError):
        total_loss({"pe": Tensor(1.0)}, LossWeights())
    with pytest.raises(ContractError):
        total_loss({"mse": Tensor(1.0), "extra": Tensor(1.0)}, LossWeights())


@pytest.mark.parametrize(
    "kwargs", [{"lambda_pe": -1.0}, {"lambda_cl": -0.1}, {"tau": 0.0}, {"cl_variant": "triplet"}]
)
def test_loss_weight_validation(kwargs):
    with pytest.raises(ConfigError):
        LossWeights(**kwargs)


def brute_force_nt_xent(z_all, pairing, tau):
    n = len(z_all)
    unit = z_all / np.linalg.norm(z_all, axis=1, keepdims=True)
    sim = unit @ unit.T
    total = 0.0
    for i in range(n):
        others = sum(math.exp(sim[i, k] / tau) for k in range(n) if k != i)
        total -= math.log(math.exp(sim[i, pairing[i]] / tau) / others)
    return total / n


@pytest.mark.parametrize("seed", range(100))
def test_nt_xent_matches_enumeration_for_two_pairs(seed):
    rng = np.random.default_rng(seed)
    z, z_aug = rng.normal(size=(2, 5)), rng.normal(size=(2, 5))
    tau = float(rng.uniform(0.1, 1.0))
    loss = contrastive_loss(Tensor(z), Tensor(z_aug), LossWeights(tau=tau)).item()
    expected = brute_force_nt_xent(np.concatenate([z, z_aug]), [2, 3, 0, 1], tau)
    assert loss == pytest.approx(expected, abs=1e-10)


def test_nt_xent_is_scale_invariant(rng):
    z, z_aug = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    loss = contrastive_loss(Tensor(z), Tensor(z_aug), LossWeights()).item()
    scaled = contrastive_loss(Tensor(z * 37.5), Tensor(z_aug * 37.5), LossWeights()).item()
    assert scaled == pytest.approx(loss, abs=1e-9)


def log_sum_exp_nt_xent(z_all, pairing, tau):
    n = len(z_all)
    unit = z_all / np.linalg.norm(z_all, axis=1, keepdims=True)
    logits = unit @ unit.T / tau
    total = 0.0
    for i in range(n):
        row = np.array([logits[i, k] for k in range(n) if k != i])
        top = row.max()
        total += top + math.log(np.exp(row - top).sum()) - logits[i, pairing[i]]
    return total / n


@pytest.mark.parametrize("tau", [1e-2, 2e-3, 1e-3, 1e-4])
def test_nt_xent_small_temperature_stays_finite(tau, rng):
    z, z_aug = rng.normal(size=(4, 8)), rng.normal(size=(4, 8))
    loss = contrastive_loss(Tensor(z), Tensor(z_aug), LossWeights(tau=tau)).item()
    expected = log_sum_exp_nt_xent(np.concatenate([z, z_aug]), [4, 5, 6, 7, 0, 1, 2, 3], tau)
    assert math.isfinite(loss)
    assert loss == pytest.approx(expected, rel=1e-9)


def test_nt_xent_small_temperature_gradient_is_finite(rng):
    z = Tensor(rng.normal(size=(3, 4)), requires_grad=True, name="z")
    z_aug = Tensor(rng.normal(size=(3, 4)), requires_grad=True, name="z_aug")
    with Tape() as tape:
        grads = backward(tape, contrastive_loss(z, z_aug, LossWeights(tau=1e-3)))
    assert np.all(np.isfinite(grads["z"])) and np.all(np.isfinite(grads["z_aug"]))


@pytest.mark.parametrize("seed", range(10))
def test_nt_xent_is_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    z_all = rng.normal(size=(6, 3))
    pairing = np.array([3, 4, 5, 0, 1, 2])
    order = rng.permutation(6)
    position = np.argsort(order)
    shuffled_pairing = position[pairing[order]]
    loss = nt_xent_loss(Tensor(z_all), pairing, tau=0.5).item()
    shuffled = nt_xent_loss(Tensor(z_all[order]), shuffled_pairing, tau=0.5).item()
    assert shuffled == pytest.approx(loss, abs=1e-12)
