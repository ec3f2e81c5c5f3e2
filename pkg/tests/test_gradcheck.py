import numpy as np
import pytest

from physe_inv.autodiff import Tensor, finite_difference_check, op_kinds
from physe_inv.exceptions import ConfigError, ContractError, GradientCheckError
from physe_inv.gradcheck_suite import COMPOSITE, OP_CASES, available_checks, check_composite, check_op, run_suite


def test_every_operation_has_a_check():
    assert set(OP_CASES) == set(op_kinds())
    assert available_checks()[-1] == COMPOSITE


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_operation_gradients_match_central_differences(name):
    summary = check_op(name, seeds=3)
    assert summary.checks == 3
    assert summary.passed, summary.failures


def test_finite_difference_check_on_cubic():
    x = Tensor(np.linspace(-1.0, 1.0, 7))
    assert finite_difference_check(lambda t: (t ** 3).sum(), x) < 1e-6


def test_finite_difference_check_requires_scalar_output():
    with pytest.raises(ContractError):
        finite_difference_check(lambda t: t * 2.0, Tensor([1.0, 2.0]))


def test_finite_difference_check_reports_domain_failures():
    # the shifted probe crosses zero inside log()
    with pytest.raises(GradientCheckError) as exc:
        finite_difference_check(lambda t: t.log().sum(), Tensor([1.0, 5e-5]), eps=1e-4)
    assert exc.value.coordinate == 1


def test_sampled_coordinates_are_deterministic():
    x = Tensor(np.linspace(0.5, 2.0, 20))
    first = finite_difference_check(lambda t: (t.exp() * t).sum(), x, max_coordinates=4, seed=9)
    second = finite_difference_check(lambda t: (t.exp() * t).sum(), x, max_coordinates=4, seed=9)
    assert first == second


def test_run_suite_rejects_unknown_checks():
    with pytest.raises(ConfigError):
        run_suite(["matmul", "bogus"])


def test_run_suite_subset():
    summaries = run_suite(["add", "tanh"], seeds=2)
    assert [s.name for s in summaries] == ["add", "tanh"]
    assert all(s.passed for s in summaries)


def test_tolerance_is_applied():
    summary = check_op("exp", seeds=1, tolerance=0.0)
    assert not summary.passed


@pytest.mark.slow
def test_composite_model_gradients():
    summary = check_composite(seeds=2)
    assert summary.passed, summary.failures


@pytest.mark.slow
def test_full_suite_with_fifty_seeds():
    failed = [summary.name for summary in run_suite(seeds=50) if not summary.passed]
    assert failed == []
