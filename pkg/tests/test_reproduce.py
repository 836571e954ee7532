import pytest

from rump.custom_exceptions import InvalidArgumentError
from rump.dp import SolverSettings
from rump.reproduce import EXAMPLES, ce_no_cl_market, ce_no_cl_utility, reproduce

SETTINGS = SolverSettings(resolution=101)


def test_examples_are_listed():
    assert sorted(EXAMPLES) == ["ce-no-cl"]


def test_jump_example_claims_hold():
    claims = reproduce("ce-no-cl", settings=SETTINGS).set_index("claim")
    assert claims["passed"].all()
    assert claims.loc["alpha", "observed"] == pytest.approx(0.4)
    assert claims.loc["n0_star", "observed"] == 6
    assert claims.loc["K0", "observed"] == pytest.approx(15 ** 4)
    assert claims.loc["K1", "observed"] == pytest.approx(15 ** 4)
    assert claims.loc["sup_value", "observed"] == pytest.approx(0.6, abs=1e-6)
    assert claims.loc["closed_value", "observed"] == 1.0
    assert claims.loc["lower_value", "observed"] == 0.0
    assert claims.loc["gap_bound", "observed"] == 1.0


def test_symmetric_jump_example():
    claims = reproduce("ce-no-cl", q=0.5, settings=SETTINGS).set_index("claim")
    assert claims["passed"].all()
    assert claims.loc["n0_star", "observed"] == 5
    assert claims.loc["K0", "observed"] == pytest.approx(1e4)
    assert claims.loc["K1", "observed"] == pytest.approx(12 ** 4)


def test_example_inputs():
    tree, priors = ce_no_cl_market(0.7)
    assert priors.at(()).shape == (1, 2)
    utility, assumptions = ce_no_cl_utility()
    assert utility(0.0) == 0.0
    assert utility.right_limit(0.0) == 1.0
    assert assumptions.x_low == -2.0
    with pytest.raises(InvalidArgumentError):
        ce_no_cl_market(1.0)


def test_unknown_example():
    with pytest.raises(InvalidArgumentError):
        reproduce("merton")
