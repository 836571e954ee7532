import math
import os

import numpy as np
import pytest

from rump.custom_exceptions import (
    AssumptionFailureError,
    GuardExceededError,
    InvalidArgumentError,
    NotIntegerError,
)
from rump.dp import (
    GRID,
    DynamicProgram,
    Policy,
    SolverSettings,
    audit,
    c_recursion,
    gap_bound,
    kernel_expectation,
    kernel_value,
    lower_value,
    minimizing_kernel,
    robust_expectation,
    robust_value,
    synthesize_strategy,
    u_cl_value,
)
from rump.market import build_tree, read_market
from rump.structure import check_h_membership, find_h_kernel
from rump.utility import AECertificate, MonotoneUtility, ce_utility, read_utility, s_shape_utility
from tests.data_generation import GAMMA_HI, GAMMA_LO, plateau_utility, random_tree, s_shape_tree

DATA = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")

S_SHAPE_MAX = 1 / (3 * math.sqrt(3))

FAST = SolverSettings(resolution=101, inner_resolution=21, refine_starts=2, tol=1e-9)

S_SHAPE_CERT = AECertificate(gamma_lo=GAMMA_LO, gamma_hi=GAMMA_HI)


@pytest.fixture
def ce():
    tree, priors = read_market(os.path.join(DATA, "ce_market.json"))
    utility, assumptions = read_utility(os.path.join(DATA, "ce_utility.json"))
    return tree, priors, utility, assumptions.certificate


@pytest.fixture
def ce_program(ce):
    tree, priors, utility, certificate = ce
    return DynamicProgram(tree, priors, utility, certificate, settings=FAST)


def test_settings_are_validated():
    with pytest.raises(InvalidArgumentError):
        SolverSettings(resolution=0)
    with pytest.raises(NotIntegerError):
        SolverSettings(resolution=10.5)
    with pytest.raises(InvalidArgumentError):
        SolverSettings(mode="fast")
    with pytest.raises(InvalidArgumentError):
        SolverSettings(eta=1.5)
    with pytest.raises(InvalidArgumentError):
        SolverSettings(tol=0.0)


def test_c_recursion():
    tree, priors = random_tree(3)
    assert set(c_recursion(tree, priors, 1.0).values()) == {1.0}

    tree, priors = build_tree(1, {"up": [1.0], "dn": [-1.0]}, [[0.6, 0.4]])
    C = c_recursion(tree, priors, {("up",): 2.0, ("dn",): 0.0})
    assert C[()] == pytest.approx(1.2)

    tree, priors = build_tree(1, {"up": [1.0], "dn": [-1.0]}, [[1.0, 0.0], [0.0, 1.0]])
    assert c_recursion(tree, priors, {("up",): 2.0, ("dn",): 0.0})[()] == 2.0

    with pytest.raises(InvalidArgumentError):
        c_recursion(tree, priors, -1.0)


def test_kernel_value_of_the_s_shape():
    tree, priors, utility = s_shape_tree(1)
    kernel = find_h_kernel(tree, priors).kernel
    value = kernel_value(tree, utility, kernel, (), 0.0, S_SHAPE_CERT, settings=FAST)
    assert value == pytest.approx(S_SHAPE_MAX, abs=1e-9)


def test_robust_value_of_the_jump_utility_is_not_attained(ce_program):
    assert ce_program.robust_value((), 0.0) == pytest.approx(0.6, abs=1e-8)
    kinds = [d["kind"] for d in ce_program.diagnostics]
    assert "no_attainment" in kinds


def test_closed_value_of_the_jump_utility(ce_program):
    value, h = ce_program.u_cl_value((), 0.0)
    assert value == 1.0
    np.testing.assert_array_equal(h, [0.0])
    assert all(d["kind"] != "chain" for d in ce_program.diagnostics)


def test_strategy_and_gap_of_the_jump_utility(ce, ce_program):
    tree, priors, utility, _ = ce
    policy = ce_program.synthesize_strategy(0.0)
    np.testing.assert_array_equal(policy.positions[()], [0.0])
    assert policy.terminal_wealth(("up",)) == 0.0
    floor, bound = ce_program.gap_bound(policy)
    assert floor == 0.0
    assert bound == 1.0
    # the unclosed value 0.6 sits inside the bracket
    assert floor <= 0.6 <= floor + bound

    half = Policy.from_positions(tree, 0.0, {(): [0.5]})
    assert lower_value(tree, utility, priors, half) == pytest.approx(0.4)
    assert gap_bound(tree, utility, priors, half) == (pytest.approx(0.4), 0.0)


def test_audit_of_the_jump_utility(ce_program):
    report = ce_program.audit(x_ref=1.0)
    assert report.u0_at_x_ref == 1.0
    assert report.passed
    row = report.nodes.iloc[0]
    assert row["node"] == "/"
    assert row["alpha"] == pytest.approx(0.4)
    assert row["c_P"] == 1.0
    assert row["i_P"] == pytest.approx(6.0)
    assert row["N_P"] == 6.0
    assert row["l_P"] == 1.0
    assert row["neg_integrable"]
    assert row["well_defined"]
    assert report.to_dict()["inadmissible_paths"] == []


def test_plateau_makes_the_zero_policy_inadmissible():
    tree, priors = build_tree(1, {"up": [1.0], "dn": [-1.0]}, [[0.5, 0.5]])
    certificate = AECertificate(gamma_lo=0.5, gamma_hi=1.0)
    kernel = find_h_kernel(tree, priors).kernel
    report = audit(tree, plateau_utility(2.0), priors, kernel, certificate, x_ref=1.0, settings=FAST)
    assert report.inadmissible_paths == ["/dn", "/up"]
    assert not report.admissible
    assert not report.passed
    assert report.u0_at_x_ref == -np.inf
    assert report.u0_finite
    assert not report.nodes.loc[0, "neg_integrable"]


def test_missing_kernel_fails_the_assumption():
    tree, priors = read_market(os.path.join(DATA, "arbitrage_market.json"))
    program = DynamicProgram(tree, priors, MonotoneUtility(s_shape_utility()), S_SHAPE_CERT, settings=FAST)
    assert program.kernel is None
    with pytest.raises(AssumptionFailureError) as e:
        program.robust_value((), 0.0)
    assert e.value.assumption == "H_nonempty"


def test_exact_mode_horizon_guard():
    tree, priors, utility = s_shape_tree(4)
    with pytest.raises(GuardExceededError):
        DynamicProgram(tree, priors, utility, S_SHAPE_CERT, settings=FAST)
    grid_settings = SolverSettings(mode=GRID, wealth_points=5)
    assert DynamicProgram(tree, priors, utility, S_SHAPE_CERT, settings=grid_settings).tree.horizon == 4


def test_grid_mode_matches_exact_value():
    tree, priors, utility = s_shape_tree(1)
    settings = SolverSettings(mode=GRID, inner_resolution=41, refine_starts=2, tol=1e-9, wealth_points=41)
    program = DynamicProgram(tree, priors, utility, S_SHAPE_CERT, settings=settings)
    assert program.kernel_value((), 0.0) == pytest.approx(S_SHAPE_MAX, abs=1e-6)
    frame = program.value_function((), "kernel").to_frame()
    assert len(frame) == 41
    assert frame["value"].is_monotonic_increasing


def test_value_chain_on_a_continuous_utility():
    tree, priors, utility = s_shape_tree(1)
    value, h = u_cl_value(tree, utility, priors, (), 0.0, S_SHAPE_CERT, settings=FAST)
    assert value == pytest.approx(S_SHAPE_MAX, abs=1e-9)
    assert abs(h[0]) == pytest.approx(1 / 3, abs=1e-5)
    assert robust_value(tree, utility, priors, (), 0.0, S_SHAPE_CERT, settings=FAST) == pytest.approx(value, abs=1e-8)


def test_value_is_nondecreasing_in_wealth():
    tree, priors = random_tree(7, horizon=1)
    program = DynamicProgram(tree, priors, MonotoneUtility(s_shape_utility()), S_SHAPE_CERT, settings=FAST)
    values = [program.kernel_value((), x) for x in (-1.0, -0.25, 0.0, 0.5, 2.0)]
    assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("seed", range(3))
def test_robust_value_is_below_kernel_value(seed):
    tree, priors = random_tree(seed, horizon=1, max_vertices=3)
    program = DynamicProgram(tree, priors, MonotoneUtility(s_shape_utility()), S_SHAPE_CERT, settings=FAST)
    for x in (-0.5, 0.5):
        kernel = program.kernel_value((), x)
        assert program.robust_value((), x) <= kernel + 1e-6 * max(1.0, abs(kernel))


@pytest.mark.parametrize("seed", range(2))
def test_singleton_priors_make_robust_and_kernel_values_agree(seed):
    tree, priors = random_tree(seed, horizon=2, singleton=True)
    settings = SolverSettings(resolution=41, inner_resolution=21, refine_starts=2, tol=1e-8)
    program = DynamicProgram(tree, priors, MonotoneUtility(s_shape_utility()), S_SHAPE_CERT, settings=settings)
    for x in (0.0, 0.75):
        assert program.robust_value((), x) == program.kernel_value((), x)


@pytest.mark.parametrize("seed", range(5))
def test_mixtures_approach_the_robust_expectation(seed):
    tree, priors = random_tree(seed, horizon=2, max_vertices=3)
    kernel = find_h_kernel(tree, priors).kernel
    rng = np.random.default_rng(seed)
    payoff = {p: float(rng.uniform(-1, 1)) for p in tree.terminal_paths()}
    exact = robust_expectation(tree, priors, payoff)
    worst = minimizing_kernel(tree, priors, payoff)
    assert kernel_expectation(tree, worst, payoff) == pytest.approx(exact, abs=1e-12)
    for lam in (1e-2, 1e-4, 1e-6):
        mixed = kernel.mix(priors, worst, lam)
        assert check_h_membership(tree, priors, mixed)[0]
        gap = kernel_expectation(tree, mixed, payoff) - exact
        assert -1e-12 <= gap <= 2 * tree.horizon * lam + 1e-12


def test_two_period_strategy_closes_the_bracket():
    tree, priors, utility = s_shape_tree(2)
    settings = SolverSettings(resolution=41, inner_resolution=21, refine_starts=2, tol=1e-8)
    program = DynamicProgram(tree, priors, utility, S_SHAPE_CERT, settings=settings)
    policy = program.synthesize_strategy(0.0)
    assert set(policy.positions) == set(tree.non_terminal_paths())
    root_value, _ = program.u_cl_value((), 0.0)
    floor, bound = program.gap_bound(policy)
    assert bound == 0.0
    assert floor == pytest.approx(root_value, abs=1e-6)
    assert root_value >= S_SHAPE_MAX - 1e-9


def test_module_level_strategy(ce):
    tree, priors, utility, certificate = ce
    policy = synthesize_strategy(tree, utility, priors, 1.0, certificate, settings=FAST)
    assert policy.x0 == 1.0
    frame = policy.to_dataframe()
    assert list(frame["node"]) == ["/", "/dn", "/up"]
    assert lower_value(tree, utility, priors, policy) == 1.0


def test_closed_robust_value_is_below_the_shifted_value(ce_program):
    function = ce_program.value_function((), "robust")
    for x in (-1.0, 0.0, 0.5):
        assert function.right_limit(x) <= ce_program.robust_value((), x + 1.0) + 1e-9


def test_diagnostics_are_counted_per_node():
    tree, priors = build_tree(2, {"up": [1.0], "dn": [-1.0]}, [[0.6, 0.4]])
    certificate = AECertificate(gamma_lo=0.5, gamma_hi=1.0, C=1.0)
    program = DynamicProgram(tree, priors, MonotoneUtility(ce_utility()), certificate, settings=FAST)
    program.synthesize_strategy(0.0)
    diagnostics = program.diagnostics
    keys = [(d["kind"], d["node"]) for d in diagnostics]
    assert len(keys) == len(set(keys))
    assert len(diagnostics) <= 5 * len(tree.non_terminal_paths())
    assert all(d["count"] >= 1 and d["x_min"] <= d["x"] <= d["x_max"] for d in diagnostics)
    assert sum(d["count"] for d in diagnostics) >= len(diagnostics)


@pytest.mark.parametrize("kind", ["robust", "kernel"])
@pytest.mark.parametrize("seed", range(2))
def test_growth_condition_propagates_to_the_root(seed, kind):
    tree, priors = random_tree(seed, horizon=1, max_vertices=2)
    program = DynamicProgram(tree, priors, MonotoneUtility(s_shape_utility()), S_SHAPE_CERT, settings=FAST)
    value = program.robust_value if kind == "robust" else program.kernel_value
    c0 = program.C[()]
    for x in (-1.0, -0.25, 0.0, 0.25, 1.0):
        base = value((), x)
        for lam in (1.0, 2.0, 5.0):
            scaled = value((), lam * x)
            for gamma in (GAMMA_LO, GAMMA_HI):
                bound = lam**gamma * (base + c0)
                assert scaled <= bound + 1e-6 * max(1.0, abs(bound))


def test_growth_condition_propagates_with_a_jump(ce_program):
    certificate = ce_program.certificate
    c0 = ce_program.C[()]
    for x in (-1.0, -0.5, 0.5, 1.0):
        base = ce_program.robust_value((), x)
        for lam in (1.5, 3.0):
            scaled = ce_program.robust_value((), lam * x)
            for gamma in (certificate.gamma_lo, certificate.gamma_hi):
                assert scaled <= lam**gamma * (base + c0) + 1e-6


def _grid_search_value(tree, priors, utility, grid):
    """Best worst-case value over strategies restricted to a position grid, two periods."""

    def last_step(path, w):
        y = tree.increments(path)[:, 0]
        vals = utility.at(tree.child_paths(path)[0]).evaluate(w + grid[:, None] * y[None, :])
        return float((vals @ priors.at(path).T).min(axis=1).max())

    root_y = tree.increments(())[:, 0]
    children = tree.child_paths(())
    best = -np.inf
    for h in grid:
        after = np.array([last_step(c, h * y) for c, y in zip(children, root_y)])
        best = max(best, float((priors.at(()) @ after).min()))
    return best


def test_lower_value_matches_a_strategy_grid_search():
    tree, priors = build_tree(2, {"up": [1.0], "dn": [-1.0]}, [[0.5, 0.5], [0.4, 0.6]])
    utility = MonotoneUtility(s_shape_utility())
    settings = SolverSettings(resolution=41, inner_resolution=21, refine_starts=2, tol=1e-9)
    program = DynamicProgram(tree, priors, utility, S_SHAPE_CERT, settings=settings)
    achieved = program.lower_value(program.synthesize_strategy(0.0))
    searched = _grid_search_value(tree, priors, utility, np.linspace(-2.0, 2.0, 801))
    assert achieved >= searched - 1e-5
    assert achieved <= searched + 1e-4
