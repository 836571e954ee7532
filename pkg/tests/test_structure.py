import os

import numpy as np
import pytest

from rump.custom_exceptions import HConditionError
from rump.market import Kernel, build_tree, read_market
from rump.structure import (
    alpha_from_support,
    alpha_qna,
    candidate_weights,
    check_h_membership,
    conditional_support,
    find_h_kernel,
)
from tests.data_generation import random_tree

DATA = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")


def test_ce_market_has_admissible_kernel():
    tree, priors = read_market(os.path.join(DATA, "ce_market.json"))
    result = find_h_kernel(tree, priors)
    assert result.found
    np.testing.assert_array_equal(result.kernel.at(()), [0.6, 0.4])
    passed, diagnostics = check_h_membership(tree, priors, result.kernel)
    assert passed
    assert diagnostics.loc[0, "dim_D"] == 1


def test_arbitrage_market_has_no_admissible_kernel():
    tree, priors = read_market(os.path.join(DATA, "arbitrage_market.json"))
    result = find_h_kernel(tree, priors)
    assert not result.found
    assert result.failing_nodes == [()]


def test_search_needs_a_mixture():
    # each vertex alone sees one direction only
    tree, priors = build_tree(1, {"up": [1.0], "dn": [-1.0]}, [[1.0, 0.0], [0.0, 1.0]])
    result = find_h_kernel(tree, priors)
    assert result.found
    np.testing.assert_allclose(result.kernel.at(()), [0.5, 0.5])
    single = Kernel.vertex_choice(priors, {(): 0})
    passed, diagnostics = check_h_membership(tree, priors, single)
    assert not passed
    assert not diagnostics.loc[0, "zero_in_ri_D_P"]


def test_kernel_must_span_the_full_support():
    # the first vertex never charges the second asset direction
    tree, priors = build_tree(
        1,
        {"a": [1.0, 0.0], "b": [-1.0, 0.0], "c": [0.0, 1.0], "d": [0.0, -1.0]},
        [[0.5, 0.5, 0.0, 0.0], [0.25, 0.25, 0.25, 0.25]],
    )
    narrow = Kernel.vertex_choice(priors, {(): 0})
    passed, diagnostics = check_h_membership(tree, priors, narrow)
    assert not passed
    assert diagnostics.loc[0, "zero_in_ri_D_P"]
    assert not diagnostics.loc[0, "same_hull"]
    result = find_h_kernel(tree, priors)
    np.testing.assert_array_equal(result.kernel.weights[()], [0.0, 1.0])


def test_candidate_weights():
    candidates = candidate_weights(2, mixture_grid=4)
    assert [list(c) for c in candidates[:3]] == [[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]
    assert len(candidates) == 5
    assert all(abs(c.sum() - 1) < 1e-12 for c in candidates)


@pytest.mark.parametrize("q, alpha", [(0.6, 0.4), (0.5, 0.5), (0.9, 0.1)])
def test_alpha_on_two_points(q, alpha):
    tree, priors = build_tree(1, {"up": [1.0], "dn": [-1.0]}, [[q, 1 - q]])
    kernel = find_h_kernel(tree, priors).kernel
    assert alpha_qna(tree, (), kernel, priors) == pytest.approx(alpha, abs=1e-12)


def test_alpha_is_capped_by_distance():
    # small moves: the level is limited by their size, not their mass
    value = alpha_from_support(np.array([[0.25], [-0.125]]), np.array([0.5, 0.5]))
    assert value < 0.125
    assert value == pytest.approx(0.125, rel=1e-12)


def test_alpha_rejects_non_admissible_kernel():
    tree, priors = read_market(os.path.join(DATA, "arbitrage_market.json"))
    with pytest.raises(HConditionError):
        alpha_qna(tree, (), Kernel.vertex_choice(priors, {(): 0}), priors)


def test_alpha_in_two_dimensions_holds_on_random_directions():
    Y = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0], [0.5, -0.5]])
    q = np.array([0.25, 0.25, 0.25, 0.25])
    alpha = alpha_from_support(Y, q, bisection_steps=8)
    assert 0 < alpha <= 1
    rng = np.random.default_rng(42)
    u = rng.standard_normal((5000, 2))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    mass = ((u @ Y.T) < -alpha) @ q
    assert (mass >= alpha).all()


def test_random_trees_admit_kernels():
    for seed in range(5):
        tree, priors = random_tree(seed)
        result = find_h_kernel(tree, priors)
        assert result.found
        assert check_h_membership(tree, priors, result.kernel)[0]
        for path in tree.non_terminal_paths():
            assert 0 < alpha_qna(tree, path, result.kernel, priors) <= 1


def test_conditional_support_drops_uncharged_children():
    tree, priors = build_tree(1, {"up": [1.0], "dn": [-1.0], "crash": [-5.0]}, [[0.5, 0.5, 0.0]])
    np.testing.assert_array_equal(conditional_support(tree, priors, ()), [[1.0], [-1.0]])
