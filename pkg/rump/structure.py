"""Conditional supports, admissible kernels and the quantitative no-arbitrage level."""
import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .custom_exceptions import HConditionError
from .geometry import AffineSubspace, affine_hull, feasible_sign_patterns, to_rational, zero_in_rel_interior
from .market import Kernel, Path, PriorSet, ScenarioTree, path_str, reachable_nodes

logger = logging.getLogger(__name__)

# Bisection steps for the no-arbitrage level when Aff(D) has dimension >= 2.
ALPHA_BISECTION_STEPS = 20

# Random directions used to falsify a candidate level.
ALPHA_SAMPLES = 10_000


def _unique_rows(points: np.ndarray) -> np.ndarray:
    if len(points) == 0:
        return points
    _, idx = np.unique(points, axis=0, return_index=True)
    return points[np.sort(idx)]


def conditional_support(tree: ScenarioTree, priors: PriorSet, node: Path) -> np.ndarray:
    """Increments of the children charged by at least one prior vertex."""
    return _unique_rows(tree.increments(node)[priors.charged(node)])


def kernel_support(tree: ScenarioTree, kernel: Kernel, node: Path) -> np.ndarray:
    return _unique_rows(tree.increments(node)[kernel.at(node) > 0])


@dataclass
class SupportReport:
    node: Path
    D_points: np.ndarray
    D_P_points: np.ndarray
    aff_D: AffineSubspace
    aff_D_P: AffineSubspace
    zero_in_ri_D_P: bool

    @property
    def same_hull(self) -> bool:
        return self.aff_D == self.aff_D_P

    @property
    def passes(self) -> bool:
        return self.zero_in_ri_D_P and self.same_hull

    def to_dict(self) -> dict:
        return {
            "node": path_str(self.node),
            "dim_D": self.aff_D.dim,
            "dim_D_P": self.aff_D_P.dim,
            "zero_in_ri_D_P": self.zero_in_ri_D_P,
            "same_hull": self.same_hull,
            "passes": self.passes,
        }


def support_report(tree: ScenarioTree, priors: PriorSet, node: Path, probs: np.ndarray) -> SupportReport:
    increments = tree.increments(node)
    d_points = conditional_support(tree, priors, node)
    d_p_points = _unique_rows(increments[np.asarray(probs) > 0])
    return SupportReport(
        node=tuple(node),
        D_points=d_points,
        D_P_points=d_p_points,
        aff_D=affine_hull(d_points),
        aff_D_P=affine_hull(d_p_points),
        zero_in_ri_D_P=zero_in_rel_interior(d_p_points),
    )


def check_h_membership(tree: ScenarioTree, priors: PriorSet, kernel: Kernel) -> Tuple[bool, pd.DataFrame]:
    """Whether the kernel is admissible at every reachable non-terminal node.

    Returns
    -------
    bool, pd.DataFrame
        Verdict and one diagnostic row per audited node.
    """
    reached = reachable_nodes(tree, priors)
    rows = [
        support_report(tree, priors, path, kernel.at(path)).to_dict()
        for path in tree.non_terminal_paths()
        if path in reached
    ]
    diagnostics = pd.DataFrame(rows, columns=["node", "dim_D", "dim_D_P", "zero_in_ri_D_P", "same_hull", "passes"])
    return bool(diagnostics["passes"].all()), diagnostics


def _compositions(total: int, parts: int):
    for cut in itertools.combinations(range(total + parts - 1), parts - 1):
        bounds = (-1,) + cut + (total + parts - 1,)
        yield np.array([bounds[i + 1] - bounds[i] - 1 for i in range(parts)], dtype=float) / total


def candidate_weights(n_vertices: int, mixture_grid: Optional[int] = None) -> List[np.ndarray]:
    """Vertices first, then the uniform mixture, then optional grid mixtures."""
    candidates = list(np.eye(n_vertices))
    if n_vertices > 1:
        candidates.append(np.full(n_vertices, 1.0 / n_vertices))
    if mixture_grid and n_vertices > 1:
        seen = {tuple(c) for c in candidates}
        for w in _compositions(mixture_grid, n_vertices):
            if tuple(w) not in seen:
                candidates.append(w)
    return candidates


def _search_node(tree, priors, path, mixture_grid) -> Optional[np.ndarray]:
    vertices = priors.at(path)
    for w in candidate_weights(len(vertices), mixture_grid):
        if support_report(tree, priors, path, w @ vertices).passes:
            return w
    return None


@dataclass
class HSearchResult:
    kernel: Optional[Kernel]
    failing_nodes: List[Path] = field(default_factory=list)

    @property
    def found(self) -> bool:
        return self.kernel is not None


def find_h_kernel(
    tree: ScenarioTree, priors: PriorSet, mixture_grid: Optional[int] = None, n_jobs: int = 1
) -> HSearchResult:
    """Search an admissible kernel node by node.

    Each reachable node tries its vertices, then the uniform mixture, then,
    with ``mixture_grid=n``, every mixture with weights in multiples of 1/n.
    Unreachable nodes take the uniform mixture.

    Parameters
    ----------
    tree: ScenarioTree
    priors: PriorSet
    mixture_grid: int, optional
        Denominator of the extra weight grid.
    n_jobs: int
        Workers for the per-node search (joblib).

    Returns
    -------
    HSearchResult
        The kernel, or None with the failing reachable nodes.
    """
    reached = reachable_nodes(tree, priors)
    paths = tree.non_terminal_paths()
    found = Parallel(n_jobs=n_jobs)(delayed(_search_node)(tree, priors, p, mixture_grid) for p in paths)
    weights, failing = {}, []
    for path, w in zip(paths, found):
        if w is None:
            if path in reached:
                failing.append(path)
            n_v = len(priors.at(path))
            w = np.full(n_v, 1.0 / n_v)
        weights[path] = w
    if failing:
        logger.info("No admissible kernel in the candidate family; failing nodes: %s", [path_str(p) for p in failing])
        return HSearchResult(kernel=None, failing_nodes=failing)
    return HSearchResult(kernel=Kernel.from_weights(priors, weights))


def _alpha_one_side(magnitudes: np.ndarray, masses: np.ndarray) -> float:
    """Largest alpha with alpha <= mass{a > alpha}, for atoms at distance a."""
    if len(magnitudes) == 0:
        return 0.0
    order = np.argsort(magnitudes)
    a, m = magnitudes[order], masses[order]
    distinct = np.unique(a)
    best = 0.0
    lower = 0.0
    for upper in distinct:
        mass = float(m[a >= upper].sum())
        if mass >= lower:
            candidate = mass if mass < upper else float(np.nextafter(upper, 0.0))
            best = max(best, candidate)
        lower = upper
    return best


def _level_holds_on_box(z: np.ndarray, q: np.ndarray, alpha: float) -> bool:
    """Exact check of q(u.z < -alpha*sqrt(k)*|u|_inf) >= alpha on every box facet.

    Since |u|_2 <= sqrt(k) |u|_inf, passing implies the Euclidean condition.
    """
    m, k = z.shape
    beta = Fraction(alpha) * (Fraction(float(np.sqrt(k))) + Fraction(1, 10**12))
    zq = [to_rational(row) for row in z]
    alpha_q = Fraction(alpha)
    masses = [Fraction(float(v)) for v in q]
    for i in range(k):
        others = [l for l in range(k) if l != i]
        for s in (1, -1):
            normals = [tuple([Fraction(0)] * len(others) + [Fraction(1)])]
            allowed = {0: (1,)}
            for idx, l in enumerate(others):
                e = [Fraction(0)] * len(others)
                e[idx] = Fraction(1)
                normals.append(tuple(e + [Fraction(-1)]))
                allowed[len(normals) - 1] = (0, -1)
                normals.append(tuple([-c for c in e] + [Fraction(-1)]))
                allowed[len(normals) - 1] = (0, -1)
            first_atom = len(normals)
            for row in zq:
                normals.append(tuple([row[l] for l in others] + [s * row[i] + beta]))
            for pattern in feasible_sign_patterns(normals, allowed=allowed, max_normals=None):
                below = sum((masses[j] for j, sg in enumerate(pattern[first_atom:]) if sg < 0), Fraction(0))
                if below < alpha_q:
                    return False
    return True


def _level_survives_sampling(z: np.ndarray, q: np.ndarray, alpha: float, rng) -> bool:
    u = rng.standard_normal((ALPHA_SAMPLES, z.shape[1]))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    mass = ((u @ z.T) < -alpha) @ q
    return bool((mass >= alpha).all())


def points_pass_h(all_points: np.ndarray, kernel_points: np.ndarray) -> bool:
    """0 in ri(conv(kernel points)) and both point sets span the same affine hull."""
    return zero_in_rel_interior(kernel_points) and affine_hull(all_points) == affine_hull(kernel_points)


def alpha_from_support(
    increments: np.ndarray,
    probs: np.ndarray,
    bisection_steps: int = ALPHA_BISECTION_STEPS,
    seed: int = 0,
) -> float:
    """No-arbitrage level of a finite distribution of increments.

    Parameters
    ----------
    increments: np.ndarray
        One row per atom.
    probs: np.ndarray
        Probability of each atom; 0 must lie in the relative interior of the
        convex hull of the charged atoms.
    bisection_steps: int
        Used when the affine hull has dimension >= 2.
    seed: int
        Seed of the falsification sweep.

    Returns
    -------
    float
        alpha in (0, 1].
    """
    probs = np.asarray(probs, dtype=float)
    charged = probs > 0
    points = np.asarray(increments, dtype=float)[charged]
    q = probs[charged]
    basis = affine_hull(points).orthonormal_basis()
    z = points @ basis.T
    k = z.shape[1]
    if k == 0:
        return 1.0
    if k == 1:
        line = z[:, 0]
        up = _alpha_one_side(-line[line < 0], q[line < 0])
        down = _alpha_one_side(line[line > 0], q[line > 0])
        return min(1.0, up, down)

    rng = np.random.default_rng(seed)
    lo, hi = 0.0, 1.0
    for _ in range(bisection_steps):
        mid = (lo + hi) / 2
        if _level_holds_on_box(z, q, mid) and _level_survives_sampling(z, q, mid, rng):
            lo = mid
        else:
            hi = mid
    if lo == 0.0:
        lo = hi / 2
        while not (_level_holds_on_box(z, q, lo) and _level_survives_sampling(z, q, lo, rng)):
            lo /= 2
    return lo


def alpha_qna(
    tree: ScenarioTree,
    node: Path,
    kernel: Kernel,
    priors: Optional[PriorSet] = None,
    bisection_steps: int = ALPHA_BISECTION_STEPS,
    seed: int = 0,
) -> float:
    """Certified level alpha with q(h.dS < -alpha |h|) >= alpha for h != 0 in Aff(D).

    Exact in dimension one. In higher dimension the level is bisected and
    each candidate is verified exactly against the box norm, then against
    random directions.

    Parameters
    ----------
    tree: ScenarioTree
    node: tuple
        Non-terminal node.
    kernel: Kernel
        Supplies the local prior q.
    priors: PriorSet, optional
        When given, the affine hulls of both supports must agree.

    Returns
    -------
    float
        alpha in (0, 1].
    """
    probs = kernel.at(node)
    report_priors = priors if priors is not None else PriorSet({tuple(node): probs[None, :]})
    if not support_report(tree, report_priors, node, probs).passes:
        raise HConditionError(path_str(tuple(node)))
    alpha = alpha_from_support(tree.increments(node), probs, bisection_steps, seed)
    logger.debug("alpha at %s: %g", path_str(tuple(node)), alpha)
    return alpha
