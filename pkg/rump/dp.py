"""Backward dynamic programming over the scenario tree.

Value functions are :class:`~rump.base.MonotoneFunction` objects. In exact
mode a non-terminal value is a memoized one-period optimization over the
children's value functions; in grid mode it is interpolated from a wealth
grid filled by backward induction.
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .base import MonotoneFunction, Persistable
from .custom_exceptions import (
    AssumptionFailureError,
    GuardExceededError,
    HConditionError,
    InvalidArgumentError,
    NotIntegerError,
)
from .market import Kernel, Path, PriorSet, ScenarioTree, path_str, reachable_nodes
from .one_period import (
    OnePeriodConstants,
    OnePeriodProblem,
    k_bounds,
    maximize_cl_psi,
    one_period_constants,
    smallest_threshold_level,
    sup_psi,
)
from .structure import alpha_qna, find_h_kernel
from .utility import AECertificate, MonotoneUtility
from .xreal import NEG_INF, expectation, negative_part, positive_part, xsum

logger = logging.getLogger(__name__)

EXACT = "exact"
GRID = "grid"

# Absolute slack allowed in the value chain U <= Cl(U) <= u_cl.
CHAIN_TOLERANCE = 1e-8


@dataclass
class SolverSettings:
    """Numerical parameters of the solver.

    Parameters
    ----------
    resolution: int
        Grid points per basis direction in the root search.
    inner_resolution: int
        Same below the root, where every value is itself an optimization.
    refine_starts: int
        Candidates refined by compass search.
    tol: float
        Final compass step.
    n0_cap: int
        Search cap for the negative threshold levels.
    max_exact_horizon: int
        Exact recursion is refused beyond this horizon.
    eta: float, optional
        Overrides the certificate's eta.
    mode: str
        ``"exact"`` or ``"grid"``.
    closure_offset: float
        Relative offset used for one-sided limits of recursive values.
    fallback_radius: float
        Search radius where the coercivity bound is unavailable.
    wealth_span: float
        Grid mode wealth grid covers [-wealth_span, wealth_span].
    wealth_points: int
        Grid mode wealth grid size.
    n_jobs: int
        Workers for the kernel search.
    seed: int
        Seed of the randomized falsification sweeps.
    """

    resolution: int = 2000
    inner_resolution: int = 50
    refine_starts: int = 10
    tol: float = 1e-10
    n0_cap: int = 10**6
    max_exact_horizon: int = 3
    eta: Optional[float] = None
    mode: str = EXACT
    closure_offset: float = 1e-9
    fallback_radius: float = 1e3
    wealth_span: float = 10.0
    wealth_points: int = 201
    n_jobs: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("resolution", "inner_resolution", "refine_starts", "n0_cap", "max_exact_horizon", "wealth_points"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)):
                raise NotIntegerError(name)
            if value < 1:
                raise InvalidArgumentError(name, "positive")
        for name in ("tol", "closure_offset", "fallback_radius", "wealth_span"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(name, "positive")
        if self.mode not in (EXACT, GRID):
            raise InvalidArgumentError("mode", f"'{EXACT}' or '{GRID}'")
        if self.eta is not None and not 0 < self.eta < 1:
            raise InvalidArgumentError("eta", "in (0, 1)")


@dataclass
class NodeSolution:
    value: float
    h: np.ndarray
    attained: bool = True


class NodeValueFunction(MonotoneFunction):
    """Value at a non-terminal node, computed on demand and memoized per wealth.

    Parameters
    ----------
    program: DynamicProgram
    path: tuple
    kind: str
        ``"robust"`` for U_t, ``"kernel"`` for U_t^P.
    """

    def __init__(self, program: "DynamicProgram", path: Path, kind: str):
        self._program = program
        self._path = tuple(path)
        self._kind = kind
        self._cache: Dict[float, NodeSolution] = {}

    def solution(self, x: float) -> NodeSolution:
        key = round(float(x), 12)
        if key not in self._cache:
            self._cache[key] = self._program._solve_node(self._path, self._kind, float(x))
        return self._cache[key]

    def __call__(self, x: float) -> float:
        return self.solution(x).value

    def _offset(self, x: float) -> float:
        return self._program.settings.closure_offset * max(1.0, abs(x))

    def right_limit(self, x: float) -> float:
        if not self._program.has_jumps(self._path):
            return self(x)
        return self(x + self._offset(x))

    def left_limit(self, x: float) -> float:
        if not self._program.has_jumps(self._path):
            return self(x)
        return self(x - self._offset(x))

    def is_continuous_at(self, x: float) -> bool:
        if not self._program.has_jumps(self._path):
            return True
        left, right = self.left_limit(x), self.right_limit(x)
        if not (np.isfinite(left) and np.isfinite(right)):
            return left == right == self(x)
        return right - left <= 1e-6 * max(1.0, abs(self(x)))

    def breakpoints(self) -> np.ndarray:
        return self._program.breakpoint_hints(self._path)

    def __str__(self):
        return f"{self.__class__.__name__}(node={path_str(self._path)}, kind={self._kind}, cached={len(self._cache)})"


class GridValueFunction(MonotoneFunction):
    """Piecewise-linear interpolation of values on a wealth grid, extended linearly."""

    def __init__(self, xs: np.ndarray, values: np.ndarray):
        self._xs = np.asarray(xs, dtype=float)
        self._values = np.maximum.accumulate(np.asarray(values, dtype=float))

    def evaluate(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        out = np.interp(xs, self._xs, self._values)
        finite = np.isfinite(self._values)
        if finite.sum() >= 2:
            fx, fv = self._xs[finite], self._values[finite]
            left, right = xs < fx[0], xs > fx[-1]
            out = np.where(left, fv[0] + (xs - fx[0]) * (fv[1] - fv[0]) / (fx[1] - fx[0]), out)
            out = np.where(right, fv[-1] + (xs - fx[-1]) * (fv[-1] - fv[-2]) / (fx[-1] - fx[-2]), out)
        return out

    def __call__(self, x: float) -> float:
        return float(self.evaluate(np.array([x]))[0])

    def right_limit(self, x: float) -> float:
        return self(x)

    def left_limit(self, x: float) -> float:
        return self(x)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x": self._xs, "value": self._values})


@dataclass
class Policy(Persistable):
    """Positions and wealth along the tree for one initial wealth."""

    x0: float
    positions: Dict[Path, np.ndarray]
    wealth: Dict[Path, float]

    @classmethod
    def from_positions(cls, tree: ScenarioTree, x0: float, positions: Mapping[Path, object]) -> "Policy":
        """Forward wealth from given positions; missing nodes hold nothing."""
        held = {}
        wealth = {(): float(x0)}
        for t in range(tree.horizon):
            for path in tree.paths_at_depth(t):
                h = np.asarray(positions.get(path, np.zeros(tree.assets)), dtype=float).reshape(tree.assets)
                held[path] = h
                for child, increment in zip(tree.child_paths(path), tree.increments(path)):
                    wealth[child] = wealth[path] + float(h @ increment)
        return cls(x0=float(x0), positions=held, wealth=wealth)

    def terminal_wealth(self, path: Path) -> float:
        return self.wealth[tuple(path)]

    def to_dataframe(self) -> pd.DataFrame:
        rows = [
            {
                "node": path_str(path),
                "depth": len(path),
                "wealth": self.wealth[path],
                "h": [float(v) for v in self.positions[path]] if path in self.positions else None,
            }
            for path in sorted(self.wealth, key=lambda p: (len(p), p))
        ]
        return pd.DataFrame(rows, columns=["node", "depth", "wealth", "h"])

    def to_dict(self) -> dict:
        return {"x0": self.x0, "nodes": self.to_dataframe().to_dict(orient="records")}


@dataclass
class AuditReport(Persistable):
    """Per-node constants and assumption verdicts of a kernel."""

    nodes: pd.DataFrame
    u0_at_x_ref: float
    x_ref: float
    inadmissible_paths: List[str] = field(default_factory=list)

    @property
    def u0_finite(self) -> bool:
        return bool(self.u0_at_x_ref < np.inf)

    @property
    def well_defined(self) -> bool:
        return bool(self.nodes["well_defined"].all()) if len(self.nodes) else True

    @property
    def admissible(self) -> bool:
        return len(self.inadmissible_paths) == 0

    @property
    def passed(self) -> bool:
        return self.u0_finite and self.well_defined and self.admissible

    def to_dict(self) -> dict:
        return {
            "u0_at_x_ref": self.u0_at_x_ref,
            "x_ref": self.x_ref,
            "u0_finite": self.u0_finite,
            "well_defined": self.well_defined,
            "admissible": self.admissible,
            "inadmissible_paths": list(self.inadmissible_paths),
            "nodes": self.nodes.to_dict(orient="records"),
        }


def c_recursion(tree: ScenarioTree, priors: PriorSet, C_T: Union[float, Mapping[Path, float]]) -> Dict[Path, float]:
    """C_t = max over the node's vertices of the expected C_{t+1}, backwards from C_T."""
    C = {}
    for path in tree.terminal_paths():
        c = float(C_T[path]) if isinstance(C_T, Mapping) else float(C_T)
        if c < 0:
            raise InvalidArgumentError(f"C_T at {path_str(path)}", "nonnegative")
        C[path] = c
    for t in reversed(range(tree.horizon)):
        for path in tree.paths_at_depth(t):
            values = [C[child] for child in tree.child_paths(path)]
            C[path] = max(expectation(p, values) for p in priors.at(path))
    return C


def _backward(tree: ScenarioTree, step, payoff: Mapping[Path, float]) -> Dict[Path, float]:
    values = {tuple(p): float(v) for p, v in payoff.items()}
    for t in reversed(range(tree.horizon)):
        for path in tree.paths_at_depth(t):
            values[path] = step(path, [values[child] for child in tree.child_paths(path)])
    return values


def robust_expectation(tree: ScenarioTree, priors: PriorSet, payoff: Mapping[Path, float]) -> float:
    """Infimum over Q^T of the expected terminal payoff, by backward vertex minima."""
    return _backward(tree, lambda path, v: min(expectation(p, v) for p in priors.at(path)), payoff)[()]


def robust_sup_expectation(tree: ScenarioTree, priors: PriorSet, payoff: Mapping[Path, float]) -> float:
    return _backward(tree, lambda path, v: max(expectation(p, v) for p in priors.at(path)), payoff)[()]


def kernel_expectation(tree: ScenarioTree, kernel: Kernel, payoff: Mapping[Path, float]) -> float:
    return _backward(tree, lambda path, v: expectation(kernel.at(path), v), payoff)[()]


def minimizing_kernel(tree: ScenarioTree, priors: PriorSet, payoff: Mapping[Path, float]) -> Kernel:
    """Vertex choice attaining the robust expectation; ties go to the first vertex."""
    choice = {}

    def step(path, values):
        exps = [expectation(p, values) for p in priors.at(path)]
        choice[path] = int(np.argmin(exps))
        return exps[choice[path]]

    _backward(tree, step, payoff)
    return Kernel.vertex_choice(priors, choice)


class DynamicProgram:
    """Value functions, strategies and audits of one robust problem.

    Parameters
    ----------
    tree: ScenarioTree
    priors: PriorSet
    utility: MonotoneUtility
    certificate: AECertificate
        Growth data; its constants C seed the C_t recursion.
    kernel: Kernel, optional
        Designated admissible kernel; searched when omitted.
    settings: SolverSettings, optional

    Raises
    ------
    GuardExceededError
        Exact mode on a horizon beyond ``settings.max_exact_horizon``.
    """

    def __init__(
        self,
        tree: ScenarioTree,
        priors: PriorSet,
        utility: MonotoneUtility,
        certificate: AECertificate,
        kernel: Optional[Kernel] = None,
        settings: Optional[SolverSettings] = None,
    ):
        self.tree = tree
        self.priors = priors
        self.utility = utility
        self.settings = settings if settings is not None else SolverSettings()
        if self.settings.eta is not None:
            certificate = certificate.with_eta(self.settings.eta)
        self.certificate = certificate
        if self.settings.mode == EXACT and tree.horizon > self.settings.max_exact_horizon:
            raise GuardExceededError("exact recursion horizon", tree.horizon, self.settings.max_exact_horizon)
        utility.validate_for(tree.terminal_paths())
        if kernel is None:
            search = find_h_kernel(tree, priors, n_jobs=self.settings.n_jobs)
            kernel = search.kernel
            if kernel is None:
                logger.warning("No admissible kernel found at %s", [path_str(p) for p in search.failing_nodes])
        self.kernel = kernel
        self.C = c_recursion(tree, priors, {p: certificate.c_at(p) for p in tree.terminal_paths()})
        self.reached = reachable_nodes(tree, priors)
        self._diagnostics: Dict[Tuple[str, str], dict] = {}
        self._functions: Dict[Tuple[Path, str], MonotoneFunction] = {}
        self._alphas: Dict[Path, float] = {}
        self._constants: Dict[Tuple[Path, str], OnePeriodConstants] = {}
        self._jumps: Dict[Path, bool] = {}
        self._hints: Dict[Path, np.ndarray] = {}
        self._problems: Dict[Tuple[Path, str], OnePeriodProblem] = {}

    def _diagnose(self, kind: str, path: Path, x: float, **extra) -> None:
        key = (kind, path_str(path))
        entry = self._diagnostics.get(key)
        if entry is None:
            entry = {"kind": kind, "node": key[1], "x": float(x), "count": 0, "x_min": float(x), "x_max": float(x)}
            entry.update(extra)
            self._diagnostics[key] = entry
        entry["count"] += 1
        entry["x_min"] = min(entry["x_min"], float(x))
        entry["x_max"] = max(entry["x_max"], float(x))

    @property
    def diagnostics(self) -> List[dict]:
        """One entry per (kind, node): first occurrence, count and wealth range."""
        return [dict(self._diagnostics[key]) for key in sorted(self._diagnostics)]

    def _require_kernel(self) -> Kernel:
        if self.kernel is None:
            raise AssumptionFailureError("H_nonempty", "no admissible kernel was found.")
        return self.kernel

    def has_jumps(self, path: Path) -> bool:
        """Whether some terminal utility below the node is discontinuous."""
        path = tuple(path)
        if path not in self._jumps:
            if self.tree.is_terminal(path):
                f = self.utility.at(path)
                self._jumps[path] = any(not f.is_continuous_at(float(b)) for b in f.breakpoints())
            else:
                self._jumps[path] = any(self.has_jumps(c) for c in self.tree.child_paths(path))
        return self._jumps[path]

    def breakpoint_hints(self, path: Path) -> np.ndarray:
        path = tuple(path)
        if path not in self._hints:
            if self.tree.is_terminal(path):
                self._hints[path] = self.utility.at(path).breakpoints()
            else:
                hints = [self.breakpoint_hints(c) for c in self.tree.child_paths(path)]
                self._hints[path] = np.unique(np.concatenate(hints)) if hints else np.empty(0)
        return self._hints[path]

    def alpha(self, path: Path) -> float:
        path = tuple(path)
        if path not in self._alphas:
            self._alphas[path] = alpha_qna(self.tree, path, self._require_kernel(), self.priors, seed=self.settings.seed)
        return self._alphas[path]

    def value_function(self, path: Path, kind: str = "robust") -> MonotoneFunction:
        """U_t (kind ``"robust"``) or U_t^P (kind ``"kernel"``) at a node."""
        path = tuple(path)
        if self.tree.is_terminal(path):
            return self.utility.at(path)
        key = (path, kind)
        if key not in self._functions:
            if self.settings.mode == EXACT:
                self._functions[key] = NodeValueFunction(self, path, kind)
            else:
                self._functions[key] = self._fill_grid(path, kind)
        return self._functions[key]

    def problem(self, path: Path, kind: str = "robust") -> OnePeriodProblem:
        """The one-period problem induced at a non-terminal node."""
        path = tuple(path)
        if (path, kind) in self._problems:
            return self._problems[(path, kind)]
        if self.tree.is_terminal(path):
            raise InvalidArgumentError(f"node {path_str(path)}", "non-terminal")
        kernel = self._require_kernel()
        p_star = kernel.at(path)
        vertices = self.priors.at(path) if kind == "robust" else p_star[None, :]
        children = self.tree.child_paths(path)
        problem = OnePeriodProblem(
            Y=self.tree.increments(path),
            vertices=vertices,
            p_star=p_star,
            V=tuple(self.value_function(c, kind) for c in children),
            C=np.array([self.C[c] for c in children]),
            certificate=self.certificate,
            labels=tuple(self.tree.node(path).children),
        )
        self._problems[(path, kind)] = problem
        return problem

    def constants(self, path: Path, kind: str = "robust") -> OnePeriodConstants:
        key = (tuple(path), kind)
        if key not in self._constants:
            self._constants[key] = one_period_constants(
                self.problem(path, kind), self.alpha(path), n0_cap=self.settings.n0_cap
            )
        return self._constants[key]

    def _resolution(self, path: Path) -> int:
        return self.settings.resolution if len(path) == 0 else self.settings.inner_resolution

    def _radius(self, path: Path, kind: str, problem: OnePeriodProblem, x: float) -> float:
        try:
            _, k1 = k_bounds(problem, self.constants(path, kind), x)
        except (AssumptionFailureError, HConditionError) as error:
            logger.debug("No coercivity bound at %s: %s", path_str(path), error)
            k1 = np.inf
        if np.isfinite(k1):
            return k1
        logger.warning("Using fallback radius %g at %s, x=%g", self.settings.fallback_radius, path_str(path), x)
        self._diagnose("fallback_radius", path, x, radius=self.settings.fallback_radius)
        return self.settings.fallback_radius

    def _solve_node(self, path: Path, kind: str, x: float) -> NodeSolution:
        problem = self.problem(path, kind)
        radius = self._radius(path, kind, problem, x)
        s = self.settings
        result = sup_psi(problem, x, radius, self._resolution(path), s.refine_starts, s.tol)
        if not result.attained:
            self._diagnose("no_attainment", path, x, value=result.value, kind_of_value=kind)
        logger.debug("%s value at %s, x=%g: %g", kind, path_str(path), x, result.value)
        return NodeSolution(value=result.value, h=result.h, attained=result.attained)

    def _fill_grid(self, path: Path, kind: str) -> GridValueFunction:
        s = self.settings
        xs = np.linspace(-s.wealth_span, s.wealth_span, s.wealth_points)
        problem = self.problem(path, kind)
        values = np.array(
            [sup_psi(problem, x, self._radius(path, kind, problem, x), s.inner_resolution, s.refine_starts, s.tol).value for x in xs]
        )
        logger.debug("Filled %s grid at %s", kind, path_str(path))
        return GridValueFunction(xs, values)

    def kernel_value(self, path: Path, x: float) -> float:
        return self.value_function(path, "kernel")(x)

    def robust_value(self, path: Path, x: float) -> float:
        return self.value_function(path, "robust")(x)

    def u_cl_value(self, path: Path, x: float) -> Tuple[float, np.ndarray]:
        """Maximum of the closed one-period value at a node, with its maximizer.

        Raises
        ------
        AssumptionFailureError
            When n0* or K1 is infinite at the node.
        """
        path = tuple(path)
        problem = self.problem(path, "robust")
        s = self.settings
        solution = maximize_cl_psi(
            problem, self.constants(path, "robust"), x, self._resolution(path), s.refine_starts, s.tol
        )
        if solution.bound_active:
            self._diagnose("bound_active", path, x, K1=solution.K1)
        if solution.approximate:
            self._diagnose("approximate_closure", path, x)

        function = self.value_function(path, "robust")
        u, cl_u = function(x), function.right_limit(x)
        slack = CHAIN_TOLERANCE * max(1.0, abs(solution.value)) if np.isfinite(solution.value) else 0.0
        if not (u <= cl_u + slack and cl_u <= solution.value + slack):
            logger.warning(
                "Value chain broken at %s, x=%g: U=%g, Cl(U)=%g, u_cl=%g", path_str(path), x, u, cl_u, solution.value
            )
            self._diagnose("chain", path, x, U=u, cl_U=cl_u, u_cl=solution.value)
        return solution.value, solution.h

    def synthesize_strategy(self, x0: float) -> Policy:
        """Forward pass gluing the one-period maximizers along the reachable tree."""
        positions = {}
        wealth = {(): float(x0)}
        for t in range(self.tree.horizon):
            for path in self.tree.paths_at_depth(t):
                h = np.zeros(self.tree.assets)
                if path in self.reached:
                    _, h = self.u_cl_value(path, wealth[path])
                    space = self.problem(path).search_space
                    basis = space.orthonormal_basis()
                    residual = h - basis.T @ (basis @ h) if len(basis) else h
                    if np.linalg.norm(residual) > 1e-9 * max(1.0, float(np.linalg.norm(h))):
                        raise AssertionError(f"position at {path_str(path)} leaves the affine hull of the support")
                positions[path] = h
                for child, increment in zip(self.tree.child_paths(path), self.tree.increments(path)):
                    wealth[child] = wealth[path] + float(h @ increment)
        return Policy(x0=float(x0), positions=positions, wealth=wealth)

    def terminal_payoff(self, policy: Policy, closure: bool = False) -> Dict[Path, float]:
        out = {}
        for path in self.tree.terminal_paths():
            f = self.utility.at(path)
            x = policy.terminal_wealth(path)
            out[path] = f.right_limit(x) if closure else f(x)
        return out

    def lower_value(self, policy: Policy) -> float:
        return lower_value(self.tree, self.utility, self.priors, policy)

    def gap_bound(self, policy: Policy) -> Tuple[float, float]:
        return gap_bound(self.tree, self.utility, self.priors, policy)

    def _levels(self, path: Path, kind: str, probs: np.ndarray, threshold: float, alpha: float) -> float:
        children = [self.value_function(c, kind) for c in self.tree.child_paths(path)]
        return smallest_threshold_level(children, probs, threshold, 1 - alpha / 2, self.settings.n0_cap)

    def _positive_mass(self, path: Path, kind: str, probs: np.ndarray) -> float:
        increments = self.tree.increments(path)
        children = [self.value_function(c, kind) for c in self.tree.child_paths(path)]
        return xsum(
            expectation(probs, [positive_part(f(1 + np.dot(theta, y))) if q > 0 else 0.0 for f, y, q in zip(children, increments, probs)])
            for theta in itertools.product((-1.0, 1.0), repeat=self.tree.assets)
        )

    def _well_defined(self, path: Path, probs: np.ndarray) -> bool:
        increments = self.tree.increments(path)
        children = [self.value_function(c, "kernel") for c in self.tree.child_paths(path)]
        thetas = [np.zeros(self.tree.assets)] + [np.array(t) for t in itertools.product((-1.0, 1.0), repeat=self.tree.assets)]
        for theta in thetas:
            values = [f(1 + float(theta @ y)) if q > 0 else 0.0 for f, y, q in zip(children, increments, probs)]
            plus = expectation(probs, [positive_part(v) for v in values])
            minus = expectation(probs, [negative_part(v) for v in values])
            if plus == np.inf and minus == np.inf:
                return False
        return True

    def audit(self, x_ref: float = 1.0, policy: Optional[Policy] = None) -> AuditReport:
        """Per-node constants of the designated kernel and assumption verdicts.

        Parameters
        ----------
        x_ref: float
            Wealth at which U_0^P must be finite.
        policy: Policy, optional
            Checked for admissibility; the zero policy from x_ref by default.

        Returns
        -------
        AuditReport
        """
        kernel = self._require_kernel()
        rows = []
        for path in self.tree.non_terminal_paths():
            if path not in self.reached:
                continue
            q = kernel.at(path)
            alpha = self.alpha(path)
            c_p = expectation(q, [self.C[c] for c in self.tree.child_paths(path)])
            i_p = 1 + 2 * c_p / alpha
            robust_children = [self.value_function(c, "robust") for c in self.tree.child_paths(path)]
            neg = min(expectation(p, [f(-1.0) if w > 0 else 0.0 for f, w in zip(robust_children, p)]) for p in self.priors.at(path))
            rows.append(
                {
                    "node": path_str(path),
                    "depth": len(path),
                    "C": self.C[path],
                    "c_P": c_p,
                    "alpha": alpha,
                    "i_P": i_p,
                    "l_P": self._positive_mass(path, "kernel", q),
                    "N_P": self._levels(path, "kernel", q, -i_p, alpha),
                    "l_star": self._positive_mass(path, "robust", q),
                    "N_star": self._levels(path, "robust", q, -i_p, alpha),
                    "neg_integrable": bool(neg > NEG_INF),
                    "well_defined": self._well_defined(path, q),
                }
            )
        nodes = pd.DataFrame(
            rows,
            columns=["node", "depth", "C", "c_P", "alpha", "i_P", "l_P", "N_P", "l_star", "N_star", "neg_integrable", "well_defined"],
        )
        u0 = self.kernel_value((), x_ref)
        if policy is None:
            policy = Policy.from_positions(self.tree, x_ref, {})
        payoff = self.terminal_payoff(policy)
        inadmissible = sorted(path_str(p) for p, v in payoff.items() if p in self.reached and v == NEG_INF)
        if inadmissible:
            logger.info("Policy is not admissible on %s", inadmissible)
        return AuditReport(nodes=nodes, u0_at_x_ref=u0, x_ref=float(x_ref), inadmissible_paths=inadmissible)


def _program(tree, utility, priors, certificate, kernel=None, settings=None) -> DynamicProgram:
    return DynamicProgram(tree, priors, utility, certificate, kernel=kernel, settings=settings)


def kernel_value(tree, utility, kernel: Kernel, node: Path, x: float, certificate: AECertificate, settings=None) -> float:
    """U_t^P at a node for a single kernel, the kernel's entries acting as singleton priors."""
    priors = PriorSet({p: kernel.at(p)[None, :] for p in tree.non_terminal_paths()})
    return _program(tree, utility, priors, certificate, kernel, settings).kernel_value(node, x)


def robust_value(tree, utility, priors, node: Path, x: float, certificate: AECertificate, kernel=None, settings=None) -> float:
    return _program(tree, utility, priors, certificate, kernel, settings).robust_value(node, x)


def u_cl_value(tree, utility, priors, node: Path, x: float, certificate: AECertificate, kernel=None, settings=None):
    return _program(tree, utility, priors, certificate, kernel, settings).u_cl_value(node, x)


def synthesize_strategy(tree, utility, priors, x0: float, certificate: AECertificate, kernel=None, settings=None) -> Policy:
    return _program(tree, utility, priors, certificate, kernel, settings).synthesize_strategy(x0)


def lower_value(tree, utility, priors, policy: Policy) -> float:
    """Worst expected terminal utility of a fixed policy over Q^T."""
    payoff = {p: utility.at(p)(policy.terminal_wealth(p)) for p in tree.terminal_paths()}
    return robust_expectation(tree, priors, payoff)


def gap_bound(tree, utility, priors, policy: Policy) -> Tuple[float, float]:
    """Realized robust floor of the policy and the sup over priors of the expected terminal jump."""
    jumps = {p: utility.at(p).jump(policy.terminal_wealth(p)) for p in tree.terminal_paths()}
    return lower_value(tree, utility, priors, policy), robust_sup_expectation(tree, priors, jumps)


def audit(tree, utility, priors, kernel: Kernel, certificate: AECertificate, x_ref: float = 1.0, policy=None, settings=None) -> AuditReport:
    return _program(tree, utility, priors, certificate, kernel, settings).audit(x_ref, policy)
