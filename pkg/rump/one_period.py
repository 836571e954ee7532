"""One-period robust problem: Psi, its closure, coercivity bounds and maximizers.

For a wealth x and a position h the argument of atom j is
``z_j = x + h . Y_j``. Psi is the minimum over the prior vertices of the
expected value of V at these arguments; the infimum over the convex hull of
the vertices is attained at a vertex.
"""
import itertools
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .base import MonotoneFunction
from .custom_exceptions import AssumptionFailureError, InvalidArgumentError
from .geometry import AffineSubspace, affine_hull, feasible_sign_patterns, to_rational
from .structure import alpha_from_support, candidate_weights, points_pass_h
from .utility import AECertificate
from .xreal import NEG_INF, expectation, expectation_many, positive_part, xsum

logger = logging.getLogger(__name__)

DEFAULT_RESOLUTION = 2000
REFINE_STARTS = 10
REFINE_TOL = 1e-10
N0_CAP = 10**6
MAX_CLOSURE_ATOMS = 12
CLOSURE_SAMPLES = 10_000

# Atom arguments this close (relative) to a breakpoint are treated as hitting it.
SNAP_TOL = 1e-12

# Relative tolerance for ties between candidate values.
TIE_TOL = 1e-12

# Offsets (relative) used to read one-sided limits next to a breakpoint preimage.
LIMIT_OFFSETS = (1e-4, 1e-6, 1e-8, 1e-10)

CHUNK = 100_000

# Cap on uniform grid points when the search space has dimension two or more.
MAX_GRID_POINTS = 4_000_000


@dataclass(frozen=True, eq=False)
class OnePeriodProblem:
    """Atoms with increments Y, prior vertices over them and a value per atom.

    Parameters
    ----------
    Y: np.ndarray
        Increments, shape (atoms, assets).
    vertices: np.ndarray
        Prior vertices, shape (vertices, atoms).
    p_star: np.ndarray
        Designated prior, a mixture of the vertices.
    V: sequence of MonotoneFunction
        Next-stage value per atom.
    C: np.ndarray
        Nonnegative AE constant per atom.
    certificate: AECertificate
    labels: tuple of str, optional
    """

    Y: np.ndarray
    vertices: np.ndarray
    p_star: np.ndarray
    V: Tuple[MonotoneFunction, ...]
    C: np.ndarray
    certificate: AECertificate
    labels: Tuple[str, ...] = ()

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        object.__setattr__(self, "Y", Y)
        vertices = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "p_star", np.asarray(self.p_star, dtype=float))
        object.__setattr__(self, "C", np.broadcast_to(np.asarray(self.C, dtype=float), (len(Y),)).copy())
        object.__setattr__(self, "V", tuple(self.V))
        if not self.labels:
            object.__setattr__(self, "labels", tuple(str(j) for j in range(len(Y))))
        m = len(Y)
        if vertices.shape[1] != m or len(self.V) != m or self.p_star.shape != (m,):
            raise InvalidArgumentError("vertices, p_star and V", f"given for each of the {m} atoms")
        for p in np.vstack([vertices, self.p_star]):
            if (p < 0).any() or abs(p.sum() - 1) > 1e-12:
                raise InvalidArgumentError("every prior", "a probability vector")
        if (self.C < 0).any():
            raise InvalidArgumentError("C", "nonnegative")

    @property
    def atoms(self) -> int:
        return len(self.Y)

    @property
    def assets(self) -> int:
        return self.Y.shape[1]

    @cached_property
    def charged(self) -> np.ndarray:
        return (self.vertices > 0).any(axis=0)

    @cached_property
    def support(self) -> np.ndarray:
        return self.Y[self.charged]

    @cached_property
    def search_space(self) -> AffineSubspace:
        """Affine hull of the support and the origin, where positions live."""
        return affine_hull([np.zeros(self.assets)] + list(self.support))

    @cached_property
    def basis(self) -> np.ndarray:
        return self.search_space.orthonormal_basis()

    def arguments(self, x: float, h) -> np.ndarray:
        return x + self.Y @ np.asarray(h, dtype=float).reshape(self.assets)

    def __str__(self):
        return f"{self.__class__.__name__}(atoms={self.atoms}, assets={self.assets}, vertices={len(self.vertices)})"


def admissible_p_star(Y: np.ndarray, vertices: np.ndarray, mixture_grid: Optional[int] = None) -> Optional[np.ndarray]:
    """First vertex or mixture whose support keeps 0 in its relative interior."""
    Y = np.asarray(Y, dtype=float).reshape(len(Y), -1)
    vertices = np.atleast_2d(vertices)
    all_points = Y[(vertices > 0).any(axis=0)]
    for w in candidate_weights(len(vertices), mixture_grid):
        p = w @ vertices
        if points_pass_h(all_points, Y[p > 0]):
            return p
    return None


def _values(problem: OnePeriodProblem, z: np.ndarray) -> np.ndarray:
    return np.array([problem.V[j](z[j]) if problem.charged[j] else 0.0 for j in range(problem.atoms)])


def psi_p(problem: OnePeriodProblem, p, x: float, h) -> float:
    """Expected next-stage value under one prior."""
    z = problem.arguments(x, h)
    p = np.asarray(p, dtype=float)
    return expectation(p, [problem.V[j](z[j]) if p[j] > 0 else 0.0 for j in range(problem.atoms)])


def psi(problem: OnePeriodProblem, x: float, h) -> float:
    """Worst expected next-stage value over the prior vertices."""
    values = _values(problem, problem.arguments(x, h))
    return min(expectation(p, values) for p in problem.vertices)


def psi_many(problem: OnePeriodProblem, x: float, H: np.ndarray) -> np.ndarray:
    """Psi at many positions, one row of H per position."""
    H = np.asarray(H, dtype=float).reshape(-1, problem.assets)
    out = np.empty(len(H))
    for start in range(0, len(H), CHUNK):
        block = H[start : start + CHUNK]
        Z = x + block @ problem.Y.T
        values = np.zeros_like(Z)
        for j in np.flatnonzero(problem.charged):
            values[:, j] = problem.V[j].evaluate(Z[:, j])
        out[start : start + CHUNK] = np.min([expectation_many(p, values) for p in problem.vertices], axis=0)
    return out


def _snap(function: MonotoneFunction, z: float) -> float:
    breakpoints = function.breakpoints()
    if len(breakpoints) == 0:
        return z
    i = int(np.argmin(np.abs(breakpoints - z)))
    b = float(breakpoints[i])
    return b if abs(b - z) <= SNAP_TOL * max(1.0, abs(b)) else z


@dataclass
class ClosureValue:
    value: float
    approximate: bool = False
    patterns: int = 0


def _sampled_closure(problem: OnePeriodProblem, x: float, h: np.ndarray, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    scale = 1e-10 * max(1.0, abs(x), float(np.linalg.norm(h)))
    best = psi(problem, x, h)
    directions = rng.standard_normal((CLOSURE_SAMPLES, 1 + problem.assets))
    for delta in directions:
        best = max(best, psi(problem, x + scale * delta[0], h + scale * delta[1:]))
    return best


def cl_psi_detail(problem: OnePeriodProblem, x: float, h, max_atoms: int = MAX_CLOSURE_ATOMS) -> ClosureValue:
    """Closure of Psi at (x, h) from the one-sided limits of V.

    Along a direction ``delta = (dx, dh)`` the argument of atom j moves with
    speed ``delta . (1, Y_j)``, so V at that atom tends to its right limit,
    its value or its left limit according to the sign. The closure is the
    largest limit over all realizable sign patterns, the point itself
    included.
    """
    h = np.asarray(h, dtype=float).reshape(problem.assets)
    z = problem.arguments(x, h)
    active = []
    for j in np.flatnonzero(problem.charged):
        z[j] = _snap(problem.V[j], z[j])
        if not problem.V[j].is_continuous_at(z[j]):
            active.append(j)
    base = _values(problem, z)
    if not active:
        return ClosureValue(min(expectation(p, base) for p in problem.vertices))
    if len(active) > max_atoms:
        logger.warning("%d atoms at breakpoints exceed %d, closure sampled", len(active), max_atoms)
        return ClosureValue(_sampled_closure(problem, x, h), approximate=True)

    limits = {
        j: {1: problem.V[j].right_limit(z[j]), 0: base[j], -1: problem.V[j].left_limit(z[j])} for j in active
    }
    normals = [to_rational(np.concatenate([[1.0], problem.Y[j]])) for j in active]
    patterns = feasible_sign_patterns(normals) + [tuple(0 for _ in active)]
    best = NEG_INF
    for pattern in patterns:
        values = base.copy()
        for j, s in zip(active, pattern):
            values[j] = limits[j][s]
        best = max(best, min(expectation(p, values) for p in problem.vertices))
    return ClosureValue(best, patterns=len(patterns))


def cl_psi(problem: OnePeriodProblem, x: float, h, max_atoms: int = MAX_CLOSURE_ATOMS) -> float:
    return cl_psi_detail(problem, x, h, max_atoms).value


@dataclass(frozen=True)
class OnePeriodConstants:
    alpha_star: float
    c_star: float
    l_star: float
    n0_star: float
    eta: float
    gamma_lo: float
    gamma_hi: float
    failures: Tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "alpha_star": self.alpha_star,
            "c_star": self.c_star,
            "l_star": self.l_star,
            "n0_star": self.n0_star,
            "eta": self.eta,
            "failures": list(self.failures),
        }


def _thetas(d: int):
    return [np.array(t, dtype=float) for t in itertools.product((-1.0, 1.0), repeat=d)]


def smallest_threshold_level(
    functions: Sequence[MonotoneFunction], probs: np.ndarray, threshold: float, target: float, cap: int = N0_CAP
) -> float:
    """Smallest integer n >= 1 with prob(V(-n) <= threshold) >= target, or +inf beyond cap.

    The mass is nondecreasing in n, so the level is found by bisection.
    """

    def mass(n: int) -> float:
        return float(sum(p for f, p in zip(functions, probs) if p > 0 and f(-float(n)) <= threshold))

    if mass(cap) < target - 1e-12:
        return np.inf
    lo, hi = 1, cap
    while lo < hi:
        mid = (lo + hi) // 2
        if mass(mid) >= target - 1e-12:
            hi = mid
        else:
            lo = mid + 1
    return float(lo)


def one_period_constants(problem: OnePeriodProblem, alpha_star: Optional[float] = None, n0_cap: int = N0_CAP) -> OnePeriodConstants:
    """c*, l*, n0* and eta for the designated prior.

    Parameters
    ----------
    problem: OnePeriodProblem
    alpha_star: float, optional
        No-arbitrage level of p_star; computed from the problem when omitted.
    n0_cap: int
        Search cap for n0*.

    Returns
    -------
    OnePeriodConstants
        Infinite constants are recorded in ``failures``.
    """
    if alpha_star is None:
        alpha_star = alpha_from_support(problem.Y, problem.p_star)
    if not 0 < alpha_star <= 1:
        raise InvalidArgumentError("alpha_star", "in (0, 1]")
    p = problem.p_star
    c_star = expectation(p, problem.C)
    l_star = xsum(
        expectation(p, [positive_part(problem.V[j](1 + theta @ problem.Y[j])) if p[j] > 0 else 0.0 for j in range(problem.atoms)])
        for theta in _thetas(problem.assets)
    )
    threshold = -(1 + 2 * c_star / alpha_star)
    n0_star = smallest_threshold_level(problem.V, p, threshold, 1 - alpha_star / 2, n0_cap)

    failures = []
    if not np.isfinite(c_star):
        failures.append("ae_constant_integrable")
    if not np.isfinite(l_star):
        failures.append("positive_part_integrable")
    if not np.isfinite(n0_star):
        failures.append("negative_threshold_level")
    for name in failures:
        logger.warning("One-period assumption fails: %s", name)
    cert = problem.certificate
    return OnePeriodConstants(
        alpha_star=float(alpha_star),
        c_star=float(c_star),
        l_star=float(l_star),
        n0_star=n0_star,
        eta=float(cert.eta),
        gamma_lo=cert.gamma_lo,
        gamma_hi=cert.gamma_hi,
        failures=tuple(failures),
    )


def _power(base: float, exponent: float) -> float:
    with np.errstate(over="ignore"):
        return float(np.power(np.float64(base), exponent))


def k_bounds(problem: OnePeriodProblem, consts: OnePeriodConstants, x: float) -> Tuple[float, float]:
    """Radii beyond which the closure of Psi decays (K0) and is suboptimal (K1)."""
    if not np.isfinite(consts.n0_star):
        raise AssumptionFailureError("negative_threshold_level", "n0* is infinite, no coercivity bound.")
    a = consts.alpha_star
    eta = consts.eta
    xp = max(x, 0.0)
    ratio = (xp + consts.n0_star) / a
    k0 = max(1.0, xp, ratio, _power(ratio, 1 / (1 - eta)))

    psi0 = psi(problem, x, np.zeros(problem.assets))
    if psi0 == NEG_INF:
        logger.warning("Psi(x, 0) = -inf at x=%g, K1 is infinite", x)
        return k0, np.inf
    spread = eta * consts.gamma_hi - consts.gamma_lo
    k1 = max(
        k0,
        _power(6 * consts.l_star / a, 1 / spread),
        _power(6 * consts.c_star / a, 1 / spread),
        _power(6 / a * max(-psi0, 0.0), 1 / (eta * consts.gamma_hi)),
    )
    return k0, k1


@dataclass
class OnePeriodSolution:
    h: np.ndarray
    value: float
    K0: float
    K1: float
    bound_active: bool = False
    approximate: bool = False

    def to_dict(self) -> dict:
        return {
            "h": [float(v) for v in self.h],
            "value": self.value,
            "K0": self.K0,
            "K1": self.K1,
            "bound_active": self.bound_active,
            "approximate": self.approximate,
        }


@dataclass
class SupResult:
    """Approximate sup of Psi(x, .) with its location.

    ``attained`` is False when the best values are only approached next to
    ``h`` (a breakpoint preimage) while Psi at ``h`` itself is lower.
    """

    value: float
    h: np.ndarray
    attained: bool = True


def _preimages(problem: OnePeriodProblem, x: float, basis: np.ndarray, radius: float) -> np.ndarray:
    """Positions (in basis coordinates) sending some atom onto a breakpoint."""
    k = len(basis)
    lines = []
    for j in np.flatnonzero(problem.charged):
        g = basis @ problem.Y[j]
        norm2 = float(g @ g)
        if norm2 == 0:
            continue
        for b in problem.V[j].breakpoints():
            lines.append((g, float(b) - x, norm2))
    points = [g * (r / n2) for g, r, n2 in lines]
    if k == 2:
        for (g1, r1, _), (g2, r2, _) in itertools.combinations(lines, 2):
            mat = np.vstack([g1, g2])
            if abs(np.linalg.det(mat)) > 1e-14:
                points.append(np.linalg.solve(mat, [r1, r2]))
    if not points:
        return np.empty((0, k))
    points = np.array(points).reshape(-1, k)
    return points[np.linalg.norm(points, axis=1) <= radius]


def _grid(k: int, radius: float, resolution: int) -> np.ndarray:
    per_axis = resolution if k == 1 else max(2, min(resolution, int(MAX_GRID_POINTS ** (1 / k))))
    axis = np.linspace(-radius, radius, per_axis)
    if k == 1:
        uniform = axis[:, None]
    else:
        mesh = np.meshgrid(*([axis] * k), indexing="ij")
        uniform = np.stack([m.ravel() for m in mesh], axis=1)
        uniform = uniform[np.linalg.norm(uniform, axis=1) <= radius]
    # radial family: log-spaced radii along fixed directions, dense near 0
    if k == 1:
        directions = np.array([[1.0], [-1.0]])
    elif k == 2:
        angles = np.linspace(0, 2 * np.pi, 72, endpoint=False)
        directions = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    else:
        directions = np.vstack([np.eye(k), -np.eye(k)])
    radii = np.logspace(-8, np.log10(max(radius, 1e-8)), max(resolution // 4, 10))
    radial = (directions[:, None, :] * radii[None, :, None]).reshape(-1, k)
    return np.vstack([uniform, radial])


def _order_key(value: float, u: np.ndarray, scale: float):
    return (-round(value / scale, 12) if np.isfinite(value) else -value, round(float(np.linalg.norm(u)), 9), tuple(u))


def _pick(values: np.ndarray, points: np.ndarray) -> int:
    """Index of the best value; ties by smallest norm, then lexicographic."""
    finite = values[np.isfinite(values)]
    best = np.max(values)
    scale = max(1.0, float(np.max(np.abs(finite)))) if len(finite) else 1.0
    tied = np.flatnonzero(values >= best - TIE_TOL * scale) if np.isfinite(best) else np.flatnonzero(values == best)
    return min(tied, key=lambda i: (round(float(np.linalg.norm(points[i])), 9), tuple(points[i])))


def _compass(f: Callable[[np.ndarray], float], u0: np.ndarray, v0: float, step: float, tol: float, radius: float):
    """Compass search maximizing f inside the ball of the given radius."""
    u, v = u0.copy(), v0
    k = len(u)
    moves = np.vstack([np.eye(k), -np.eye(k)])
    iterations = 0
    while step >= tol and iterations < 10_000:
        iterations += 1
        improved = False
        for move in moves:
            cand = u + step * move
            norm = np.linalg.norm(cand)
            if norm > radius:
                cand = cand * (radius / norm)
            vc = f(cand)
            if vc > v:
                u, v, improved = cand, vc, True
                break
        if not improved:
            step /= 2
    return u, v


def _start_step(u: np.ndarray, radius: float, resolution: int) -> float:
    return min(2 * radius / resolution, max(0.1 * float(np.linalg.norm(u)), 1e-4))


def maximize_cl_psi(
    problem: OnePeriodProblem,
    consts: OnePeriodConstants,
    x: float,
    resolution: int = DEFAULT_RESOLUTION,
    refine_starts: int = REFINE_STARTS,
    tol: float = REFINE_TOL,
) -> OnePeriodSolution:
    """Global maximizer of the closure of Psi(x, .) over the ball of radius K1.

    Candidates are the origin, breakpoint preimages, a uniform grid per basis
    direction plus a radial log grid; Psi screens the grid, the closure is
    evaluated exactly on the best candidates, which are then refined by
    compass search.

    Parameters
    ----------
    problem: OnePeriodProblem
    consts: OnePeriodConstants
    x: float
        Wealth.
    resolution: int
        Grid points per basis direction.
    refine_starts: int
        Candidates refined by compass search.
    tol: float
        Final compass step.

    Returns
    -------
    OnePeriodSolution
    """
    k0, k1 = k_bounds(problem, consts, x)
    if not np.isfinite(k1):
        raise AssumptionFailureError("negative_part_integrable", f"Psi({x:g}, 0) = -inf so K1 is infinite.")
    basis = problem.basis
    k = len(basis)
    zero = np.zeros(problem.assets)
    base = cl_psi_detail(problem, x, zero)
    if k == 0:
        return OnePeriodSolution(h=zero, value=base.value, K0=k0, K1=k1, approximate=base.approximate)

    approximate = base.approximate

    def f(u: np.ndarray) -> float:
        nonlocal approximate
        closure = cl_psi_detail(problem, x, u @ basis)
        approximate = approximate or closure.approximate
        return closure.value

    grid = _grid(k, k1, resolution)
    screened = psi_many(problem, x, grid @ basis)
    top = grid[np.argsort(-np.nan_to_num(screened, nan=-np.inf), kind="stable")[:refine_starts]]
    exact = np.vstack([np.zeros((1, k)), _preimages(problem, x, basis, k1), top])
    values = np.array([f(u) for u in exact])
    order = np.argsort(-values, kind="stable")[:refine_starts]
    refined_u, refined_v = [exact[i] for i in range(len(exact))], list(values)
    for i in order:
        u, v = _compass(f, exact[i], values[i], _start_step(exact[i], k1, resolution), tol, k1)
        refined_u.append(u)
        refined_v.append(v)
    points, values = np.array(refined_u), np.array(refined_v)
    best = _pick(values, points)
    u, value = points[best], float(values[best])
    if value < base.value:
        u, value = np.zeros(k), base.value
    bound_active = float(np.linalg.norm(u)) >= k1 * (1 - 1e-9)
    if bound_active:
        logger.warning("Maximizer at x=%g sits on the K1 ball (|h| = %g)", x, np.linalg.norm(u))
    return OnePeriodSolution(h=u @ basis, value=value, K0=k0, K1=k1, bound_active=bound_active, approximate=approximate)


def sup_psi(
    problem: OnePeriodProblem,
    x: float,
    radius: float,
    resolution: int = DEFAULT_RESOLUTION,
    refine_starts: int = REFINE_STARTS,
    tol: float = REFINE_TOL,
) -> SupResult:
    """Candidate-search approximation of sup over |h| <= radius of Psi(x, h).

    The supremum may only be approached next to a breakpoint preimage; this
    is reported with ``attained=False`` and the limit value.
    """
    basis = problem.basis
    k = len(basis)
    zero = np.zeros(problem.assets)
    if k == 0:
        return SupResult(value=psi(problem, x, zero), h=zero)

    def f(u: np.ndarray) -> float:
        return psi(problem, x, u @ basis)

    preimages = _preimages(problem, x, basis, radius)
    grid = np.vstack([np.zeros((1, k)), preimages, _grid(k, radius, resolution)])
    values = psi_many(problem, x, grid @ basis)
    order = np.argsort(-np.nan_to_num(values, nan=-np.inf), kind="stable")[:refine_starts]
    points, vals = [grid[i] for i in range(len(grid))], list(values)
    for i in order:
        u, v = _compass(f, grid[i], values[i], _start_step(grid[i], radius, resolution), tol, radius)
        points.append(u)
        vals.append(v)
    points, vals = np.array(points), np.array(vals)
    best = _pick(vals, points)
    u, value = points[best], float(vals[best])

    # limit-only supremum next to a breakpoint preimage: Psi still rises
    # on the way to the anchor while Psi at the anchor falls short
    if len(preimages) and np.isfinite(value):
        distances = np.linalg.norm(preimages - u, axis=1)
        i = int(np.argmin(distances))
        anchor = preimages[i]
        scale = max(1.0, float(np.linalg.norm(anchor)))
        slack = 1e-9 * max(1.0, abs(value))
        near = 0 < distances[i] <= 1e-6 * scale
        if near and f(anchor) < value - slack and _rises_toward(f, u, value, anchor, distances[i] <= 1e-12 * scale):
            directions = np.vstack([np.eye(k), -np.eye(k)])
            limit = max(f(anchor + o * scale * d) for o in LIMIT_OFFSETS[-1:] for d in directions)
            logger.info("sup of Psi at x=%g is approached next to h=%s but not attained", x, anchor @ basis)
            return SupResult(value=max(value, limit), h=anchor @ basis, attained=False)
    return SupResult(value=value, h=u @ basis)


def _rises_toward(f: Callable[[np.ndarray], float], u: np.ndarray, value: float, anchor: np.ndarray, touching: bool) -> bool:
    """True when f increases strictly between u and the anchor.

    Below float resolution the halfway value may round to f(u); a tie then
    counts as rising.
    """
    halfway = f((u + anchor) / 2)
    quarter = f((u + 3 * anchor) / 4)
    if touching:
        return halfway >= value and quarter >= value
    return halfway > value and quarter >= halfway
