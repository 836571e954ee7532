"""Exact polyhedral predicates in rational arithmetic.

Inputs are converted with ``Fraction(float(v))`` which is the exact binary
value of the double, so every predicate below answers for the numbers that
are actually stored.
"""
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .custom_exceptions import (
    GuardExceededError,
    InfeasibleError,
    InvalidArgumentError,
    UnboundedError,
)

logger = logging.getLogger(__name__)

Q = Fraction
RationalVector = Tuple[Fraction, ...]

# Largest arrangement handled by feasible_sign_patterns unless told otherwise.
MAX_NORMALS = 12

SIGNS = (1, 0, -1)


def to_rational(vector) -> RationalVector:
    return tuple(Q(float(v)) for v in np.atleast_1d(vector))


def _dot(u: Sequence[Fraction], v: Sequence[Fraction]) -> Fraction:
    return sum((a * b for a, b in zip(u, v)), Q(0))


def _sub(u: Sequence[Fraction], v: Sequence[Fraction]) -> RationalVector:
    return tuple(a - b for a, b in zip(u, v))


def rank(rows: Sequence[Sequence[Fraction]]) -> int:
    """Rank of a rational matrix by Gauss elimination."""
    mat = [list(r) for r in rows]
    if not mat:
        return 0
    n_cols = len(mat[0])
    r = 0
    for col in range(n_cols):
        pivot = next((i for i in range(r, len(mat)) if mat[i][col] != 0), None)
        if pivot is None:
            continue
        mat[r], mat[pivot] = mat[pivot], mat[r]
        for i in range(len(mat)):
            if i != r and mat[i][col] != 0:
                k = mat[i][col] / mat[r][col]
                mat[i] = [a - k * b for a, b in zip(mat[i], mat[r])]
        r += 1
        if r == len(mat):
            break
    return r


@dataclass
class LPResult:
    x: List[Fraction]
    value: Fraction


class RationalSimplex:
    """Two-phase tableau simplex over the rationals with Bland's rule.

    Solves ``max c.x`` subject to ``A_eq x = b_eq``, ``A_ub x <= b_ub`` and
    ``x >= 0``.

    Parameters
    ----------
    c: sequence
        Objective coefficients.
    a_eq, b_eq: sequence, optional
        Equality constraints.
    a_ub, b_ub: sequence, optional
        Inequality constraints.
    """

    def __init__(self, c, a_eq=(), b_eq=(), a_ub=(), b_ub=()):
        self.n = len(c)
        self.c = [Q(v) for v in c]
        rows, rhs = [], []
        n_slack = len(a_ub)
        for i, (row, b) in enumerate(zip(a_ub, b_ub)):
            slack = [Q(0)] * n_slack
            slack[i] = Q(1)
            rows.append([Q(v) for v in row] + slack)
            rhs.append(Q(b))
        for row, b in zip(a_eq, b_eq):
            rows.append([Q(v) for v in row] + [Q(0)] * n_slack)
            rhs.append(Q(b))
        for i, b in enumerate(rhs):
            if b < 0:
                rows[i] = [-v for v in rows[i]]
                rhs[i] = -b
        self._rows = rows
        self._rhs = rhs
        self._n_struct = self.n + n_slack

    def _pivot(self, rows, rhs, basis, r, col):
        piv = rows[r][col]
        rows[r] = [v / piv for v in rows[r]]
        rhs[r] = rhs[r] / piv
        for i in range(len(rows)):
            if i != r and rows[i][col] != 0:
                k = rows[i][col]
                rows[i] = [a - k * b for a, b in zip(rows[i], rows[r])]
                rhs[i] = rhs[i] - k * rhs[r]
        basis[r] = col

    def _optimize(self, rows, rhs, basis, cost, allowed):
        while True:
            entering = None
            for j in allowed:
                if j in basis:
                    continue
                reduced = cost[j] - sum(
                    (cost[b] * rows[i][j] for i, b in enumerate(basis)), Q(0)
                )
                if reduced > 0:
                    entering = j
                    break
            if entering is None:
                return
            best = None
            for i, row in enumerate(rows):
                if row[entering] > 0:
                    ratio = rhs[i] / row[entering]
                    key = (ratio, basis[i])
                    if best is None or key < best[0]:
                        best = (key, i)
            if best is None:
                raise UnboundedError()
            self._pivot(rows, rhs, basis, best[1], entering)

    def solve(self) -> LPResult:
        m = len(self._rows)
        n_struct = self._n_struct
        rows = [row + [Q(1) if k == i else Q(0) for k in range(m)] for i, row in enumerate(self._rows)]
        rhs = list(self._rhs)
        basis = [n_struct + i for i in range(m)]

        # phase one: drive the artificial variables to zero
        cost = [Q(0)] * n_struct + [Q(-1)] * m
        self._optimize(rows, rhs, basis, cost, range(n_struct + m))
        infeasibility = sum((rhs[i] for i, b in enumerate(basis) if b >= n_struct), Q(0))
        if infeasibility > 0:
            raise InfeasibleError()

        keep = []
        for i, b in enumerate(basis):
            if b < n_struct:
                keep.append(i)
                continue
            col = next((j for j in range(n_struct) if rows[i][j] != 0), None)
            if col is not None:
                self._pivot(rows, rhs, basis, i, col)
                keep.append(i)
        rows = [rows[i][:n_struct] for i in keep]
        rhs = [rhs[i] for i in keep]
        basis = [basis[i] for i in keep]

        cost = self.c + [Q(0)] * (n_struct - self.n)
        self._optimize(rows, rhs, basis, cost, range(n_struct))
        x = [Q(0)] * n_struct
        for i, b in enumerate(basis):
            x[b] = rhs[i]
        value = _dot(self.c, x[: self.n])
        return LPResult(x=x[: self.n], value=value)


@dataclass(eq=False)
class AffineSubspace:
    """Affine subspace ``offset + span(basis)`` with a rational orthogonal basis."""

    offset: RationalVector
    basis: Tuple[RationalVector, ...] = field(default_factory=tuple)

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def ambient_dim(self) -> int:
        return len(self.offset)

    def _residual(self, v: Sequence[Fraction]) -> RationalVector:
        w = tuple(v)
        for b in self.basis:
            k = _dot(w, b) / _dot(b, b)
            w = tuple(wi - k * bi for wi, bi in zip(w, b))
        return w

    def contains_direction(self, v) -> bool:
        return all(c == 0 for c in self._residual(v))

    def contains(self, point) -> bool:
        return self.contains_direction(_sub(point, self.offset))

    @property
    def is_linear(self) -> bool:
        return self.contains((Q(0),) * self.ambient_dim)

    def same_as(self, other: "AffineSubspace") -> bool:
        return (
            self.ambient_dim == other.ambient_dim
            and self.dim == other.dim
            and self.contains(other.offset)
            and all(self.contains_direction(b) for b in other.basis)
        )

    def __eq__(self, other):
        if not isinstance(other, AffineSubspace):
            return NotImplemented
        return self.same_as(other)

    __hash__ = None

    def orthonormal_basis(self) -> np.ndarray:
        """Float orthonormal basis, one row per direction.

        Each row has its first nonzero coordinate positive, so in dimension
        one the basis of the whole line is exactly ``[[1.0]]``.
        """
        out = np.zeros((self.dim, self.ambient_dim))
        for i, b in enumerate(self.basis):
            v = np.array([float(c) for c in b])
            first = v[np.flatnonzero(v)[0]]
            v = v * np.sign(first)
            nonzero = np.flatnonzero(v)
            if len(nonzero) == 1:
                v = np.zeros_like(v)
                v[nonzero[0]] = 1.0
            else:
                v = v / np.linalg.norm(v)
            out[i] = v
        return out

    def __str__(self):
        return f"{self.__class__.__name__}(dim={self.dim}, ambient_dim={self.ambient_dim})"


def affine_hull(points: Iterable) -> AffineSubspace:
    """Smallest affine subspace containing a finite set of points.

    Parameters
    ----------
    points: iterable of array-like
        Points of equal length; floats are taken at their exact binary value.

    Returns
    -------
    AffineSubspace
    """
    pts = [p if isinstance(p, tuple) and all(isinstance(c, Fraction) for c in p) else to_rational(p) for p in points]
    if len(pts) == 0:
        raise InvalidArgumentError("points", "a nonempty collection")
    offset = pts[0]
    basis: List[RationalVector] = []
    for p in pts[1:]:
        w = _sub(p, offset)
        for b in basis:
            k = _dot(w, b) / _dot(b, b)
            w = tuple(wi - k * bi for wi, bi in zip(w, b))
        if any(c != 0 for c in w):
            basis.append(w)
    return AffineSubspace(offset=offset, basis=tuple(basis))


def zero_in_rel_interior(points: Iterable) -> bool:
    """Whether 0 lies in the relative interior of the convex hull of points.

    Decided by the linear program ``max t`` over ``lambda_i = mu_i + t`` with
    ``sum lambda_i y_i = 0``, ``sum lambda_i = 1`` and ``mu, t >= 0``: the
    optimum is positive exactly when 0 is a strictly positive convex
    combination of the points.
    """
    pts = [to_rational(p) for p in points]
    if len(pts) == 0:
        raise InvalidArgumentError("points", "a nonempty collection")
    n, d = len(pts), len(pts[0])
    column_sums = [sum((p[k] for p in pts), Q(0)) for k in range(d)]
    a_eq = [[p[k] for p in pts] + [column_sums[k]] for k in range(d)]
    a_eq.append([Q(1)] * n + [Q(n)])
    b_eq = [Q(0)] * d + [Q(1)]
    c = [Q(0)] * n + [Q(1)]
    try:
        result = RationalSimplex(c, a_eq=a_eq, b_eq=b_eq).solve()
    except InfeasibleError:
        return False
    return result.value > 0


def _pattern_is_feasible(normals: Tuple[RationalVector, ...], signs: Tuple[int, ...]) -> bool:
    k = len(normals[0])
    active = [(w, s) for w, s in zip(normals, signs)]
    if all(s == 0 for _, s in active):
        return rank([w for w, _ in active]) < k

    # variables: delta_plus (k), delta_minus (k), margin s; delta = plus - minus
    n_var = 2 * k + 1
    a_ub, b_ub, a_eq, b_eq = [], [], [], []
    for i in range(2 * k + 1):
        row = [Q(0)] * n_var
        row[i] = Q(1)
        a_ub.append(row)
        b_ub.append(Q(1))
    for w, s in active:
        lin = list(w) + [-c for c in w]
        if s == 0:
            a_eq.append(lin + [Q(0)])
            b_eq.append(Q(0))
        else:
            a_ub.append([-s * c for c in lin] + [Q(1)])
            b_ub.append(Q(0))
    c = [Q(0)] * (2 * k) + [Q(1)]
    try:
        result = RationalSimplex(c, a_eq=a_eq, b_eq=b_eq, a_ub=a_ub, b_ub=b_ub).solve()
    except InfeasibleError:
        return False
    return result.value > 0


@lru_cache(maxsize=4096)
def _enumerate_patterns(normals, allowed) -> Tuple[Tuple[int, ...], ...]:
    m = len(normals)
    found = []

    def extend(prefix):
        j = len(prefix)
        if j == m:
            found.append(prefix)
            return
        for s in allowed[j]:
            candidate = prefix + (s,)
            if _pattern_is_feasible(normals[: j + 1], candidate):
                extend(candidate)

    extend(())
    return tuple(found)


def feasible_sign_patterns(
    normals: Sequence,
    allowed: Optional[Dict[int, Iterable[int]]] = None,
    max_normals: Optional[int] = MAX_NORMALS,
) -> List[Tuple[int, ...]]:
    """Sign vectors realized by nonzero directions against a set of normals.

    A pattern ``sigma`` is returned when some direction ``delta != 0`` has
    ``sign(delta . w_j) == sigma_j`` for every normal. Prefixes are extended
    one normal at a time and each prefix is verified by an exact LP that
    maximizes a margin for the strict signs, so infeasible branches are cut
    early.

    Parameters
    ----------
    normals: sequence of array-like
        Normal vectors, all of the same length.
    allowed: dict, optional
        Restricts the signs tried for some normals, e.g. ``{0: (1,)}``.
    max_normals: int, optional
        Guard on the number of normals, None disables it.

    Returns
    -------
    list of tuple
        Patterns with entries in {1, 0, -1}, in depth-first order (+, 0, -).
    """
    if max_normals is not None and len(normals) > max_normals:
        raise GuardExceededError("number of normals", len(normals), max_normals)
    if len(normals) == 0:
        return []
    rational = tuple(
        n if isinstance(n, tuple) and all(isinstance(c, Fraction) for c in n) else to_rational(n)
        for n in normals
    )
    allowed = allowed or {}
    signs = tuple(tuple(allowed.get(j, SIGNS)) for j in range(len(rational)))
    patterns = _enumerate_patterns(rational, signs)
    logger.debug("%d feasible sign patterns for %d normals", len(patterns), len(rational))
    return list(patterns)
