"""Extended-real arithmetic on plain floats.

Values are floats in [-inf, +inf]. Sums follow the convention
(+inf) + (-inf) = -inf and products follow 0 * (+-inf) = 0, so an
expectation never produces NaN.
"""
import math
from typing import Iterable

import numpy as np

INF = math.inf
NEG_INF = -math.inf


def xadd(a: float, b: float) -> float:
    if a == NEG_INF or b == NEG_INF:
        return NEG_INF
    return a + b


def xneg(a: float) -> float:
    return -a


def xsub(a: float, b: float) -> float:
    return xadd(a, -b)


def xmul(a: float, b: float) -> float:
    if a == 0 or b == 0:
        return 0.0
    return a * b


def xsum(values: Iterable[float]) -> float:
    total = 0.0
    for v in values:
        if v == NEG_INF:
            return NEG_INF
        total += v
    return total


def positive_part(a: float) -> float:
    return a if a > 0 else 0.0


def negative_part(a: float) -> float:
    return -a if a < 0 else 0.0


def expectation(probs, values) -> float:
    """Expectation of extended-real values under a probability vector.

    Atoms with zero probability are skipped whatever their value.

    Parameters
    ----------
    probs: array-like
        Probability vector.
    values: array-like
        Extended-real values, one per atom.

    Returns
    -------
    float
        The expectation, -inf as soon as a charged atom is -inf.
    """
    return xsum(xmul(p, v) for p, v in zip(probs, values) if p > 0)


def expectation_many(probs: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Row-wise expectations of a (n_points, n_atoms) value array."""
    probs = np.asarray(probs, dtype=float)
    values = np.asarray(values, dtype=float)
    charged = probs > 0
    if not charged.any():
        return np.zeros(values.shape[0])
    sub = values[:, charged]
    with np.errstate(invalid="ignore"):
        out = sub @ probs[charged]
    out[np.isneginf(sub).any(axis=1)] = NEG_INF
    return out


def is_finite(a: float) -> bool:
    return math.isfinite(a)
