"""Checks of the growth, negativity and regularity assumptions on a utility."""
import logging
from typing import Mapping, Optional, Union

import numpy as np
import pandas as pd
from numba import jit

from .base import Check, CheckReport
from .custom_exceptions import InvalidArgumentError
from .market import Path, path_str
from .utility import AECertificate

logger = logging.getLogger(__name__)

# Relative tolerance on the AE inequality, absorbs rounding in lambda**gamma.
AE_TOLERANCE = 1e-9

# Offsets placed on both sides of every breakpoint in the audit grids.
BREAKPOINT_OFFSETS = (0.0, 1e-9, 1e-6, 1e-3, 1.0)


def default_lambdas(n: int = 25) -> np.ndarray:
    return np.logspace(0, 6, n)


def audit_grid(breakpoints: np.ndarray, max_abs: float = 1e6, n: int = 40) -> np.ndarray:
    """Symmetric log grid up to max_abs plus breakpoints and offsets around them."""
    side = np.logspace(-3, np.log10(max_abs), n)
    around = [b + s * o for b in breakpoints for o in BREAKPOINT_OFFSETS for s in (-1.0, 1.0)]
    return np.unique(np.concatenate([-side, [0.0], side, np.asarray(around, dtype=float)]))


@jit(nopython=True, cache=True)
def _ae_slacks(u_scaled, u_base, factors, c, tol):
    """Slack rhs - lhs of U(lam x) <= lam**gamma (U(x) + C) on a (lam, x) grid.

    ``factors`` holds lam**gamma per row. Returns the slack array and a
    violation mask; infinite sides follow -inf + inf = -inf.
    """
    n_lam, n_x = u_scaled.shape
    slack = np.zeros((n_lam, n_x))
    bad = np.zeros((n_lam, n_x), dtype=np.bool_)
    for i in range(n_lam):
        for j in range(n_x):
            base = u_base[j]
            if base == -np.inf:
                rhs = -np.inf
            else:
                rhs = factors[i] * (base + c)
            lhs = u_scaled[i, j]
            if lhs == rhs:
                slack[i, j] = 0.0
            elif lhs == -np.inf or rhs == np.inf:
                slack[i, j] = np.inf
            elif lhs == np.inf or rhs == -np.inf:
                slack[i, j] = -np.inf
                bad[i, j] = True
            else:
                slack[i, j] = rhs - lhs
                scale = max(1.0, abs(lhs), abs(rhs))
                if slack[i, j] < -tol * scale:
                    bad[i, j] = True
    return slack, bad


class AECheck(Check):
    """Asymptotic elasticity on a (lambda, x) audit grid.

    Parameters
    ----------
    certificate: AECertificate
        Exponents, constants and eta; validated on construction.
    lambdas: np.ndarray, optional
        Scales >= 1, log-spaced up to 1e6 by default.
    max_abs: float
        Largest |x| on the grid.
    """

    def __init__(self, certificate: AECertificate, lambdas: Optional[np.ndarray] = None, max_abs: float = 1e6):
        super().__init__()
        if not isinstance(certificate, AECertificate):
            raise InvalidArgumentError("certificate", "an AECertificate")
        self._certificate = certificate
        self._lambdas = default_lambdas() if lambdas is None else np.asarray(lambdas, dtype=float)
        if (self._lambdas < 1).any():
            raise InvalidArgumentError("lambdas", "all >= 1")
        self._max_abs = max_abs

    def _check(self, utility, paths) -> CheckReport:
        rows = []
        n_pairs = 0
        for path in paths:
            c = self._certificate.c_at(path)
            if not np.isfinite(c):
                continue
            function = utility.at(path)
            xs = audit_grid(function.breakpoints(), self._max_abs)
            u_base = function.evaluate(xs)
            u_scaled = function.evaluate(np.outer(self._lambdas, xs))
            for gamma in (self._certificate.gamma_hi, self._certificate.gamma_lo):
                slack, bad = _ae_slacks(u_scaled, u_base, self._lambdas**gamma, c, AE_TOLERANCE)
                n_pairs += bad.size
                for i, j in zip(*np.nonzero(bad)):
                    rows.append(
                        {
                            "node": path_str(path),
                            "gamma": gamma,
                            "lam": float(self._lambdas[i]),
                            "x": float(xs[j]),
                            "slack": float(slack[i, j]),
                        }
                    )
        violations = pd.DataFrame(rows, columns=["node", "gamma", "lam", "x", "slack"])
        if len(violations):
            logger.info("AE check: %d violations", len(violations))
        return CheckReport(
            name="asymptotic_elasticity",
            passed=len(violations) == 0,
            violations=violations,
            details={"certificate": self._certificate.to_dict(), "pairs_checked": n_pairs},
        )

    def __str__(self):
        cert = self._certificate
        return f"{self.__class__.__name__}(gamma_lo={cert.gamma_lo}, gamma_hi={cert.gamma_hi}, eta={cert.eta})"


class NegativityCheck(Check):
    """U(X_low) < -C on every audited terminal node.

    Also reports whether U(X_low) + C is finite and nonzero, so that its
    inverse is finite.

    Parameters
    ----------
    x_low: float or dict
        Negative wealth level, either global or per terminal node.
    certificate: AECertificate
        Supplies the constant C per node.
    """

    def __init__(self, x_low: Union[float, Mapping[Path, float]], certificate: AECertificate):
        super().__init__()
        self._x_low = x_low
        self._certificate = certificate

    def _x_low_at(self, path: Path) -> float:
        if isinstance(self._x_low, Mapping):
            return float(self._x_low[tuple(path)])
        return float(self._x_low)

    def validate(self, utility, paths):
        utility, paths = super().validate(utility, paths)
        for path in paths:
            if not self._x_low_at(path) < 0:
                raise InvalidArgumentError(f"X_low at {path_str(path)}", "negative")
        return utility, paths

    def _check(self, utility, paths) -> CheckReport:
        rows = []
        inverse_finite = True
        for path in paths:
            x_low = self._x_low_at(path)
            value = utility.at(path)(x_low)
            c = self._certificate.c_at(path)
            gap = value + c if np.isfinite(value) else value
            if not gap < 0:
                rows.append({"node": path_str(path), "x_low": x_low, "value": value, "minus_C": -c})
            if not np.isfinite(gap) or gap == 0:
                inverse_finite = False
        violations = pd.DataFrame(rows, columns=["node", "x_low", "value", "minus_C"])
        return CheckReport(
            name="negativity",
            passed=len(violations) == 0,
            violations=violations,
            details={"inverse_gap_finite": inverse_finite},
        )


class TypeACheck(Check):
    """Regularity required for existence of an optimal strategy.

    Passes when (a) there is no jump at any breakpoint, (b)
    U >= -C1 (1 + |x|**p) on the audit grid and (c) U(1) < +inf.

    Parameters
    ----------
    c1: float
        Nonnegative constant of the polynomial lower bound.
    p_exp: float
        Exponent of the polynomial lower bound, at least 1.
    """

    def __init__(self, c1: float = 1.0, p_exp: float = 1.0, max_abs: float = 1e6):
        super().__init__()
        if c1 < 0:
            raise InvalidArgumentError("C1", "nonnegative")
        if p_exp < 1:
            raise InvalidArgumentError("p", ">= 1")
        self._c1 = c1
        self._p_exp = p_exp
        self._max_abs = max_abs

    def _check(self, utility, paths) -> CheckReport:
        rows = []
        for path in paths:
            function = utility.at(path)
            node = path_str(path)
            for b in function.breakpoints():
                if function.jump(b) != 0:
                    rows.append({"node": node, "condition": "usc", "x": float(b), "value": function.jump(b)})
            xs = audit_grid(function.breakpoints(), self._max_abs)
            values = function.evaluate(xs)
            bound = -self._c1 * (1 + np.abs(xs) ** self._p_exp)
            for x, v in zip(xs[values < bound], values[values < bound]):
                rows.append({"node": node, "condition": "lower_bound", "x": float(x), "value": float(v)})
            if not function(1.0) < np.inf:
                rows.append({"node": node, "condition": "upper_integrability", "x": 1.0, "value": np.inf})
        violations = pd.DataFrame(rows, columns=["node", "condition", "x", "value"])
        return CheckReport(
            name="type_a",
            passed=len(violations) == 0,
            violations=violations,
            details={"C1": self._c1, "p": self._p_exp},
        )

    def __str__(self):
        return f"{self.__class__.__name__}(C1={self._c1}, p={self._p_exp})"


def check_ae(utility, certificate: AECertificate, paths, lambdas=None) -> CheckReport:
    return AECheck(certificate, lambdas).check(utility, paths)


def check_negativity(utility, x_low, certificate: AECertificate, paths) -> CheckReport:
    return NegativityCheck(x_low, certificate).check(utility, paths)


def check_type_a(utility, c1: float, p_exp: float, paths) -> CheckReport:
    return TypeACheck(c1, p_exp).check(utility, paths)
