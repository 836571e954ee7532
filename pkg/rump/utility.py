"""Nondecreasing piecewise utilities built from a closed-form segment catalog.

A piecewise utility with breakpoints ``b_1 < ... < b_m`` has ``m + 1``
segments, one per open interval, and a stored value at every breakpoint.
Segments are continuous on the closure of their interval, so the left and
right limits at a breakpoint are exact segment evaluations.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path as FilePath
from typing import ClassVar, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .base import MonotoneFunction
from .custom_exceptions import (
    InvalidCertificateError,
    NonMonotoneUtilityError,
    UnknownNodeError,
    UtilitySpecError,
)
from .market import Path, parse_path, path_str

logger = logging.getLogger(__name__)

# Points per side of the dense grid used to audit monotonicity.
AUDIT_POINTS = 200


@dataclass(frozen=True)
class Segment:
    kind: ClassVar[str] = ""

    def __call__(self, x):
        raise NotImplementedError

    def validate(self):
        pass

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        out.update(self.__dict__)
        return out


@dataclass(frozen=True)
class Constant(Segment):
    kind: ClassVar[str] = "constant"
    k: float = 0.0

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.k) if np.ndim(x) else float(self.k)


@dataclass(frozen=True)
class Affine(Segment):
    kind: ClassVar[str] = "affine"
    a: float = 1.0
    k: float = 0.0

    def __call__(self, x):
        return self.a * np.asarray(x, dtype=float) + self.k if np.ndim(x) else self.a * x + self.k

    def validate(self):
        if self.a < 0:
            raise UtilitySpecError("affine segment needs a >= 0")


@dataclass(frozen=True)
class SignedPower(Segment):
    """``a * sign(x - c) * |x - c|**gamma + k``"""

    kind: ClassVar[str] = "power"
    a: float = 1.0
    c: float = 0.0
    gamma: float = 1.0
    k: float = 0.0

    def __call__(self, x):
        z = np.asarray(x, dtype=float) - self.c
        out = self.a * np.sign(z) * np.abs(z) ** self.gamma + self.k
        return out if np.ndim(x) else float(out)

    def validate(self):
        if self.a < 0 or self.gamma <= 0:
            raise UtilitySpecError("power segment needs a >= 0 and gamma > 0")


@dataclass(frozen=True)
class Exponential(Segment):
    """``a * exp(lam * (x - c)) + k``"""

    kind: ClassVar[str] = "exp"
    a: float = 1.0
    lam: float = 1.0
    c: float = 0.0
    k: float = 0.0

    def __call__(self, x):
        out = self.a * np.exp(self.lam * (np.asarray(x, dtype=float) - self.c)) + self.k
        return out if np.ndim(x) else float(out)

    def validate(self):
        if self.a * self.lam < 0:
            raise UtilitySpecError("exp segment needs a * lam >= 0")


@dataclass(frozen=True)
class NegInfPlateau(Segment):
    kind: ClassVar[str] = "neg_inf"

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=float), -np.inf) if np.ndim(x) else -np.inf


@dataclass(frozen=True)
class PosInfPlateau(Segment):
    kind: ClassVar[str] = "pos_inf"

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=float), np.inf) if np.ndim(x) else np.inf


SEGMENTS = {cls.kind: cls for cls in (Constant, Affine, SignedPower, Exponential, NegInfPlateau, PosInfPlateau)}


def segment_from_dict(document: Mapping) -> Segment:
    params = dict(document)
    kind = params.pop("kind", None)
    if kind not in SEGMENTS:
        raise UtilitySpecError(f"unknown segment kind '{kind}', expected one of {sorted(SEGMENTS)}")
    try:
        segment = SEGMENTS[kind](**{k: float(v) for k, v in params.items()})
    except TypeError as e:
        raise UtilitySpecError(f"bad parameters for segment '{kind}': {e}")
    segment.validate()
    return segment


class PiecewiseUtility(MonotoneFunction):
    """Nondecreasing extended-real function with finitely many breakpoints.

    Parameters
    ----------
    breakpoints: sequence of float
        Strictly increasing finite breakpoints.
    segments: sequence of Segment
        One more segment than breakpoints, left to right.
    values: sequence of float or str, optional
        Value at each breakpoint, or "left"/"right" to take that limit.
        Defaults to "left".
    """

    def __init__(self, breakpoints: Sequence[float], segments: Sequence[Segment], values=None, node: Path = ()):
        self._breakpoints = np.asarray(breakpoints, dtype=float).reshape(-1)
        self._segments = tuple(segments)
        for segment in self._segments:
            segment.validate()
        if len(self._segments) != len(self._breakpoints) + 1:
            raise UtilitySpecError(
                f"{len(self._breakpoints)} breakpoints need {len(self._breakpoints) + 1} segments, got {len(self._segments)}"
            )
        if not np.isfinite(self._breakpoints).all() or (np.diff(self._breakpoints) <= 0).any():
            raise UtilitySpecError("breakpoints must be finite and strictly increasing")
        self._left = np.array([self._segments[i](b) for i, b in enumerate(self._breakpoints)], dtype=float)
        self._right = np.array([self._segments[i + 1](b) for i, b in enumerate(self._breakpoints)], dtype=float)
        if values is None or (isinstance(values, str) and values == "left"):
            self._values = self._left.copy()
        elif isinstance(values, str) and values == "right":
            self._values = self._right.copy()
        else:
            self._values = np.asarray(values, dtype=float).reshape(-1)
            if self._values.shape != self._breakpoints.shape:
                raise UtilitySpecError("one value per breakpoint is required")
        self.check_monotone(node)

    @property
    def segments(self) -> Tuple[Segment, ...]:
        return self._segments

    def breakpoints(self) -> np.ndarray:
        return self._breakpoints.copy()

    def _index(self, x: float) -> Tuple[int, bool]:
        i = int(np.searchsorted(self._breakpoints, x, side="left"))
        at = i < len(self._breakpoints) and self._breakpoints[i] == x
        return i, at

    def __call__(self, x: float) -> float:
        i, at = self._index(x)
        if at:
            return float(self._values[i])
        return float(self._segments[i](x))

    def evaluate(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        idx = np.searchsorted(self._breakpoints, xs, side="left")
        out = np.empty(xs.shape)
        for i, segment in enumerate(self._segments):
            mask = idx == i
            if mask.any():
                out[mask] = segment(xs[mask])
        if len(self._breakpoints):
            clipped = np.minimum(idx, len(self._breakpoints) - 1)
            at = self._breakpoints[clipped] == xs
            out[at] = self._values[clipped[at]]
        return out

    def right_limit(self, x: float) -> float:
        i, at = self._index(x)
        return float(self._right[i]) if at else self(x)

    def left_limit(self, x: float) -> float:
        i, at = self._index(x)
        return float(self._left[i]) if at else self(x)

    def check_monotone(self, node: Path = ()) -> None:
        """Raise if the function decreases on the audit grid or at a breakpoint."""
        for i, b in enumerate(self._breakpoints):
            if not (self._left[i] <= self._values[i] <= self._right[i]):
                raise NonMonotoneUtilityError(path_str(node), b)
        span = max(1.0, float(np.max(np.abs(self._breakpoints), initial=0.0)))
        grid = np.concatenate(
            [
                -np.logspace(-6, 6, AUDIT_POINTS) * span,
                np.logspace(-6, 6, AUDIT_POINTS) * span,
                self._breakpoints,
                self._breakpoints - 1e-9 * span,
                self._breakpoints + 1e-9 * span,
                [0.0],
            ]
        )
        grid = np.unique(grid)
        values = self.evaluate(grid)
        scale = np.maximum(1.0, np.abs(np.where(np.isfinite(values), values, 0.0)))
        bad = values[:-1] > values[1:] + 1e-9 * scale[1:]
        if bad.any():
            raise NonMonotoneUtilityError(path_str(node), float(grid[:-1][bad][0]))

    def to_dict(self) -> dict:
        return {
            "breakpoints": [float(b) for b in self._breakpoints],
            "segments": [s.to_dict() for s in self._segments],
            "values": [float(v) for v in self._values],
        }

    def __str__(self):
        kinds = ",".join(s.kind for s in self._segments)
        return f"{self.__class__.__name__}(breakpoints={list(self._breakpoints)}, segments=[{kinds}])"


@dataclass(frozen=True, eq=False)
class MonotoneUtility:
    """Random utility: one piecewise function per terminal node.

    Nodes without an override share the default function.
    """

    default: PiecewiseUtility
    overrides: Mapping[Path, PiecewiseUtility] = field(default_factory=dict)

    def at(self, path: Path) -> PiecewiseUtility:
        return self.overrides.get(tuple(path), self.default)

    def validate_for(self, terminal_paths) -> None:
        terminal = set(tuple(p) for p in terminal_paths)
        for path in self.overrides:
            if path not in terminal:
                raise UnknownNodeError(path_str(path), "Utility override at a non-terminal or unknown node")

    def __str__(self):
        return f"{self.__class__.__name__}(default={self.default}, overrides={len(self.overrides)})"


@dataclass(frozen=True)
class AECertificate:
    """Asymptotic-elasticity data: exponents, per-node constant C and eta.

    Parameters
    ----------
    gamma_lo: float
        Lower exponent, positive.
    gamma_hi: float
        Upper exponent, larger than gamma_lo.
    C: float
        Constant used at nodes without an override.
    C_overrides: dict
        Per terminal node constants.
    eta: float, optional
        In (0, 1) with gamma_lo < eta * gamma_hi; defaults to the midpoint
        (gamma_lo / gamma_hi + 1) / 2.
    """

    gamma_lo: float
    gamma_hi: float
    C: float = 0.0
    C_overrides: Mapping[Path, float] = field(default_factory=dict)
    eta: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.gamma_lo < self.gamma_hi:
            raise InvalidCertificateError("such that 0 < gamma_lo < gamma_hi")
        if self.C < 0 or any(c < 0 for c in self.C_overrides.values()):
            raise InvalidCertificateError("such that C >= 0")
        if self.eta is None:
            object.__setattr__(self, "eta", (self.gamma_lo / self.gamma_hi + 1) / 2)
        if not 0 < self.eta < 1 or not self.gamma_lo < self.eta * self.gamma_hi:
            raise InvalidCertificateError("such that 0 < eta < 1 and gamma_lo < eta * gamma_hi")

    def c_at(self, path: Path) -> float:
        return float(self.C_overrides.get(tuple(path), self.C))

    def with_eta(self, eta: float) -> "AECertificate":
        return AECertificate(self.gamma_lo, self.gamma_hi, self.C, self.C_overrides, eta)

    def to_dict(self) -> dict:
        return {
            "gamma_lo": self.gamma_lo,
            "gamma_hi": self.gamma_hi,
            "C": self.C,
            "C_overrides": {path_str(p): c for p, c in self.C_overrides.items()},
            "eta": self.eta,
        }


@dataclass(frozen=True)
class UtilityAssumptions:
    """Assumption data shipped with a utility spec."""

    certificate: Optional[AECertificate] = None
    x_low: Optional[float] = None
    x_low_overrides: Mapping[Path, float] = field(default_factory=dict)
    c1: Optional[float] = None
    p_exp: Optional[float] = None

    def x_low_at(self, path: Path) -> Optional[float]:
        return self.x_low_overrides.get(tuple(path), self.x_low)


def _piecewise_from_dict(document: Mapping, node: Path = ()) -> PiecewiseUtility:
    if "segments" not in document:
        raise UtilitySpecError(f"{path_str(node)}: field 'segments' is missing")
    segments = [segment_from_dict(s) for s in document["segments"]]
    return PiecewiseUtility(document.get("breakpoints", []), segments, document.get("values"), node)


def _per_node(raw, where: str) -> Tuple[float, Dict[Path, float]]:
    if isinstance(raw, Mapping):
        overrides = {parse_path(k): float(v) for k, v in raw.items() if k != "default"}
        return float(raw.get("default", 0.0)), overrides
    try:
        return float(raw), {}
    except (TypeError, ValueError):
        raise UtilitySpecError(f"{where} must be a number or a per-node mapping")


def load_utility(document: Mapping) -> Tuple[MonotoneUtility, UtilityAssumptions]:
    """Build a utility and its assumption data from a JSON document.

    Parameters
    ----------
    document: dict
        ``breakpoints``, ``segments``, optional ``values``,
        ``per_node_overrides`` keyed by node path ("/up/dn"),
        ``ae_certificate`` {gamma_lo, gamma_hi, C, eta}, ``negativity``
        {X_low} and ``type_a`` {C1, p}.

    Returns
    -------
    MonotoneUtility, UtilityAssumptions
    """
    if not isinstance(document, Mapping):
        raise UtilitySpecError("utility document must be a JSON object")
    default = _piecewise_from_dict(document)
    overrides = {
        parse_path(key): _piecewise_from_dict(sub, parse_path(key))
        for key, sub in document.get("per_node_overrides", {}).items()
    }

    certificate = None
    if "ae_certificate" in document:
        raw = document["ae_certificate"]
        try:
            c_default, c_overrides = _per_node(raw.get("C", 0.0), "ae_certificate.C")
            certificate = AECertificate(
                gamma_lo=float(raw["gamma_lo"]),
                gamma_hi=float(raw["gamma_hi"]),
                C=c_default,
                C_overrides=c_overrides,
                eta=None if raw.get("eta") is None else float(raw["eta"]),
            )
        except KeyError as e:
            raise UtilitySpecError(f"ae_certificate: field {e} is missing")

    x_low, x_low_overrides = None, {}
    if "negativity" in document:
        x_low, x_low_overrides = _per_node(document["negativity"].get("X_low"), "negativity.X_low")

    c1 = p_exp = None
    if "type_a" in document:
        c1 = float(document["type_a"].get("C1", 1.0))
        p_exp = float(document["type_a"].get("p", 1.0))

    assumptions = UtilityAssumptions(certificate, x_low, x_low_overrides, c1, p_exp)
    return MonotoneUtility(default, overrides), assumptions


def read_utility(path: Union[str, FilePath]) -> Tuple[MonotoneUtility, UtilityAssumptions]:
    with open(path, "r") as fh:
        try:
            document = json.load(fh)
        except json.JSONDecodeError as e:
            raise UtilitySpecError(f"{path}: not valid JSON ({e.msg})")
    return load_utility(document)


def eval_u(utility: MonotoneUtility, node: Path, x: float) -> float:
    return utility.at(node)(x)


def cl_eval(utility: MonotoneUtility, node: Path, x: float) -> float:
    """Closure of the utility, its right limit at x."""
    return utility.at(node).right_limit(x)


def left_eval(utility: MonotoneUtility, node: Path, x: float) -> float:
    return utility.at(node).left_limit(x)


def jump(utility: MonotoneUtility, node: Path, x: float) -> float:
    return utility.at(node).jump(x)


def ce_utility() -> PiecewiseUtility:
    """x below zero and 1 above, with U(0) = 0."""
    return PiecewiseUtility([0.0], [Affine(a=1.0, k=0.0), Constant(k=1.0)])


def s_shape_utility() -> PiecewiseUtility:
    """-|x|**1.5 below zero and x**0.5 above."""
    return PiecewiseUtility(
        [0.0], [SignedPower(a=1.0, c=0.0, gamma=1.5, k=0.0), SignedPower(a=1.0, c=0.0, gamma=0.5, k=0.0)]
    )
