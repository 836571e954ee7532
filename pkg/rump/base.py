from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Union

import joblib
import numpy as np
import pandas as pd

from .custom_exceptions import InvalidArgumentError


def load(path: Union[str, Path]):
    """Load an object saved with `save`

    Parameters
    ==========
    path: str or Path
        file-like object to load from
    """

    return joblib.load(path)


class Persistable:
    def save(self, path: Union[str, Path]) -> None:
        """Save for later use

        Parameters
        ==========
        path: str or Path
            file-like object to save to
        """

        joblib.dump(self, path)


class MonotoneFunction(ABC):
    """Nondecreasing extended-real function of wealth.

    Subclasses provide the value, both one-sided limits and a (possibly
    partial) list of points where the function may jump.
    """

    @abstractmethod
    def __call__(self, x: float) -> float:
        pass

    def evaluate(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        return np.array([self(float(x)) for x in xs.ravel()]).reshape(xs.shape)

    @abstractmethod
    def right_limit(self, x: float) -> float:
        pass

    @abstractmethod
    def left_limit(self, x: float) -> float:
        pass

    def breakpoints(self) -> np.ndarray:
        return np.empty(0)

    def jump(self, x: float) -> float:
        """Right jump, the gap between the closure and the value."""
        value, right = self(x), self.right_limit(x)
        if right == value:
            return 0.0
        return right - value

    def is_continuous_at(self, x: float) -> bool:
        value = self(x)
        return self.left_limit(x) == value == self.right_limit(x)

    def __str__(self):
        return f"{self.__class__.__name__}"


@dataclass
class CheckReport(Persistable):
    """Outcome of an assumption check; violations are rows, not exceptions."""

    name: str
    passed: bool
    violations: pd.DataFrame = field(default_factory=pd.DataFrame)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "n_violations": int(len(self.violations)),
            "violations": self.violations.head(20).to_dict(orient="records"),
            "details": self.details,
        }


class Check(Persistable, ABC):
    """Abstract base class for all assumption checks"""

    def __init__(self):
        pass

    def check(self, utility, paths: Iterable) -> CheckReport:
        """Check an assumption on a utility at the given terminal nodes.

        Parameters
        ----------
        utility: MonotoneUtility
            Utility to audit.
        paths: iterable of tuple
            Terminal node paths, usually the reachable ones.

        Returns
        -------
        CheckReport
        """
        utility, paths = self.validate(utility, paths)
        return self._check(utility, paths)

    @abstractmethod
    def _check(self, utility, paths) -> CheckReport:
        """Check the assumption"""
        pass

    def validate(self, utility, paths):
        """Check that input is in correct format and possibly adjust"""
        if not hasattr(utility, "at"):
            raise InvalidArgumentError("utility", "a MonotoneUtility")
        paths = sorted(tuple(p) for p in paths)
        if len(paths) == 0:
            raise InvalidArgumentError("paths", "a nonempty collection of terminal paths")
        return utility, paths

    def __str__(self):
        return f"{self.__class__.__name__}"
