"""Random variables on finite weighted sample spaces.

``FiniteRandomVariable`` is a map from a finite outcome set to R^d; its law is
a :class:`~mfglab.measure.DiscreteMeasure`.  Couplings are explicit: two
variables interact (differences, inner products) only when they reference the
*same* :class:`SampleSpace` object.  Independent copies are built through the
explicit :func:`product_space` constructor, never implicitly.

The atomless sample space of the underlying theory is deliberately restricted
to finitely many outcomes: every witness used in this package is finitely
supported, and a monotonicity violation exhibited on a finite space remains a
violation on any richer space containing it.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import CouplingError, DomainError
from .measure import DiscreteMeasure

_WEIGHT_TOL = 1e-12


class SampleSpace:
    """Finitely many outcomes with positive probabilities summing to one."""

    __slots__ = ("weights",)

    def __init__(self, weights: Sequence[float]):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or len(w) < 1:
            raise ValueError("weights must be a nonempty 1-D sequence")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("outcome probabilities must be positive")
        if abs(float(w.sum()) - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"probabilities sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        self.weights = w

    def __len__(self) -> int:
        return len(self.weights)

    def __repr__(self) -> str:
        return f"SampleSpace(n={len(self)})"

    @staticmethod
    def uniform(n: int) -> "SampleSpace":
        return SampleSpace(np.full(n, 1.0 / n))


class FiniteRandomVariable:
    """One value per outcome of a shared :class:`SampleSpace`."""

    __slots__ = ("space", "values", "d")

    def __init__(self, space: SampleSpace, values: Sequence):
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            d = 1
        elif v.ndim == 2:
            d = v.shape[1]
        else:
            raise ValueError("values must be 1-D or (n, d)")
        if len(v) != len(space):
            raise ValueError("values length must match the sample space")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        v.setflags(write=False)
        self.space = space
        self.values = v
        self.d = d

    # -- algebra on a shared space -------------------------------------------
    def _check_coupled(self, other: "FiniteRandomVariable") -> None:
        if self.space is not other.space:
            raise CouplingError(
                "random variables live on different sample spaces; build an "
                "explicit coupling (same SampleSpace) or a product space first"
            )

    def __add__(self, other):
        if isinstance(other, FiniteRandomVariable):
            self._check_coupled(other)
            return FiniteRandomVariable(self.space, self.values + other.values)
        return FiniteRandomVariable(self.space, self.values + float(other))

    def __sub__(self, other):
        if isinstance(other, FiniteRandomVariable):
            self._check_coupled(other)
            return FiniteRandomVariable(self.space, self.values - other.values)
        return FiniteRandomVariable(self.space, self.values - float(other))

    def __mul__(self, scalar):
        return FiniteRandomVariable(self.space, self.values * float(scalar))

    __rmul__ = __mul__

    def map(self, f: Callable) -> "FiniteRandomVariable":
        vals = [f(float(v)) if self.d == 1 else f(v) for v in self.values]
        return FiniteRandomVariable(self.space, vals)

    def __repr__(self) -> str:
        return f"FiniteRandomVariable(values={self.values.tolist()!r})"

    @staticmethod
    def constant(space: SampleSpace, c: float) -> "FiniteRandomVariable":
        return FiniteRandomVariable(space, np.full(len(space), float(c)))


# -----------------------------------------------------------------------------
# Operations
# -----------------------------------------------------------------------------
def law(x: FiniteRandomVariable) -> DiscreteMeasure:
    """Distribution of ``x``: atoms are the values, weights the probabilities."""
    return DiscreteMeasure(x.values, x.space.weights)


def from_measure(m: DiscreteMeasure) -> FiniteRandomVariable:
    """Canonical representative with law ``m`` (drops zero-weight atoms)."""
    keep = m.weights > 0
    if not np.any(keep):
        raise ValueError("measure has no positive-weight atoms")
    w = m.weights[keep] / m.weights[keep].sum()
    return FiniteRandomVariable(SampleSpace(w), m.atoms[keep])


def expect(x: FiniteRandomVariable, f: Callable | None = None):
    """``E[f(X)]`` (``E[X]`` when ``f`` is omitted)."""
    if f is None:
        out = x.space.weights @ x.values
        return float(out) if x.d == 1 else out
    total = None
    for w, v in zip(x.space.weights, x.values):
        fv = np.asarray(f(float(v) if x.d == 1 else v), dtype=float)
        if not np.all(np.isfinite(fv)):
            raise DomainError(f"integrand is not finite at value {v!r}")
        total = w * fv if total is None else total + w * fv
    return float(total) if total.ndim == 0 else total


def inner(x: FiniteRandomVariable, y: FiniteRandomVariable) -> float:
    """L^2 pairing ``E[X . Y]`` of two variables coupled on one space."""
    x._check_coupled(y)
    if x.d == 1:
        return float(np.dot(x.space.weights, x.values * y.values))
    return float(np.dot(x.space.weights, np.sum(x.values * y.values, axis=1)))


def product_space(s1: SampleSpace, s2: SampleSpace) -> SampleSpace:
    """Independent product of two sample spaces (row-major outcome order)."""
    w = np.outer(s1.weights, s2.weights).ravel()
    return SampleSpace(w)


def independent_copies(
    x: FiniteRandomVariable, y: FiniteRandomVariable
) -> tuple[FiniteRandomVariable, FiniteRandomVariable]:
    """Lift ``x`` and ``y`` to a common product space on which they are independent."""
    space = product_space(x.space, y.space)
    n2 = len(y.space)
    xv = np.repeat(x.values, n2, axis=0)
    yv = np.tile(y.values, len(x.space)) if y.d == 1 else np.tile(y.values, (len(x.space), 1))
    return FiniteRandomVariable(space, xv), FiniteRandomVariable(space, yv)
