"""Finitely supported probability measures on R^d.

A :class:`DiscreteMeasure` is a list of atoms with nonnegative weights summing
to one.  It stands in for a general probability measure with finite second
moment: every scenario in the catalog uses Dirac masses or finite mixtures, so
the discrete representation is exact for the reproduction suite, and arbitrary
measures can be approximated by user-supplied atom clouds.

Provided operations: integration of test functions, push-forward under a map,
moments, and the exact 1-D quadratic Wasserstein distance (quantile matching),
used as an equality/closeness diagnostic.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, DomainError

_WEIGHT_TOL = 1e-12


class DiscreteMeasure:
    """Probability measure ``sum_i w_i * delta_{x_i}`` with finitely many atoms.

    Parameters
    ----------
    atoms : sequence of floats (d = 1) or of length-d sequences
        Atom locations.  Coincident atoms are allowed and are *not* merged,
        so atom identity survives push-forwards.
    weights : sequence of nonnegative floats
        Must sum to 1 within 1e-12; inputs off by more are rejected rather
        than silently renormalized.
    """

    __slots__ = ("atoms", "weights", "d")

    def __init__(self, atoms: Sequence, weights: Sequence[float]):
        a = np.asarray(atoms, dtype=float)
        w = np.asarray(weights, dtype=float)
        if a.ndim == 1:
            d = 1
        elif a.ndim == 2:
            d = a.shape[1]
        else:
            raise ValueError("atoms must be a 1-D sequence or an (n, d) array")
        if w.ndim != 1 or len(w) != len(a) or len(a) < 1:
            raise ValueError("atoms and weights must have equal length >= 1")
        if not np.all(np.isfinite(a)):
            raise ValueError("atoms must be finite")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        if abs(float(w.sum()) - 1.0) > _WEIGHT_TOL:
            raise ValueError(
                f"weights sum to {w.sum()!r}, off from 1 by more than {_WEIGHT_TOL}"
            )
        a.setflags(write=False)
        w.setflags(write=False)
        self.atoms = a
        self.weights = w
        self.d = d

    # -- constructors -------------------------------------------------------
    @staticmethod
    def dirac(x) -> "DiscreteMeasure":
        """Unit mass at a single point."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            return DiscreteMeasure([float(x)], [1.0])
        return DiscreteMeasure(x[None, :], [1.0])

    @staticmethod
    def from_pairs(pairs: Iterable[tuple]) -> "DiscreteMeasure":
        """Build from ``(atom, weight)`` pairs."""
        pairs = list(pairs)
        return DiscreteMeasure([p[0] for p in pairs], [p[1] for p in pairs])

    # -- helpers -------------------------------------------------------------
    def __len__(self) -> int:
        return len(self.weights)

    def __repr__(self) -> str:
        pairs = ", ".join(
            f"{a!r}:{w:.4g}" for a, w in zip(self.atoms.tolist(), self.weights.tolist())
        )
        return f"DiscreteMeasure({pairs})"

    def mean(self):
        """First moment (a float in d = 1, an array otherwise)."""
        if self.d == 1:
            return float(np.dot(self.weights, self.atoms))
        return self.weights @ self.atoms

    def sorted_1d(self) -> tuple[np.ndarray, np.ndarray]:
        """Atoms sorted ascending with matching weights (d = 1 only)."""
        if self.d != 1:
            raise DimensionError("sorted_1d requires d = 1")
        order = np.argsort(self.atoms, kind="stable")
        return self.atoms[order], self.weights[order]


# -----------------------------------------------------------------------------
# Operations
# -----------------------------------------------------------------------------
def integrate(m: DiscreteMeasure, f: Callable[[float], float]) -> float:
    """Integral of a scalar test function: ``sum_i w_i f(x_i)``.

    Raises :class:`DomainError` (naming the atom) if ``f`` is non-finite at
    any atom carrying the measure.
    """
    total = 0.0
    for x, w in zip(m.atoms, m.weights):
        x = float(x) if m.d == 1 else x
        v = float(f(x))
        if not np.isfinite(v):
            raise DomainError(f"test function is not finite at atom {x!r}")
        total += w * v
    return total


def pushforward(m: DiscreteMeasure, transport: Callable) -> DiscreteMeasure:
    """Image measure under a map: atoms are mapped, weights are unchanged.

    Coincident images are deliberately not merged, so each atom keeps its
    identity (useful when tracing which source atom went where).
    """
    if m.d == 1:
        new_atoms = [float(transport(float(x))) for x in m.atoms]
    else:
        new_atoms = [np.asarray(transport(x), dtype=float) for x in m.atoms]
    return DiscreteMeasure(new_atoms, m.weights)


def second_moment(m: DiscreteMeasure) -> float:
    """``sum_i w_i |x_i|^2``; finite by construction."""
    if m.d == 1:
        return float(np.dot(m.weights, m.atoms**2))
    return float(np.dot(m.weights, np.sum(m.atoms**2, axis=1)))


def wasserstein2_1d(m1: DiscreteMeasure, m2: DiscreteMeasure) -> float:
    """Exact quadratic Wasserstein distance between 1-D discrete measures.

    Computed by quantile matching: both cumulative distributions are cut at
    the union of their jump locations and the squared transport cost is
    summed segment by segment.  Symmetric, and zero iff the two measures are
    equal as distributions (regardless of atom ordering or duplication).
    """
    if m1.d != 1 or m2.d != 1:
        raise DimensionError("wasserstein2_1d supports d = 1 only")
    x1, w1 = m1.sorted_1d()
    x2, w2 = m2.sorted_1d()
    c1 = np.cumsum(w1)
    c2 = np.cumsum(w2)
    edges = np.unique(np.concatenate([[0.0], c1, c2]))
    edges = np.clip(edges, 0.0, 1.0)
    lengths = np.diff(edges)
    mids = edges[:-1] + 0.5 * lengths
    i1 = np.minimum(np.searchsorted(c1, mids), len(x1) - 1)
    i2 = np.minimum(np.searchsorted(c2, mids), len(x2) - 1)
    cost = float(np.dot(lengths, (x1[i1] - x2[i2]) ** 2))
    return float(np.sqrt(max(cost, 0.0)))


def equal_as_distributions(m1: DiscreteMeasure, m2: DiscreteMeasure, tol: float = 0.0) -> bool:
    """1-D distributional equality via the sorted (atom, cumulative weight) form."""
    return wasserstein2_1d(m1, m2) <= tol


def convex_combination(ms: Sequence[DiscreteMeasure], lams: Sequence[float]) -> DiscreteMeasure:
    """Mixture ``sum_k lam_k m_k`` (lams nonnegative, summing to 1)."""
    lams = np.asarray(lams, dtype=float)
    atoms: list = []
    weights: list = []
    for m, lam in zip(ms, lams):
        atoms.extend(m.atoms.tolist())
        weights.extend((lam * m.weights).tolist())
    return DiscreteMeasure(atoms, weights)
