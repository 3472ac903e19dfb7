"""Set-valued best-response maps and their fixed points.

For a factored coupling the population's anticipated aggregate ``sigma``
induces, at each start point, a destination set; pushing the initial
distribution through a measurable selection and re-evaluating the aggregate
yields the reduced best-response map.  An equilibrium is a fixed point:
``sigma* in E(sigma*)``, equivalently a terminal measure reproduced by its own
best responses.

Solvers: bisection on the monotone residual of a scalar *decreasing*
set-valued map (unique fixed point), damped Picard iteration for generic
single-valued selections, and an enumerator that walks selection branches,
solves each induced fixed-point problem, keeps the self-consistent solutions,
and deduplicates the resulting measures.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BranchError, NumericalError, PreconditionError
from .measure import DiscreteMeasure, wasserstein2_1d
from .models import Scenario
from .optimize1d import bisect_root, scan_sign_changes
from .randvar import FiniteRandomVariable, law

SIGMA_CONSISTENCY_SCALE = 1e-8  # |sigma_T(measure) - sigma*| <= scale * (1 + |sigma*|)
SPLIT_DETECT_SCALE = 1e-9       # value tolerance used when resolving split atoms
DEDUP_W2_TOL = 1e-6


# -----------------------------------------------------------------------------
# Policies and result containers
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class SelectionPolicy:
    """How to resolve atoms with several co-optimal destinations.

    ``lower``/``upper`` always pick the smallest/largest destination;
    ``split(c)`` sends fraction ``c`` of the atom's mass to the upper
    destination and ``1 - c`` to the lower; ``enumerate`` branches over
    lower/upper per multi-destination atom.
    """

    mode: str
    c: float | None = None

    def __post_init__(self):
        if self.mode not in ("lower", "upper", "split", "enumerate"):
            raise ValueError(f"unknown selection mode {self.mode!r}")
        if self.mode == "split":
            if self.c is None or not 0.0 <= self.c <= 1.0:
                raise ValueError("split policy needs a mixture weight c in [0, 1]")


LOWER = SelectionPolicy("lower")
UPPER = SelectionPolicy("upper")


def split(c: float) -> SelectionPolicy:
    return SelectionPolicy("split", c)


ENUMERATE = SelectionPolicy("enumerate")


@dataclass(frozen=True)
class SigmaInterval:
    """Closed interval of aggregate values reachable over selections."""

    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi + 1e-15 * (1.0 + abs(self.hi)):
            raise ValueError("interval endpoints out of order")

    def contains(self, sigma: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= sigma <= self.hi + tol

    @property
    def degenerate(self) -> bool:
        return self.lo == self.hi


@dataclass(frozen=True)
class AtomCertificate:
    x: float
    weight: float
    destinations: tuple[float, ...]
    chosen: tuple[tuple[float, float], ...]  # (destination, mass fraction of atom)
    value: float
    foc_residual: float


@dataclass(frozen=True)
class EquilibriumResult:
    """A fixed point: aggregate value, terminal measure, and certification."""

    sigma_star: float
    measure: DiscreteMeasure
    policy: str
    certificate: tuple[AtomCertificate, ...]
    multiplicity: str  # 'unique-certified' | 'one-of-several' | 'unknown'
    total_cost: float  # m0-average of the per-atom optimal values

    def consistency_residual(self, s: Scenario) -> float:
        return abs(s.sigma_T(self.measure) - self.sigma_star)


# -----------------------------------------------------------------------------
# The reduced best-response maps
# -----------------------------------------------------------------------------
def _apply_policy(dest: tuple[float, ...], policy: SelectionPolicy) -> tuple[tuple[float, float], ...]:
    """Resolve a destination set to (destination, mass-fraction) pairs."""
    if len(dest) == 0:
        raise PreconditionError("empty destination set (no real best response)")
    if len(dest) == 1:
        return ((dest[0], 1.0),)
    if policy.mode == "lower":
        return ((dest[0], 1.0),)
    if policy.mode == "upper":
        return ((dest[-1], 1.0),)
    if policy.mode == "split":
        lo, hi = dest[0], dest[-1]
        out = []
        if policy.c < 1.0:
            out.append((lo, 1.0 - policy.c))
        if policy.c > 0.0:
            out.append((hi, policy.c))
        return tuple(out)
    raise PreconditionError("enumerate policy must be expanded by the caller")


def ET_measure(
    s: Scenario,
    m0: DiscreteMeasure,
    T: float,
    m: DiscreteMeasure,
    policy: SelectionPolicy = LOWER,
):
    """Push ``m0`` through best responses against the terminal measure ``m``.

    Under ``enumerate`` a list of branch measures (lower/upper per
    multi-destination atom) is returned instead of a single measure.
    """
    sigma = s.sigma_T(m)
    return ET_measure_sigma(s, m0, T, sigma, policy)


def ET_measure_sigma(s, m0, T, sigma: float, policy: SelectionPolicy = LOWER,
                     value_tol_scale: float = SPLIT_DETECT_SCALE):
    """Same as :func:`ET_measure` with the aggregate already frozen."""
    dests = [s.best_responses(float(x), sigma, T, value_tol_scale) for x in m0.atoms]
    if policy.mode == "enumerate":
        multi = [i for i, d in enumerate(dests) if len(d) > 1]
        if len(multi) > 12:
            raise BranchError(f"{len(multi)} multi-destination atoms exceed enumeration capacity")
        out = []
        for picks in itertools.product(("lower", "upper"), repeat=len(multi)):
            atoms = []
            for i, d in enumerate(dests):
                if i in multi:
                    atoms.append(d[0] if picks[multi.index(i)] == "lower" else d[-1])
                else:
                    atoms.append(d[0])
            out.append(DiscreteMeasure(atoms, m0.weights))
        return out
    atoms: list[float] = []
    weights: list[float] = []
    for x, w, d in zip(m0.atoms, m0.weights, dests):
        for y, frac in _apply_policy(d, policy):
            atoms.append(y)
            weights.append(w * frac)
    return DiscreteMeasure(atoms, weights)


def curlyE_sigma(s: Scenario, m0: DiscreteMeasure, T: float, sigma: float):
    """Evaluate the reduced aggregate map at ``sigma``.

    Returns a :class:`SigmaInterval` when the selection range is connected
    (single splitting atom with a monotone aggregate integrand; degenerate when
    every atom has a unique destination), and a sorted tuple of branch values
    when the destination structure is a genuine branch set.
    """
    if s.branch_structure == "branch":
        dests = [s.best_responses(float(x), sigma, T) for x in m0.atoms]
        if any(len(d) == 0 for d in dests):
            raise PreconditionError("a start atom has no real best response at this aggregate")
        multi = [i for i, d in enumerate(dests) if len(d) > 1]
        if len(multi) > 12:
            raise BranchError("branch set too large to enumerate")
        vals = set()
        for picks in itertools.product(range(2), repeat=len(multi)):
            atoms = [
                (d[0] if (i not in multi or picks[multi.index(i)] == 0) else d[-1])
                for i, d in enumerate(dests)
            ]
            vals.add(s.sigma_T(DiscreteMeasure(atoms, m0.weights)))
        return tuple(sorted(vals))
    lo_m = ET_measure_sigma(s, m0, T, sigma, LOWER)
    hi_m = ET_measure_sigma(s, m0, T, sigma, UPPER)
    lo, hi = s.sigma_T(lo_m), s.sigma_T(hi_m)
    if lo > hi:
        lo, hi = hi, lo
    return SigmaInterval(lo, hi)


def tildeET(
    s: Scenario,
    X0: FiniteRandomVariable,
    T: float,
    X: FiniteRandomVariable,
    policy: SelectionPolicy = LOWER,
):
    """Lifted best response: outcome-wise destinations against the law of ``X``.

    ``X`` and ``X0`` must share a sample space; the result lives on it too, so
    couplings survive.  Under ``enumerate`` a list of branch variables is
    returned (lower/upper per multi-destination outcome).
    """
    X0._check_coupled(X)
    sigma = s.sigma_T(law(X))
    dests = [s.best_responses(float(x0), sigma, T) for x0 in X0.values]
    if any(len(d) == 0 for d in dests):
        raise PreconditionError("an outcome has no real best response at this aggregate")
    if policy.mode == "enumerate":
        multi = [i for i, d in enumerate(dests) if len(d) > 1]
        if len(multi) > 12:
            raise BranchError("branch set too large to enumerate")
        out = []
        for picks in itertools.product(("lower", "upper"), repeat=len(multi)):
            vals = [
                d[0] if (i not in multi or picks[multi.index(i)] == "lower") else d[-1]
                for i, d in enumerate(dests)
            ]
            out.append(FiniteRandomVariable(X.space, vals))
        return out
    if policy.mode == "split":
        raise PreconditionError("split policy is measure-level; use ET_measure for mass splitting")
    pick = 0 if policy.mode == "lower" else -1
    return FiniteRandomVariable(X.space, [d[pick] for d in dests])


# -----------------------------------------------------------------------------
# Fixed-point solvers
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class BisectionCertificate:
    sigma_star: float
    interval_at_star: tuple[float, float]
    residual: float
    bracket: tuple[float, float]


def fixed_point_bisection(
    set_map: Callable[[float], SigmaInterval],
    bracket: tuple[float, float] = (-1000.0, 1000.0),
    tol: float = 1e-9,
    monotone_grid: int = 9,
    max_widen: int = 2,
) -> BisectionCertificate:
    """Unique fixed point of a scalar decreasing set-valued map.

    Both selection envelopes of a decreasing map have strictly increasing
    residuals ``sigma - lo(sigma)`` and ``sigma - hi(sigma)``; the fixed-point
    set is where the first is >= 0 and the second <= 0.  Decreasingness is
    spot-checked on a grid and the bracket must produce a sign change (it is
    widened tenfold up to ``max_widen`` times).
    """
    lo_b, hi_b = bracket

    def envelopes(sig):
        iv = set_map(sig)
        if isinstance(iv, SigmaInterval):
            return iv.lo, iv.hi
        lo, hi = iv
        return float(lo), float(hi)

    for _ in range(max_widen + 1):
        lo_lo, lo_hi = envelopes(lo_b)
        hi_lo, hi_hi = envelopes(hi_b)
        if lo_b - lo_hi <= 0.0 <= hi_b - hi_lo:
            break
        lo_b, hi_b = lo_b * 10.0, hi_b * 10.0
    else:
        raise PreconditionError("no sign change of the fixed-point residual on the bracket")

    grid = np.linspace(lo_b, hi_b, monotone_grid)
    env = [envelopes(sig) for sig in grid]
    slack = 1e-9 * (1.0 + float(np.max(np.abs(env))))
    for (lo1, hi1), (lo2, hi2) in zip(env, env[1:]):
        if lo2 > lo1 + slack or hi2 > hi1 + slack:
            raise PreconditionError("set-valued map is not decreasing on the bracket grid")

    a, b = lo_b, hi_b
    for _ in range(200):
        mid = 0.5 * (a + b)
        lo, hi = envelopes(mid)
        if mid - lo > 0.0 and mid - hi < 0.0:
            a = b = mid  # inside the interval: done
            break
        if mid - lo < 0.0:
            a = mid  # entirely below the set: move right
        else:
            b = mid
        if b - a < tol:
            break
    sigma_star = 0.5 * (a + b)
    lo, hi = envelopes(sigma_star)
    residual = max(lo - sigma_star, sigma_star - hi, 0.0)
    if residual > 10.0 * tol * (1.0 + abs(sigma_star)):
        raise PreconditionError(
            f"bisection landed at sigma={sigma_star:g} with residual {residual:g} > tol"
        )
    return BisectionCertificate(sigma_star, (lo, hi), residual, (lo_b, hi_b))


@dataclass(frozen=True)
class PicardResult:
    converged: bool
    value: float | np.ndarray
    iterations: int
    trace: tuple

    @property
    def diverged(self) -> bool:
        return not self.converged


def fixed_point_picard(
    single_map: Callable,
    start,
    damping: float = 1.0,
    max_iter: int = 500,
    tol: float = 1e-9,
) -> PicardResult:
    """Damped iteration ``sigma <- (1 - lam) sigma + lam map(sigma)`` for a
    single-valued selection; reports divergence with its trace instead of
    looping forever."""
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    sig = np.asarray(start, dtype=float)
    trace = [sig.copy()]
    for it in range(1, max_iter + 1):
        nxt = (1.0 - damping) * sig + damping * np.asarray(single_map(sig if sig.ndim else float(sig)), dtype=float)
        if not np.all(np.isfinite(nxt)):
            raise NumericalError("Picard iteration produced a non-finite value", trace=trace)
        trace.append(nxt.copy())
        delta = float(np.max(np.abs(nxt - sig)))
        sig = nxt
        if delta < tol:
            return PicardResult(True, float(sig) if sig.ndim == 0 else sig, it, tuple(trace))
        if float(np.max(np.abs(sig))) > 1e12:
            return PicardResult(False, float(sig) if sig.ndim == 0 else sig, it, tuple(trace))
    return PicardResult(False, float(sig) if sig.ndim == 0 else sig, max_iter, tuple(trace))


# -----------------------------------------------------------------------------
# Equilibrium enumeration and mass splitting
# -----------------------------------------------------------------------------
def two_well_horizon(s: Scenario, tau: float = 1.0) -> tuple[float, float]:
    """Horizon recipe turning a dipped profile into a two-equilibrium game.

    Finds the off-center minimizer ``y*`` of ``y^2/(2 tau) + phi(y)`` (which
    must dip below ``phi(x0)``) and returns ``T = tau / phi(x0 + y*)`` together
    with ``y*``; at that horizon the anticipated aggregate ``phi(x0 + y*)``
    reproduces itself through either of the symmetric destinations.
    """
    phi = s.params["phi"]
    x0 = s.params.get("x0", 0.0)
    from .optimize1d import minimize_coercive

    res = minimize_coercive(lambda y: y * y / (2.0 * tau) + float(phi(x0 + y)),
                            center=0.0, half_width=4.0)
    y_star = max(abs(y) for y in res.argmins)
    if res.value >= float(phi(x0)) - 1e-12:
        raise PreconditionError("profile does not dip below its center value at this tau")
    if y_star <= 1e-9:
        raise PreconditionError("off-center minimizer collapsed to the center")
    T = tau / float(phi(x0 + y_star))
    return T, y_star


def _certify_atoms(s, m0, T, sigma_star, chosen_per_atom, dests_per_atom):
    certs = []
    total_cost = 0.0
    for x, w, chosen, dest in zip(m0.atoms, m0.weights, chosen_per_atom, dests_per_atom):
        x = float(x)
        vals = [(x - y) ** 2 / (2.0 * T) + float(s.g(y, sigma_star)) for y, _ in chosen]
        value = min(vals) if vals else math.nan
        focs = [
            abs(y + T * float(s.dxg(y, sigma_star)) - x)
            for y, _ in chosen
            if s.nearest_kink(y) > 1e-9 * (1.0 + abs(y))
        ]
        foc = max(focs) if focs else math.nan
        certs.append(AtomCertificate(x, float(w), dest, tuple(chosen), value, foc))
        total_cost += float(w) * value
    return tuple(certs), total_cost


def enumerate_equilibria(
    s: Scenario,
    m0: DiscreteMeasure,
    T: float,
    bracket: tuple[float, float] | None = None,
    tol: float = 1e-9,
    max_split_atoms: int = 4,
) -> list[EquilibriumResult]:
    """All equilibria reachable through extreme selection branches.

    For interval-valued aggregate maps the unique aggregate fixed point is
    found by monotone bisection, then multi-destination atoms are resolved:
    when their aggregate contributions differ the mixture weight is pinned by
    consistency (a unique equilibrium); when they coincide every branch is an
    equilibrium and the lower/upper extremes are enumerated.  Branch-set maps
    solve one scalar fixed-point problem per branch and keep the
    self-consistent solutions.  Results are deduplicated by transport distance
    and ordered by aggregate then atoms.
    """
    if bracket is None:
        span = max(1.0, abs(s.sigma_hint[0]), abs(s.sigma_hint[1]))
        bracket = (min(s.sigma_hint[0], -span), max(s.sigma_hint[1], span))
    if s.branch_structure == "branch":
        results = _enumerate_branch_scenario(s, m0, T, bracket, tol, max_split_atoms)
    else:
        results = _enumerate_interval_scenario(s, m0, T, bracket, tol, max_split_atoms)

    dedup: list[EquilibriumResult] = []
    for r in sorted(results, key=lambda r: (r.sigma_star, tuple(np.sort(r.measure.atoms)))):
        if any(
            abs(r.sigma_star - q.sigma_star) <= 1e-7 * (1.0 + abs(q.sigma_star))
            and wasserstein2_1d(r.measure, q.measure) < DEDUP_W2_TOL
            for q in dedup
        ):
            continue
        dedup.append(r)
    for r in dedup:
        res = r.consistency_residual(s)
        if res > SIGMA_CONSISTENCY_SCALE * (1.0 + abs(r.sigma_star)):
            raise NumericalError(
                f"equilibrium fails aggregate consistency: residual {res:g}", trace=r
            )
    return dedup


def _enumerate_interval_scenario(s, m0, T, bracket, tol, max_split_atoms):
    cert = fixed_point_bisection(lambda sig: curlyE_sigma(s, m0, T, sig), bracket, tol=tol)
    sigma_star = cert.sigma_star
    dests = [s.best_responses(float(x), sigma_star, T, SPLIT_DETECT_SCALE) for x in m0.atoms]
    multi = [i for i, d in enumerate(dests) if len(d) > 1 and m0.weights[i] > 0]
    if len(multi) > max_split_atoms:
        raise BranchError(f"{len(multi)} splitting atoms exceed the cap {max_split_atoms}")

    psi_of = lambda y: _aggregate_integrand(s)(y)
    degenerate = [i for i in multi if abs(psi_of(dests[i][-1]) - psi_of(dests[i][0]))
                  <= 1e-9 * (1.0 + abs(psi_of(dests[i][0])))]
    pinned = [i for i in multi if i not in degenerate]

    if not multi:
        chosen = [((d[0], 1.0),) for d in dests]
        certs, cost = _certify_atoms(s, m0, T, sigma_star, chosen, dests)
        measure = _measure_from_chosen(m0, chosen)
        return [EquilibriumResult(sigma_star, measure, "lower", certs, "unique-certified", cost)]

    c_val = None
    if pinned:
        # aggregate consistency pins the mixture weight at the splitting atom
        c = mass_split_c(s, m0, T, sigma_star)
        c_val = 0.0 if c == "independent" else float(c)

    # atoms whose split leaves the aggregate unchanged stay genuinely free:
    # enumerate their lower/upper extremes (each branch is self-consistent)
    out = []
    for picks in itertools.product(("lower", "upper"), repeat=len(degenerate)):
        chosen = []
        labels = []
        for i, d in enumerate(dests):
            if i in pinned:
                parts = []
                if c_val < 1.0:
                    parts.append((d[0], 1.0 - c_val))
                if c_val > 0.0:
                    parts.append((d[-1], c_val))
                chosen.append(tuple(parts))
            elif i in degenerate:
                pick = picks[degenerate.index(i)]
                labels.append(pick)
                chosen.append(((d[0] if pick == "lower" else d[-1], 1.0),))
            else:
                chosen.append(((d[0], 1.0),))
        certs, cost = _certify_atoms(s, m0, T, sigma_star, chosen, dests)
        measure = _measure_from_chosen(m0, chosen)
        policy = f"split({c_val:.12g})" if pinned else "|".join(labels)
        tag = "one-of-several" if degenerate else "unique-certified"
        out.append(EquilibriumResult(sigma_star, measure, policy, certs, tag, cost))
    return out


def _enumerate_branch_scenario(s, m0, T, bracket, tol, max_split_atoms):
    """One scalar root problem per extreme-pick pattern; keep self-consistent roots."""
    n_atoms = len(m0)
    if n_atoms > max_split_atoms:
        raise BranchError(f"{n_atoms} start atoms exceed the branch enumeration cap")
    lo = max(bracket[0], s.sigma_hint[0] - 5.0)
    hi = min(bracket[1], s.sigma_hint[1] + 5.0)

    out = []
    seen_roots: list[float] = []
    for picks in itertools.product(("lower", "upper"), repeat=n_atoms):

        def pushed(sig):
            dests = [s.best_responses(float(x), sig, T) for x in m0.atoms]
            if any(len(d) == 0 for d in dests):
                return math.nan
            atoms = [d[0] if p == "lower" else d[-1] for d, p in zip(dests, picks)]
            return s.sigma_T(DiscreteMeasure(atoms, m0.weights))

        residual = _safe(lambda sig: sig - pushed(sig))
        for a, b, fa, fb in scan_sign_changes(residual, lo, hi, grid_n=400):
            root = a if a == b else bisect_root(residual, a, b, xtol=tol, f_lo=fa, f_hi=fb)
            dests = [s.best_responses(float(x), root, T) for x in m0.atoms]
            if any(len(d) == 0 for d in dests):
                continue
            chosen = [((d[0] if p == "lower" else d[-1], 1.0),)
                      for d, p in zip(dests, picks)]
            measure = _measure_from_chosen(m0, chosen)
            if abs(s.sigma_T(measure) - root) > SIGMA_CONSISTENCY_SCALE * (1.0 + abs(root)):
                continue  # spurious crossing, not a self-consistent branch solution
            if any(abs(root - r0) <= 10 * tol * (1.0 + abs(r0)) for r0 in seen_roots):
                continue
            seen_roots.append(root)
            certs, cost = _certify_atoms(s, m0, T, root, chosen, dests)
            out.append(EquilibriumResult(root, measure, "|".join(picks), certs,
                                         "unknown", cost))
    return out


def _safe(f):
    def wrapped(x):
        try:
            return f(x)
        except Exception:
            return math.nan
    return wrapped


def _aggregate_integrand(s: Scenario):
    """Pointwise integrand of the aggregate, for comparing destination values."""
    return lambda y: s.sigma_T(DiscreteMeasure([y], [1.0]))


def _measure_from_chosen(m0, chosen):
    atoms, weights = [], []
    for w, parts in zip(m0.weights, chosen):
        for y, frac in parts:
            atoms.append(y)
            weights.append(float(w) * frac)
    return DiscreteMeasure(atoms, weights)


def mass_split_c(s: Scenario, m0: DiscreteMeasure, T: float, sigma_star: float):
    """Mixture weight at the splitting atom pinned by aggregate consistency.

    Returns ``"independent"`` when the fixed point has no mass splitting
    (zero aggregate, or no start atom with two destinations of distinct
    aggregate contribution); otherwise solves the linear consistency equation
    for ``c`` and validates ``c in [0, 1]``.
    """
    if abs(sigma_star) <= 1e-12:
        return "independent"
    psi_of = _aggregate_integrand(s)
    dests = [s.best_responses(float(x), sigma_star, T, SPLIT_DETECT_SCALE) for x in m0.atoms]
    split_idx = [
        i
        for i, d in enumerate(dests)
        if len(d) > 1
        and m0.weights[i] > 0
        and abs(psi_of(d[-1]) - psi_of(d[0])) > 1e-9 * (1.0 + abs(psi_of(d[0])))
    ]
    if not split_idx:
        return "independent"
    if len(split_idx) > 1:
        raise BranchError("multiple pinned splitting atoms: the mixture weight is not scalar")
    i = split_idx[0]
    fixed = sum(
        float(w) * psi_of(d[0])
        for j, (w, d) in enumerate(zip(m0.weights, dests))
        if j != i
    )
    w_i = float(m0.weights[i])
    lo_val, hi_val = psi_of(dests[i][0]), psi_of(dests[i][-1])
    c = (sigma_star - fixed - w_i * lo_val) / (w_i * (hi_val - lo_val))
    if not -1e-7 <= c <= 1.0 + 1e-7:
        raise PreconditionError(f"consistency puts the mixture weight at {c:g}, outside [0, 1]")
    return min(max(c, 0.0), 1.0)
