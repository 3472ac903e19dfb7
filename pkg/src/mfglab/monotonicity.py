"""Numerical evaluation and refutation of the four monotonicity conditions.

For a terminal coupling ``G`` the four pairings are:

* ``LL``   : ``int (G(., m1) - G(., m2)) d(m1 - m2) >= 0`` over measure pairs;
* ``D``    : ``E[(DxG(X1, law X1) - DxG(X2, law X2)) . (X1 - X2)] >= 0`` over couples;
* ``sigma``: ``<tau1 - tau2, s1 - s2> <= |s1 - s2|^2`` over aggregate pairs, with
  ``tau_i`` any selection of the reduced best-response map (identity minus the
  map is monotone on the aggregate's range);
* ``L2``   : ``E[(Y1 - Y2)(X1 - X2)] <= E|X1 - X2|^2`` with ``Y_i`` any lifted
  best response (identity minus the lifted map is monotone on random variables).

``-sigma`` and ``-L2`` are the sign-reversed variants.  Verdicts are
``violated`` (with a reproducible witness) or ``no-violation-found``; holding
is never claimed from sampling.  Where a condition is known to hold for a
scenario the sampler acts as a consistency test, and that knowledge lives in
``Scenario.conditions`` metadata.

The refuter mixes deterministic probes (aggregate-pair sweeps with extreme
cross-branch selections, second-order eigen-directions amplified to finite
couples) with seeded random sampling, keeps the worst margin, and shrinks the
witness toward coincidence without sacrificing more than a fixed fraction of
the violation magnitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .equilibrium import LOWER, UPPER, SigmaInterval, curlyE_sigma, tildeET
from .errors import CouplingError, KinkError, PreconditionError
from .measure import DiscreteMeasure, integrate
from .models import Scenario
from .randvar import FiniteRandomVariable, SampleSpace, inner, law

CONDITIONS = ("LL", "D", "sigma", "L2", "-sigma", "-L2")


# -----------------------------------------------------------------------------
# Gap evaluators
# -----------------------------------------------------------------------------
def ll_gap(s: Scenario, m1: DiscreteMeasure, m2: DiscreteMeasure) -> float:
    """Signed pairing ``int (G(., m1) - G(., m2)) d(m1 - m2)``; >= 0 iff LL holds here."""
    diff = lambda x: s.G(x, m1) - s.G(x, m2)
    return integrate(m1, diff) - integrate(m2, diff)


def d_gap(s: Scenario, X1: FiniteRandomVariable, X2: FiniteRandomVariable) -> float:
    """Displacement pairing over one coupled pair; >= 0 iff D holds on it."""
    X1._check_coupled(X2)
    for label, X in (("X1", X1), ("X2", X2)):
        for i, v in enumerate(X.values):
            if s.nearest_kink(float(v)) <= 1e-9 * (1.0 + abs(float(v))):
                raise KinkError(f"{label} outcome {i} sits on a kink of the coupling")
    sig1, sig2 = s.sigma_T(law(X1)), s.sigma_T(law(X2))
    g1 = np.array([float(s.dxg(float(v), sig1)) for v in X1.values])
    g2 = np.array([float(s.dxg(float(v), sig2)) for v in X2.values])
    return float(np.dot(X1.space.weights, (g1 - g2) * (X1.values - X2.values)))


def _second_order_pieces(s: Scenario, sigma: float):
    """(d2xx, d2xsig, dmsig) callables, falling back to central differences."""
    if s.dm_sigma_T is None:
        raise PreconditionError(f"scenario {s.name!r} lacks the aggregate gradient")
    if s.d2xx_g is not None and s.d2xsig_g is not None:
        return (lambda x: s.d2xx_g(x, sigma)), (lambda x: s.d2xsig_g(x, sigma)), s.dm_sigma_T

    def d2xx(x, h=1e-5):
        if s.nearest_kink(x) <= 2 * h * (1.0 + abs(x)):
            raise KinkError(f"second-difference probe at x={x:g} is too close to a kink")
        hh = h * (1.0 + abs(x))
        return (s.dxg(x + hh, sigma) - s.dxg(x - hh, sigma)) / (2.0 * hh)

    def d2xsig(x, h=1e-5):
        hh = h * (1.0 + abs(sigma))
        return (s.dxg(x, sigma + hh) - s.dxg(x, sigma - hh)) / (2.0 * hh)

    return d2xx, d2xsig, s.dm_sigma_T


def d_second_order(s: Scenario, m: DiscreteMeasure, v) -> float:
    """Curvature form of the displacement pairing at ``(m, v)``.

    ``int gxx(x, s) v(x)^2 dm + (int gxs(x, s) v(x) dm)(int a'(x) v(x) dm)``
    where ``a'`` is the gradient of the aggregate integrand; nonnegativity for
    all ``(m, v)`` characterizes displacement monotonicity of a factored
    coupling.  ``v`` is a per-atom vector (one value per atom of ``m``).
    """
    sigma = s.sigma_T(m)
    d2xx, d2xsig, dmsig = _second_order_pieces(s, sigma)
    v = np.asarray(v, dtype=float)
    w = m.weights
    xs = [float(x) for x in m.atoms]
    quad = float(sum(wi * d2xx(x) * vi * vi for wi, x, vi in zip(w, xs, v)))
    cross1 = float(sum(wi * d2xsig(x) * vi for wi, x, vi in zip(w, xs, v)))
    cross2 = float(sum(wi * dmsig(x) * vi for wi, x, vi in zip(w, xs, v)))
    return quad + cross1 * cross2


def ll_second_order(s: Scenario, m: DiscreteMeasure, v) -> float:
    """Curvature form of the LL pairing: the pure cross term
    ``(int gxs v dm)(int a' v dm)``; nonnegativity for all ``(m, v)``
    characterizes LL monotonicity of a smooth factored coupling."""
    sigma = s.sigma_T(m)
    _, d2xsig, dmsig = _second_order_pieces(s, sigma)
    v = np.asarray(v, dtype=float)
    w = m.weights
    xs = [float(x) for x in m.atoms]
    cross1 = float(sum(wi * d2xsig(x) * vi for wi, x, vi in zip(w, xs, v)))
    cross2 = float(sum(wi * dmsig(x) * vi for wi, x, vi in zip(w, xs, v)))
    return cross1 * cross2


def _pick_value(branch, pick: str) -> float:
    if isinstance(branch, SigmaInterval):
        return branch.lo if pick == "lower" else branch.hi
    return branch[0] if pick == "lower" else branch[-1]


def sigma_gap(
    s: Scenario,
    m0: DiscreteMeasure,
    T: float,
    sigma1: float,
    sigma2: float,
    pick1: str = "lower",
    pick2: str = "lower",
) -> float:
    """``<tau1 - tau2, s1 - s2> - |s1 - s2|^2`` with the picked selections;
    the aggregate condition holds on this pair iff the value is <= 0."""
    tau1 = _pick_value(curlyE_sigma(s, m0, T, sigma1), pick1)
    tau2 = _pick_value(curlyE_sigma(s, m0, T, sigma2), pick2)
    ds = sigma1 - sigma2
    return (tau1 - tau2) * ds - ds * ds


def l2_gap(
    s: Scenario,
    X0: FiniteRandomVariable,
    T: float,
    X1: FiniteRandomVariable,
    X2: FiniteRandomVariable,
    pick1: str = "lower",
    pick2: str = "lower",
) -> float:
    """``E[(Y1 - Y2)(X1 - X2)] - E|X1 - X2|^2`` with lifted selections;
    the random-variable condition holds on this pair iff the value is <= 0."""
    Y1 = tildeET(s, X0, T, X1, LOWER if pick1 == "lower" else UPPER)
    Y2 = tildeET(s, X0, T, X2, LOWER if pick2 == "lower" else UPPER)
    dX = X1 - X2
    return inner(Y1 - Y2, dX) - inner(dX, dX)


# -----------------------------------------------------------------------------
# Reports and witnesses
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class MonotonicityReport:
    condition: str
    verdict: str  # 'violated' | 'no-violation-found'
    samples: int
    lhs: float
    rhs: float
    margin: float
    witness: dict | None
    shrunk: dict | None
    seed: int
    scenario: str

    def to_payload(self) -> dict:
        return {
            "condition": self.condition,
            "verdict": self.verdict,
            "samples": self.samples,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "witness": self.witness,
            "shrunk": self.shrunk,
            "seed": self.seed,
            "scenario": self.scenario,
        }


def _measure_payload(m: DiscreteMeasure) -> dict:
    return {"atoms": [float(a) for a in m.atoms], "weights": [float(w) for w in m.weights]}


def _measure_from_payload(p: dict) -> DiscreteMeasure:
    return DiscreteMeasure(p["atoms"], p["weights"])


def evaluate_witness(s: Scenario, condition: str, witness: dict) -> tuple[float, float, float]:
    """Re-evaluate a stored witness; returns ``(lhs, rhs, margin)``.

    Used both by the refuter (to certify reproducibility) and by result-file
    round-trip checks.
    """
    kind = witness["kind"]
    if kind == "measure_pair":
        lhs = ll_gap(s, _measure_from_payload(witness["m1"]), _measure_from_payload(witness["m2"]))
        return lhs, 0.0, lhs
    if kind == "couple":
        space = SampleSpace(witness["weights"])
        X1 = FiniteRandomVariable(space, witness["x1"])
        X2 = FiniteRandomVariable(space, witness["x2"])
        lhs = d_gap(s, X1, X2)
        return lhs, 0.0, lhs
    if kind == "sigma_pair":
        m0 = _measure_from_payload(witness["m0"])
        ds = witness["sigma1"] - witness["sigma2"]
        gap = sigma_gap(s, m0, witness["T"], witness["sigma1"], witness["sigma2"],
                        witness["pick1"], witness["pick2"])
        return gap + ds * ds, ds * ds, gap
    if kind == "l2_pair":
        space = SampleSpace(witness["weights"])
        X0 = FiniteRandomVariable(space, witness["x0"])
        X1 = FiniteRandomVariable(space, witness["x1"])
        X2 = FiniteRandomVariable(space, witness["x2"])
        dX = X1 - X2
        gap = l2_gap(s, X0, witness["T"], X1, X2, witness["pick1"], witness["pick2"])
        rhs = inner(dX, dX)
        return gap + rhs, rhs, gap
    raise ValueError(f"unknown witness kind {kind!r}")


# -----------------------------------------------------------------------------
# Refuter
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class RefuteConfig:
    """Sampler bounds for the randomized refuter (all draws are seeded)."""

    budget: int = 10_000
    max_atoms: int = 6
    coord_range: float = 10.0
    t_values: tuple[float, ...] = (0.1, 1.0, 10.0)
    m0: DiscreteMeasure | None = None  # start distribution for aggregate/lifted maps
    deltas: tuple[float, ...] = (1e-3, 1e-2, 1e-1)
    sigma_points: int = 9
    amplify_steps: int = 18


def _violated(condition: str, margin: float, scale: float) -> bool:
    tol = max(1e-8, 1e-10 * scale)
    if condition in ("LL", "D", "-sigma", "-L2"):
        return margin < -tol
    return margin > tol


def _is_worse(condition: str, a: float, b: float) -> bool:
    """Is margin ``a`` a stronger violation than ``b``?"""
    if condition in ("LL", "D", "-sigma", "-L2"):
        return a < b
    return a > b


def refute(s: Scenario, condition: str, config: RefuteConfig = RefuteConfig(), seed: int = 0) -> MonotonicityReport:
    """Search for a violation of one condition on a scenario.

    Deterministic probes run first (they are counted against the budget), then
    seeded random sampling fills the remainder.  On violation the strongest
    witness is reported together with a shrunk copy; ``no-violation-found`` is
    a sampling verdict, not a proof.
    """
    if condition not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}; one of {CONDITIONS}")
    rng = np.random.default_rng(seed)
    m0 = config.m0 if config.m0 is not None else DiscreteMeasure.dirac(1.0)

    if condition in ("LL", "D"):
        state = _refute_pairing(s, condition, config, rng, m0)
    else:
        state = _refute_map(s, condition, config, rng, m0)

    samples, best = state
    if best is None:
        return MonotonicityReport(condition, "no-violation-found", samples,
                                  math.nan, math.nan, math.nan, None, None, seed, s.name)
    margin, lhs, rhs, witness = best
    shrunk = _shrink(s, condition, witness, margin)
    lhs2, rhs2, margin2 = evaluate_witness(s, condition, witness)
    if abs(margin2 - margin) > 1e-10 * (1.0 + abs(margin)):
        raise PreconditionError("witness failed to reproduce its margin")
    return MonotonicityReport(condition, "violated", samples, lhs, rhs, margin,
                              witness, shrunk, seed, s.name)


def _track(condition, best, margin, lhs, rhs, witness):
    scale = 1.0 + abs(lhs) + abs(rhs)
    if not _violated(condition, margin, scale):
        return best
    if best is None or _is_worse(condition, margin, best[0]):
        return margin, lhs, rhs, witness
    return best


def _random_measure(rng, max_atoms, coord_range, n_min=1):
    n = int(rng.integers(n_min, max_atoms + 1))
    atoms = rng.uniform(-coord_range, coord_range, size=n)
    w = rng.dirichlet(np.ones(n))
    w = w / w.sum()
    return DiscreteMeasure(atoms, w)


def _refute_pairing(s, condition, cfg, rng, m0):
    best = None
    samples = 0

    # deterministic curvature probes: eigen-directions of the second-order form
    if s.dm_sigma_T is not None and s.kinks == ():
        for n in (2, 3, 4):
            for trial in range(6):
                if samples >= cfg.budget:
                    break
                m = _random_measure(rng, cfg.max_atoms, cfg.coord_range, n_min=n)
                samples += 1
                probe = _eigen_probe(s, condition, m, cfg, rng)
                if probe is not None:
                    best = _track(condition, best, *probe)

    while samples < cfg.budget:
        samples += 1
        if condition == "LL":
            m1 = _random_measure(rng, cfg.max_atoms, cfg.coord_range)
            m2 = _random_measure(rng, cfg.max_atoms, cfg.coord_range)
            lhs = ll_gap(s, m1, m2)
            witness = {"kind": "measure_pair", "m1": _measure_payload(m1), "m2": _measure_payload(m2)}
            best = _track(condition, best, lhs, lhs, 0.0, witness)
        else:
            n = int(rng.integers(2, cfg.max_atoms + 1))
            w = rng.dirichlet(np.ones(n))
            x1 = rng.uniform(-cfg.coord_range, cfg.coord_range, size=n)
            x2 = rng.uniform(-cfg.coord_range, cfg.coord_range, size=n)
            if s.kinks and (
                min(s.nearest_kink(float(v)) for v in x1) < 1e-6
                or min(s.nearest_kink(float(v)) for v in x2) < 1e-6
            ):
                continue
            space = SampleSpace(w / w.sum())
            X1 = FiniteRandomVariable(space, x1)
            X2 = FiniteRandomVariable(space, x2)
            lhs = d_gap(s, X1, X2)
            witness = {"kind": "couple", "weights": list(map(float, space.weights)),
                       "x1": list(map(float, x1)), "x2": list(map(float, x2))}
            best = _track(condition, best, lhs, lhs, 0.0, witness)
    return samples, best


def _eigen_probe(s, condition, m, cfg, rng):
    """Minimal eigen-direction of the curvature form, amplified to a finite witness."""
    sigma = s.sigma_T(m)
    try:
        d2xx, d2xsig, dmsig = _second_order_pieces(s, sigma)
        xs = [float(x) for x in m.atoms]
        w = m.weights
        u = np.array([wi * d2xsig(x) for wi, x in zip(w, xs)])
        c = np.array([wi * dmsig(x) for wi, x in zip(w, xs)])
        if condition == "D":
            A = np.diag([wi * d2xx(x) for wi, x in zip(w, xs)]) + 0.5 * (np.outer(u, c) + np.outer(c, u))
        else:
            A = 0.5 * (np.outer(u, c) + np.outer(c, u))
    except (KinkError, PreconditionError):
        return None
    vals, vecs = np.linalg.eigh(A)
    if vals[0] >= -1e-12 * (1.0 + abs(vals[-1])):
        return None
    v = vecs[:, 0]
    v = v / np.max(np.abs(v))

    # amplify the direction to a finite-size witness, keeping the worst margin
    if condition == "D":
        space = SampleSpace(m.weights / m.weights.sum())
        X2 = FiniteRandomVariable(space, m.atoms)
        best = None
        eps = 1e-3
        for _ in range(cfg.amplify_steps):
            try:
                X1 = FiniteRandomVariable(space, m.atoms + eps * v)
                lhs = d_gap(s, X1, X2)
            except Exception:
                break
            if not math.isfinite(lhs):
                break
            if best is None or lhs < best[0]:
                witness = {"kind": "couple", "weights": list(map(float, space.weights)),
                           "x1": list(map(float, X1.values)), "x2": list(map(float, X2.values))}
                best = (lhs, witness)
            elif lhs > 0.5 * best[0]:
                break
            eps *= 2.0
        if best is None or best[0] >= 0:
            return None
        return best[0], best[0], 0.0, best[1]

    # LL: realize the direction as a measure pair m1 = (id + eps v)# m, m2 = m
    best = None
    eps = 1e-3
    for _ in range(cfg.amplify_steps):
        try:
            m1 = DiscreteMeasure(m.atoms + eps * v, m.weights)
            lhs = ll_gap(s, m1, m)
        except Exception:
            break
        if not math.isfinite(lhs):
            break
        if best is None or lhs < best[0]:
            witness = {"kind": "measure_pair", "m1": _measure_payload(m1), "m2": _measure_payload(m)}
            best = (lhs, witness)
        elif lhs > 0.5 * best[0]:
            break
        eps *= 2.0
    if best is None or best[0] >= 0:
        return None
    return best[0], best[0], 0.0, best[1]


def _refute_map(s, condition, cfg, rng, m0):
    base = condition.lstrip("-")
    best = None
    samples = 0
    lo, hi = s.sigma_hint
    sigma_grid = np.linspace(lo, hi, cfg.sigma_points)
    picks = (("lower", "lower"), ("upper", "upper"), ("upper", "lower"), ("lower", "upper"))

    def eval_sigma(T, s1, s2, p1, p2):
        nonlocal best, samples
        samples += 1
        try:
            gap = sigma_gap(s, m0, T, s1, s2, p1, p2)
        except Exception:
            return
        ds2 = (s1 - s2) ** 2
        witness = {"kind": "sigma_pair", "m0": _measure_payload(m0), "T": T,
                   "sigma1": s1, "sigma2": s2, "pick1": p1, "pick2": p2}
        best = _track(condition, best, gap, gap + ds2, ds2, witness)

    def eval_l2(T, vals0, vals1, vals2, p1, p2, weights):
        nonlocal best, samples
        samples += 1
        space = SampleSpace(weights)
        try:
            X0 = FiniteRandomVariable(space, vals0)
            X1 = FiniteRandomVariable(space, vals1)
            X2 = FiniteRandomVariable(space, vals2)
            gap = l2_gap(s, X0, T, X1, X2, p1, p2)
        except Exception:
            return
        dX = np.asarray(vals1) - np.asarray(vals2)
        rhs = float(np.dot(weights, dX * dX))
        witness = {"kind": "l2_pair", "weights": list(map(float, weights)), "T": T,
                   "x0": list(map(float, vals0)), "x1": list(map(float, vals1)),
                   "x2": list(map(float, vals2)), "pick1": p1, "pick2": p2}
        best = _track(condition, best, gap, gap + rhs, rhs, witness)

    w0 = (m0.weights / m0.weights.sum()).tolist()
    x0_vals = [float(a) for a in m0.atoms]
    norm0 = math.sqrt(sum(wi * v * v for wi, v in zip(w0, x0_vals))) or 1.0
    xhat = [v / norm0 for v in x0_vals]

    # deterministic sweeps: nearby pairs along the aggregate range, with all
    # four extreme cross-branch selections (where derivative-type and
    # branch-jump violations live)
    for T in cfg.t_values:
        for s1 in sigma_grid:
            for delta in cfg.deltas:
                for p1, p2 in picks:
                    if samples >= cfg.budget:
                        break
                    if base == "sigma":
                        eval_sigma(T, float(s1 + delta), float(s1), p1, p2)
                    else:
                        lam_grid = np.linspace(0.25, 3.0, cfg.sigma_points)
                        lam = float(lam_grid[list(sigma_grid).index(s1)])
                        vals2 = [lam * v for v in xhat]
                        vals1 = [a + delta * b for a, b in zip(vals2, xhat)]
                        eval_l2(T, x0_vals, vals1, vals2, p1, p2, w0)

    while samples < cfg.budget:
        T = float(rng.choice(cfg.t_values))
        p1, p2 = picks[int(rng.integers(0, 4))]
        if base == "sigma":
            s1 = float(rng.uniform(lo, hi))
            s2 = float(rng.uniform(lo, hi))
            if s1 == s2:
                continue
            eval_sigma(T, s1, s2, p1, p2)
        else:
            n = len(w0)
            vals1 = rng.uniform(-cfg.coord_range, cfg.coord_range, size=n).tolist()
            vals2 = rng.uniform(-cfg.coord_range, cfg.coord_range, size=n).tolist()
            eval_l2(T, x0_vals, vals1, vals2, p1, p2, w0)
    return samples, best


def _shrink(s, condition, witness, margin0):
    """Halve the perturbation toward the anchor while the violation keeps at
    least a quarter of its magnitude; return the last kept iterate (or None)."""
    current = None
    cand = dict(witness)
    for _ in range(40):
        cand = _halve(cand)
        if cand is None:
            break
        try:
            lhs, rhs, margin = evaluate_witness(s, condition, cand)
        except Exception:
            break
        scale = 1.0 + abs(lhs) + abs(rhs)
        if _violated(condition, margin, scale) and abs(margin) >= 0.25 * abs(margin0):
            current = dict(cand)
            current["margin"] = margin
        else:
            break
    return current


def _halve(witness):
    kind = witness["kind"]
    w = dict(witness)
    if kind == "measure_pair":
        m1, m2 = witness["m1"], witness["m2"]
        if len(m1["atoms"]) != len(m2["atoms"]):
            return None
        w["m1"] = {
            "atoms": [0.5 * (a + b) for a, b in zip(m1["atoms"], m2["atoms"])],
            "weights": [0.5 * (a + b) for a, b in zip(m1["weights"], m2["weights"])],
        }
        return w
    if kind == "couple":
        w["x1"] = [b + 0.5 * (a - b) for a, b in zip(witness["x1"], witness["x2"])]
        return w
    if kind == "sigma_pair":
        w["sigma1"] = witness["sigma2"] + 0.5 * (witness["sigma1"] - witness["sigma2"])
        return w
    if kind == "l2_pair":
        w["x1"] = [b + 0.5 * (a - b) for a, b in zip(witness["x1"], witness["x2"])]
        return w
    return None
