"""Scenario catalog: terminal couplings, their factorizations, and derivatives.

Every built-in scenario couples agents through a scalar aggregate of the
terminal distribution, ``G(x, m) = g(x, sigma_T(m))``.  A :class:`Scenario`
bundles the factor pieces, analytic derivatives where available, declared
kinks (so derivative probes and first-order-condition polishing can avoid
them), and a per-scenario ``best_responses`` solver giving the destination
set of an agent starting at ``x`` against a frozen aggregate.

Destination semantics: for couplings under which the one-agent objective
``|x - y|^2 / (2T) + g(y, sigma)`` is coercive, ``best_responses`` returns its
global minimizers.  The ``cubic`` coupling grows cubically, so that objective
is unbounded below; there the destination set consists of the stationary
selections (the real roots of the first-order condition), which is the branch
structure its equilibrium analysis runs on.

User-defined scenarios are built from closures via :func:`factored_scenario`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import KinkError, PreconditionError
from .measure import DiscreteMeasure, integrate, second_moment
from .optimize1d import minimize_coercive, solve_monotone

CATALOG_NAMES = (
    "ll_two_equilibria",
    "ll_running_cost",
    "special_unique",
    "cubic",
    "disp_phi_quadratic",
    "exp_sin",
    "bounded_moment",
    "linear_in_x",
)


@dataclass(frozen=True)
class Scenario:
    """A terminal-coupling scenario with factored structure and derivatives.

    ``g``/``dxg``/``d2xx_g``/``d2xsig_g`` take ``(x, sigma)``; ``sigma_T``
    takes a :class:`DiscreteMeasure`; ``dm_sigma_T`` is the pointwise gradient
    of the aggregate (the derivative of its integrand).  ``best_responses``
    maps ``(x, sigma, T)`` to the sorted tuple of destinations.
    """

    name: str
    g: Callable[[float, float], float]
    dxg: Callable[[float, float], float]
    sigma_T: Callable[[DiscreteMeasure], float]
    dm_sigma_T: Callable[[float], float] | None = None
    d2xx_g: Callable[[float, float], float] | None = None
    d2xsig_g: Callable[[float, float], float] | None = None
    best_responses_fn: Callable | None = None
    d: int = 1
    k: int = 1
    lagrangian_form: str = "quadratic_kinetic"
    kinks: tuple[float, ...] = ()
    branch_structure: str = "single"  # 'single' | 'interval' | 'branch'
    coercive: bool = True
    sigma_hint: tuple[float, float] = (-10.0, 10.0)
    admissible_m0: Callable[[DiscreteMeasure], bool] | None = None
    params: dict = field(default_factory=dict)
    conditions: dict = field(default_factory=dict)

    # -- coupling ------------------------------------------------------------
    def G(self, x: float, m: DiscreteMeasure) -> float:
        """Terminal cost ``g(x, sigma_T(m))``."""
        return float(self.g(x, self.sigma_T(m)))

    def dxG(self, x: float, m: DiscreteMeasure) -> float:
        """Analytic x-derivative of the terminal cost."""
        return float(self.dxg(x, self.sigma_T(m)))

    def nearest_kink(self, x: float) -> float:
        """Distance from ``x`` to the closest declared kink (inf if none)."""
        if not self.kinks:
            return math.inf
        return min(abs(x - kp) for kp in self.kinks)

    def best_responses(
        self, x: float, sigma: float, T: float, value_tol_scale: float = 1e-11
    ) -> tuple[float, ...]:
        """Destination set of an agent at ``x`` against a frozen aggregate."""
        if self.best_responses_fn is not None:
            return self.best_responses_fn(x, sigma, T, value_tol_scale)
        return _numeric_best_responses(self, x, sigma, T, value_tol_scale)

    def has_second_order(self) -> bool:
        return self.d2xx_g is not None and self.d2xsig_g is not None and self.dm_sigma_T is not None


def _numeric_best_responses(s: Scenario, x, sigma, T, value_tol_scale) -> tuple[float, ...]:
    if not s.coercive:
        raise PreconditionError(
            f"scenario {s.name!r} has a non-coercive one-agent objective; "
            "a dedicated branch solver is required"
        )
    obj = lambda y: (x - y) ** 2 / (2.0 * T) + s.g(y, sigma)
    res = minimize_coercive(obj, center=x, half_width=2.0 * (1.0 + abs(x)),
                            value_tol_scale=value_tol_scale)
    return res.argmins


# -----------------------------------------------------------------------------
# Derivative check
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class DerivativeCheck:
    """Report comparing an analytic x-gradient with a central difference."""

    x: float
    analytic: float
    central_fd: float
    abs_err: float
    bound: float
    passed: bool


def dxG_fd_check(s: Scenario, x: float, m: DiscreteMeasure, h: float = 1e-6) -> DerivativeCheck:
    """Guard an analytic derivative against a central finite difference.

    Probes at distance <= 2h from a declared kink are refused (the difference
    quotient straddles the non-smooth point and says nothing useful there).
    """
    gap = s.nearest_kink(x)
    if gap <= 2.0 * h:
        kink = min(s.kinks, key=lambda kp: abs(x - kp))
        raise KinkError(f"probe x={x:g} is within 2h of the kink at {kink:g}")
    analytic = s.dxG(x, m)
    fd = (s.G(x + h, m) - s.G(x - h, m)) / (2.0 * h)
    err = abs(analytic - fd)
    bound = max(1e-6, 1e-6 * abs(analytic))
    return DerivativeCheck(x, analytic, fd, err, bound, err <= bound)


# -----------------------------------------------------------------------------
# Shared shape pieces
# -----------------------------------------------------------------------------
def _dip_phi(x0: float, z: float):
    """Even bump-with-dip profile: bounded in [1, 2], lowest at |x - x0| = z."""

    def phi(y):
        return 2.0 - np.exp(-((np.abs(y - x0) - z) ** 2))

    def dphi(y):
        r = abs(y - x0)
        return 2.0 * (r - z) * math.exp(-((r - z) ** 2)) * (1.0 if y >= x0 else -1.0)

    return phi, dphi


def _piecewise_increasing_phi():
    """Slope-1 / slope-2 / slope-1 increasing profile with joints at 0 and 1."""

    def phi(y):
        y = np.asarray(y, dtype=float)
        out = np.where(y <= 0.0, y, np.where(y < 1.0, 2.0 * y, y + 1.0))
        return float(out) if out.ndim == 0 else out

    def dphi(y):
        if y <= 0.0 or y >= 1.0:
            return 1.0
        return 2.0

    return phi, dphi


def smoothed_inverse_sqrt():
    """Nonnegative C^2 profile equal to ``sigma**-0.5`` on [1, inf).

    Below 1 it is the quadratic blend ``1 + (1-s)/2 + 3(1-s)^2/8``, which
    matches value and first two derivatives at s = 1, stays positive, and
    keeps ``phi(s) + 2 s phi'(s) = 1.875 (1-s)^2 >= 0`` on [0, 1).
    """

    def phi(sig):
        sig = np.asarray(sig, dtype=float)
        u = 1.0 - sig
        below = 1.0 + 0.5 * u + 0.375 * u * u
        with np.errstate(invalid="ignore"):
            above = np.where(sig > 0, sig, 1.0) ** -0.5
        out = np.where(sig < 1.0, below, above)
        return float(out) if out.ndim == 0 else out

    def dphi(sig):
        if sig < 1.0:
            return -0.5 - 0.75 * (1.0 - sig)
        return -0.5 * sig**-1.5

    return phi, dphi


# -----------------------------------------------------------------------------
# Dedicated best-response solvers
# -----------------------------------------------------------------------------
def _special_unique_best_responses(x, sigma, T, value_tol_scale):
    """Exact destination set for the piecewise slope-1/2/1 coupling.

    On each linear piece of the profile the objective is a shifted parabola;
    the global minimizers are found by comparing the clipped vertices and the
    joints.  Ties within ``value_tol_scale * (1 + |min|)`` count as co-minimal.
    """
    phi, _ = _piecewise_increasing_phi()

    def val(y):
        return (x - y) ** 2 / (2.0 * T) + float(phi(y)) * sigma

    cands = {
        min(x - sigma * T, 0.0),          # vertex of the y <= 0 piece, clipped
        min(max(x - 2.0 * sigma * T, 0.0), 1.0),
        max(x - sigma * T, 1.0),
        0.0,
        1.0,
    }
    scored = sorted((val(y), y) for y in cands)
    vmin = scored[0][0]
    tol = value_tol_scale * (1.0 + abs(vmin))
    kept = sorted(y for v, y in scored if v <= vmin + tol)
    dedup: list[float] = []
    for y in kept:
        if not dedup or abs(y - dedup[-1]) > 1e-9 * (1.0 + abs(y)):
            dedup.append(y)
    return tuple(dedup)


def _cubic_best_responses(x, sigma, T, value_tol_scale):
    """Stationary destinations of the cubic coupling: roots of y + T*sigma*y^2 = x."""
    del value_tol_scale
    if sigma == 0.0 or T == 0.0:
        return (x,)
    disc = 1.0 + 4.0 * T * sigma * x
    if disc < 0.0:
        return ()
    sq = math.sqrt(disc)
    y_plus = 2.0 * x / (1.0 + sq)  # rationalized (-1 + sq) / (2 T sigma)
    if disc == 0.0:
        return (y_plus,)
    y_minus = (-1.0 - sq) / (2.0 * T * sigma)
    return tuple(sorted((y_minus, y_plus)))


def _make_linear_response(denom: Callable[[float, float], float]):
    def best(x, sigma, T, value_tol_scale):
        del value_tol_scale
        d = denom(sigma, T)
        if d <= 0.0:
            raise PreconditionError(f"destination map degenerate: 1 + T*weight = {d:g}")
        return (x / d,)

    return best


def _exp_sin_best_responses(x, sigma, T, value_tol_scale):
    del value_tol_scale
    hval = 2.0 + sigma
    if hval <= 0.0:
        raise PreconditionError("aggregate outside (-2, inf): objective not coercive")
    root = solve_monotone(lambda y: y - T * hval * math.exp(-y), target=x, x0=x, step=1.0 + abs(x))
    return (root,)


# -----------------------------------------------------------------------------
# Catalog
# -----------------------------------------------------------------------------
def catalog(name: str, **params) -> Scenario:
    """Build a named scenario.  Unknown names raise ``ValueError`` listing the catalog."""
    if name == "ll_two_equilibria":
        return _make_ll_two_equilibria(**params)
    if name == "ll_running_cost":
        return _make_ll_running_cost(**params)
    if name == "special_unique":
        return _make_special_unique(**params)
    if name == "cubic":
        return _make_cubic(**params)
    if name == "disp_phi_quadratic":
        return _make_disp_phi_quadratic(**params)
    if name == "exp_sin":
        return _make_exp_sin(**params)
    if name == "bounded_moment":
        return _make_bounded_moment(**params)
    if name == "linear_in_x":
        return _make_linear_in_x(**params)
    raise ValueError(f"unknown scenario {name!r}; catalog: {', '.join(CATALOG_NAMES)}")


def factored_scenario(
    name: str,
    g: Callable[[float, float], float],
    sigma_T: Callable[[DiscreteMeasure], float],
    dxg: Callable[[float, float], float] | None = None,
    **kwargs,
) -> Scenario:
    """User-defined scenario from closures; ``dxg`` defaults to a central difference."""
    if dxg is None:
        def dxg(x, sig, _g=g):
            h = 1e-6 * (1.0 + abs(x))
            return (_g(x + h, sig) - _g(x - h, sig)) / (2.0 * h)

    return Scenario(name=name, g=g, dxg=dxg, sigma_T=sigma_T, **kwargs)


def _make_ll_two_equilibria(x0: float = 0.0, z: float = 1.0, phi=None, dphi=None, strict: bool = False):
    if phi is None:
        phi, dphi = _dip_phi(x0, z)
    elif dphi is None:
        raise ValueError("a custom phi requires its derivative dphi")
    if strict:
        _check_dip_shape(phi, x0, z)
    sig_T = lambda m: integrate(m, phi)
    return Scenario(
        name="ll_two_equilibria",
        g=lambda x, sig: phi(x) * sig,
        dxg=lambda x, sig: dphi(x) * sig,
        sigma_T=sig_T,
        dm_sigma_T=dphi,
        kinks=(x0,),
        branch_structure="interval",
        sigma_hint=(1.0, 2.0),
        params={"x0": x0, "z": z, "phi": phi, "dphi": dphi,
                "defaults_note": "dip location z and depth are package defaults, not pinned upstream"},
        conditions={"LL": "holds", "sigma": "holds-for-dirac-at-x0", "uniqueness": "fails"},
    )


def _check_dip_shape(phi, x0: float, z: float, grid_n: int = 2001, span: float = 12.0):
    """Grid validation of the two-well profile: positive, bounded, even, dipped,
    decreasing on (x0, x0+z) and increasing beyond."""
    ys = x0 + np.linspace(-span, span, grid_n)
    vals = np.array([float(phi(y)) for y in ys])
    if np.any(vals <= 0) or np.any(vals > 1e6):
        raise ValueError("phi must be positive and bounded on the probe grid")
    mirrored = np.array([float(phi(2 * x0 - y)) for y in ys])
    if np.max(np.abs(vals - mirrored)) > 1e-9:
        raise ValueError("phi must be symmetric about x0")
    if not float(phi(x0 + z)) < float(phi(x0)):
        raise ValueError("phi must dip below phi(x0) at x0 + z")
    inner = x0 + np.linspace(1e-3, z, 400)
    outer = x0 + np.linspace(z, span, 400)
    if np.any(np.diff([float(phi(y)) for y in inner]) > 1e-12):
        raise ValueError("phi must be nonincreasing on (x0, x0+z)")
    if np.any(np.diff([float(phi(y)) for y in outer]) < -1e-12):
        raise ValueError("phi must be nondecreasing on (x0+z, inf)")


def _make_ll_running_cost(T: float = 2.0):
    phi_run = lambda x: math.sqrt(2.0 * abs(x))
    dphi_run = lambda x: math.copysign(1.0 / math.sqrt(2.0 * abs(x)), x) if x != 0.0 else math.nan
    return Scenario(
        name="ll_running_cost",
        g=lambda x, sig: -T * abs(x),
        dxg=lambda x, sig: -T * math.copysign(1.0, x) if x != 0.0 else math.nan,
        sigma_T=lambda m: 0.0,
        kinks=(0.0,),
        lagrangian_form="running_coupled",
        params={"T": T, "phi_run": phi_run, "dphi_run": dphi_run},
        conditions={"LL-running": "holds", "uniqueness": "fails"},
    )


def _make_special_unique(psi=None, dpsi=None, strict: bool = False):
    if psi is None:
        psi = lambda x: x
        dpsi = lambda x: 1.0
    elif dpsi is None:
        raise ValueError("a custom psi requires its derivative dpsi")
    if strict:
        xs = np.linspace(-20, 20, 2001)
        if np.any(np.diff([float(psi(x)) for x in xs]) <= 0):
            raise ValueError("psi must be strictly increasing")
    phi, dphi = _piecewise_increasing_phi()
    return Scenario(
        name="special_unique",
        g=lambda x, sig: phi(x) * sig,
        dxg=lambda x, sig: dphi(x) * sig,
        sigma_T=lambda m: integrate(m, psi),
        dm_sigma_T=dpsi,
        best_responses_fn=_special_unique_best_responses,
        kinks=(0.0, 1.0),
        branch_structure="interval",
        sigma_hint=(-5.0, 5.0),
        params={"psi": psi, "dpsi": dpsi, "phi": phi, "dphi": dphi},
        conditions={"uniqueness": "holds"},
    )


def _make_cubic():
    f = lambda x: x**3 / 3.0
    return Scenario(
        name="cubic",
        g=lambda x, sig: f(x) * sig,
        dxg=lambda x, sig: x * x * sig,
        sigma_T=lambda m: integrate(m, f),
        dm_sigma_T=lambda x: x * x,
        d2xx_g=lambda x, sig: 2.0 * x * sig,
        d2xsig_g=lambda x, sig: x * x,
        best_responses_fn=_cubic_best_responses,
        branch_structure="branch",
        coercive=False,
        sigma_hint=(0.05, 4.0),
        params={"f": f},
        conditions={"LL": "holds", "sigma": "fails", "-sigma": "fails",
                    "L2": "fails", "-L2": "fails"},
    )


def _make_disp_phi_quadratic(phi_sigma=None, dphi_sigma=None, strict: bool = False):
    if phi_sigma is None:
        phi_sigma, dphi_sigma = smoothed_inverse_sqrt()
    elif dphi_sigma is None:
        raise ValueError("a custom phi_sigma requires its derivative dphi_sigma")
    if strict:
        sigs = np.concatenate([np.linspace(0.01, 1.0, 300), np.geomspace(1.0, 100.0, 300)])
        vals = np.array([float(phi_sigma(s)) + 2.0 * s * float(dphi_sigma(s)) for s in sigs])
        if np.any(vals < -1e-12):
            raise ValueError("phi_sigma violates phi >= -2*sigma*phi' on the grid")
    best = _make_linear_response(lambda sig, T: 1.0 + T * float(phi_sigma(sig)))
    return Scenario(
        name="disp_phi_quadratic",
        g=lambda x, sig: 0.5 * x * x * float(phi_sigma(sig)),
        dxg=lambda x, sig: x * float(phi_sigma(sig)),
        sigma_T=lambda m: 0.5 * second_moment(m),
        dm_sigma_T=lambda x: x,
        d2xx_g=lambda x, sig: float(phi_sigma(sig)),
        d2xsig_g=lambda x, sig: x * float(dphi_sigma(sig)),
        best_responses_fn=best,
        sigma_hint=(0.0, 50.0),
        params={"phi_sigma": phi_sigma, "dphi_sigma": dphi_sigma},
        conditions={"D": "holds", "sigma": "fails", "-sigma": "fails",
                    "L2": "fails", "-L2": "fails"},
    )


def _make_exp_sin():
    return Scenario(
        name="exp_sin",
        g=lambda x, sig: math.exp(-x) * (2.0 + sig),
        dxg=lambda x, sig: -math.exp(-x) * (2.0 + sig),
        sigma_T=lambda m: integrate(m, math.sin),
        dm_sigma_T=math.cos,
        d2xx_g=lambda x, sig: math.exp(-x) * (2.0 + sig),
        d2xsig_g=lambda x, sig: -math.exp(-x),
        best_responses_fn=_exp_sin_best_responses,
        sigma_hint=(-1.0, 1.0),
        conditions={"L2": "holds", "LL": "fails", "D": "fails"},
    )


def _make_bounded_moment(M: float = 1.0, a: float = 0.0):
    if M <= 0:
        raise ValueError("moment bound M must be positive")
    psi = lambda x: 1.0 + (x / (2.0 * M) - a) ** 2
    dpsi = lambda x: (x / (2.0 * M) - a) / M
    best = _make_linear_response(lambda sig, T: 1.0 + T * sig)
    return Scenario(
        name="bounded_moment",
        g=lambda x, sig: 0.5 * x * x * sig,
        dxg=lambda x, sig: x * sig,
        sigma_T=lambda m: integrate(m, psi),
        dm_sigma_T=dpsi,
        d2xx_g=lambda x, sig: sig,
        d2xsig_g=lambda x, sig: x,
        best_responses_fn=best,
        sigma_hint=(1.0, 1.0 + (abs(a) + 0.5) ** 2),
        admissible_m0=lambda m: second_moment(m) <= M * M * (1.0 + 1e-12),
        params={"M": M, "a": a, "psi": psi, "dpsi": dpsi},
        conditions={"L2": "holds-on-admissible", "sigma": "fails", "-sigma": "fails-for-large-a"},
    )


def _make_linear_in_x(psi=None, dpsi=None):
    if psi is None:
        psi = lambda x: x**3 + x
        dpsi = lambda x: 3.0 * x * x + 1.0
    elif dpsi is None:
        raise ValueError("a custom psi requires its derivative dpsi")

    def best(x, sigma, T, value_tol_scale):
        del value_tol_scale
        return (x - T * sigma,)

    return Scenario(
        name="linear_in_x",
        g=lambda x, sig: x * sig,
        dxg=lambda x, sig: sig,
        sigma_T=lambda m: integrate(m, psi),
        dm_sigma_T=dpsi,
        d2xx_g=lambda x, sig: 0.0,
        d2xsig_g=lambda x, sig: 1.0,
        best_responses_fn=best,
        sigma_hint=(-10.0, 10.0),
        params={"psi": psi, "dpsi": dpsi},
        conditions={"sigma": "holds", "LL": "fails", "D": "fails", "L2": "fails"},
    )
