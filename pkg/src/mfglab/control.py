"""Single-agent problems for a quadratic kinetic Lagrangian.

With kinetic cost ``|v|^2 / 2`` the optimal trajectories are straight lines, so
the one-agent problem collapses to minimizing ``|x - y|^2 / (2T) + terminal(y)``
over the endpoint ``y``.  This module enumerates *all* global minimizers of
that objective, checks the ordering lemma behind monotone selection arguments
("adding a strictly increasing function moves minimizers left"), evaluates
Euler-Lagrange residuals for the measure-coupled running-cost construction,
and locates shock points — pairs of distinct co-optimal endpoints — for
bounded non-convex terminal costs via half-line coordinate maps and monotone
root finding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import BracketError, DomainError, PreconditionError
from .optimize1d import (
    bisect_root,
    enumerate_minima,
    eval_grid,
    golden_min,
    minimize_coercive,
)

FOC_TOL_SCALE = 1e-6  # FOC residual allowance: 1e-6 * (1 + |x|)


# -----------------------------------------------------------------------------
# Global minimizer enumeration
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class MinimizerSet:
    """All global minimizers of one endpoint objective, within tolerance.

    ``foc_residuals[i]`` is ``|y_i + T * terminal'(y_i) - x|`` where the
    derivative is available and the argmin is away from declared kinks;
    ``nan`` otherwise.
    """

    x: float
    argmins: tuple[float, ...]
    value: float
    foc_residuals: tuple[float, ...]
    value_tol: float
    sep_tol: float

    @property
    def multiple(self) -> bool:
        return len(self.argmins) > 1

    def lower(self) -> float:
        return self.argmins[0]

    def upper(self) -> float:
        return self.argmins[-1]


def minimize_terminal(
    x: float,
    T: float,
    terminal: Callable[[float], float],
    bracket: tuple[float, float] | None = None,
    grid_n: int = 4096,
    dterminal: Callable[[float], float] | None = None,
    kinks: Sequence[float] = (),
    value_tol_scale: float = 1e-9,
    sep_tol_scale: float = 1e-4,
    max_widen: int = 6,
) -> MinimizerSet:
    """Enumerate the global minimizers of ``(x - y)^2 / (2T) + terminal(y)``.

    A dense grid locates candidate basins, each polished by golden section;
    co-minimality is judged at ``value_tol = 1e-9 (1 + |value|)`` and argmins
    closer than ``sep_tol`` collapse to one.  If the minimum lands on the
    bracket edge the bracket doubles (up to ``max_widen`` times) before
    raising :class:`BracketError`.  When ``dterminal`` is supplied, argmins
    away from ``kinks`` get a Newton polish and a first-order-condition
    residual.
    """
    if T <= 0:
        raise ValueError("horizon T must be positive")

    def obj(y):
        return (x - y) ** 2 / (2.0 * T) + terminal(y)

    if bracket is None:
        res = minimize_coercive(
            obj, center=x, half_width=2.0 * (1.0 + abs(x)), grid_n=grid_n,
            max_widen=max_widen, value_tol_scale=value_tol_scale, sep_tol_scale=sep_tol_scale,
        )
    else:
        lo, hi = bracket
        for _ in range(max_widen + 1):
            res = enumerate_minima(
                obj, lo, hi, grid_n=grid_n,
                value_tol_scale=value_tol_scale, sep_tol_scale=sep_tol_scale,
            )
            if not res.boundary_hit:
                break
            mid, w = 0.5 * (lo + hi), hi - lo
            lo, hi = mid - w, mid + w
        else:
            raise BracketError("minimum keeps hitting the bracket boundary while widening")

    argmins = list(res.argmins)
    residuals: list[float] = []
    if dterminal is not None:
        for i, y in enumerate(argmins):
            near_kink = any(abs(y - kp) <= 1e-7 * (1.0 + abs(kp)) for kp in kinks)
            if near_kink:
                residuals.append(math.nan)
                continue
            y_pol = _newton_polish(x, T, obj, dterminal, y, res.sep_tol, kinks)
            argmins[i] = y_pol
            residuals.append(abs(y_pol + T * dterminal(y_pol) - x))
    else:
        residuals = [math.nan] * len(argmins)

    value = min(float(obj(y)) for y in argmins)
    return MinimizerSet(
        x=x,
        argmins=tuple(argmins),
        value=value,
        foc_residuals=tuple(residuals),
        value_tol=res.value_tol,
        sep_tol=res.sep_tol,
    )


def _newton_polish(x, T, obj, dterminal, y0, basin_radius, kinks, steps: int = 6):
    """A few damped Newton steps on the FOC, accepted only while they stay in
    the basin, improve the objective, and keep clear of kinks."""
    y, v = y0, float(obj(y0))
    for _ in range(steps):
        r = y + T * dterminal(y) - x
        h = 1e-7 * (1.0 + abs(y))
        dr = 1.0 + T * (dterminal(y + h) - dterminal(y - h)) / (2.0 * h)
        if not np.isfinite(dr) or abs(dr) < 1e-14:
            break
        step = -r / dr
        y_new = y + step
        if abs(y_new - y0) > max(basin_radius, 1e-6 * (1 + abs(y0))):
            break
        if any(abs(y_new - kp) <= 1e-9 * (1.0 + abs(kp)) for kp in kinks):
            break
        v_new = float(obj(y_new))
        if not np.isfinite(v_new) or v_new > v + 1e-12 * (1.0 + abs(v)):
            break
        y, v = y_new, v_new
        if abs(step) < 1e-14 * (1.0 + abs(y)):
            break
    return y


def minimizer_bounds_check(x: float, sigma: float, T: float, result: MinimizerSet) -> bool:
    """Endpoints of the piecewise slope-1/2/1 problem obey |y| <= |x| + 2T|sigma|."""
    bound = abs(x) + 2.0 * T * abs(sigma)
    return all(abs(y) <= bound + 1e-9 * (1.0 + bound) for y in result.argmins)


# -----------------------------------------------------------------------------
# Ordering of minimizers under increasing perturbations
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class OrderingCheck:
    passed: bool
    argmins_f: tuple[float, ...]
    argmins_f_plus_g: tuple[float, ...]
    witness: tuple[float, float] | None  # (argmin of F+G, argmin of F) violating the order


def fg_ordering_check(
    f: Callable[[float], float],
    g_increasing: Callable[[float], float],
    interval: tuple[float, float],
    grid_n: int = 4096,
) -> OrderingCheck:
    """Verify that every minimizer of ``f + g`` sits weakly left of every
    minimizer of ``f`` when ``g`` is strictly increasing (d = 1)."""
    lo, hi = interval
    mf = enumerate_minima(f, lo, hi, grid_n=grid_n, include_boundary=True)
    mfg = enumerate_minima(lambda y: f(y) + g_increasing(y), lo, hi, grid_n=grid_n,
                           include_boundary=True)
    if not mf.argmins or not mfg.argmins:
        raise DomainError("empty minimizer set on the interval")
    slack = max(mf.sep_tol, mfg.sep_tol)
    hi_fg, lo_f = max(mfg.argmins), min(mf.argmins)
    ok = hi_fg <= lo_f + slack
    return OrderingCheck(ok, mf.argmins, mfg.argmins, None if ok else (hi_fg, lo_f))


# -----------------------------------------------------------------------------
# Euler-Lagrange residuals for the running-coupled construction
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class ELResidualReport:
    interior_max: float
    terminal: float
    grid_h: float
    n: int


def el_residual(xi: np.ndarray, T: float) -> ELResidualReport:
    """Residuals of the optimality system for the square-root running coupling.

    The candidate curve (sampled on a uniform grid with ``xi[0] = 0``) must
    satisfy ``xi'' = sign(xi)`` in the interior — second differences are
    compared against the drift — and the transversality condition
    ``xi'(T) = T * xi(T)/|xi(T)|`` at the horizon (backward difference).
    """
    xi = np.asarray(xi, dtype=float)
    n = len(xi) - 1
    if n < 2:
        raise ValueError("need at least 3 grid points")
    if xi[0] != 0.0:
        raise ValueError("curve must start at 0")
    if xi[-1] == 0.0:
        raise DomainError("terminal condition undefined: xi(T) = 0")
    h = T / n
    interior = xi[1:-1]
    second = (xi[2:] - 2.0 * xi[1:-1] + xi[:-2]) / (h * h)
    drift = np.sign(interior)
    if np.any(interior == 0.0):
        raise DomainError("curve crosses 0 at an interior grid point; drift undefined there")
    interior_max = float(np.max(np.abs(second - drift)))
    xdot_T = (xi[-1] - xi[-2]) / h
    terminal = abs(xdot_T - T * math.copysign(1.0, xi[-1]))
    return ELResidualReport(interior_max, terminal, h, n)


def running_cost(xi: np.ndarray, T: float, field: np.ndarray) -> float:
    """Total cost of a sampled curve under the square-root running coupling.

    ``field[i]`` is the frozen crowd factor at time ``t_i`` (for the canonical
    parabola it equals ``t_i``).  Kinetic energy uses midpoint velocities; the
    position term uses the trapezoid rule; the terminal reward is ``-T |x(T)|``.
    """
    xi = np.asarray(xi, dtype=float)
    n = len(xi) - 1
    h = T / n
    v_mid = np.diff(xi) / h
    kinetic = float(np.sum(0.5 * v_mid**2) * h)
    pos = np.sqrt(2.0 * np.abs(xi)) * np.asarray(field, dtype=float)
    position = float(np.trapz(pos, dx=h))
    return kinetic + position - T * abs(float(xi[-1]))


# -----------------------------------------------------------------------------
# Half-line coordinate maps and shock search
# -----------------------------------------------------------------------------
def coordinate_F(
    a,
    psi: Callable,
    bracket: tuple[float, float] = (-20.0, 20.0),
    grid_n: int = 2048,
) -> np.ndarray:
    """Coordinate map ``F_i(a) = min over {x_i >= 0} - min over {x_i <= 0}``
    of ``a . x + psi(x)`` (supported for d = 1 and d = 2).

    Each constrained minimum is found by grid scan plus golden refinement with
    the constraint boundary allowed to win; attainment on the *outer* bracket
    edge raises :class:`BracketError`.
    """
    a_vec = np.atleast_1d(np.asarray(a, dtype=float))
    d = len(a_vec)
    if d == 1:
        fplus = _halfline_min(lambda y: a_vec[0] * y + psi(y), 0.0, bracket[1], grid_n)[1]
        fminus = _halfline_min(lambda y: a_vec[0] * y + psi(y), bracket[0], 0.0, grid_n)[1]
        return np.array([fplus - fminus])
    if d == 2:
        return np.array([_coordinate_F_2d(a_vec, psi, bracket, i) for i in range(2)])
    raise PreconditionError("coordinate_F supports d <= 2 (grid enumeration cost)")


def _halfline_min(f, lo, hi, grid_n, max_widen: int = 6):
    """Minimum of ``f`` on [lo, hi] where exactly one of lo / hi is the hard
    constraint boundary 0 (allowed to attain) and the other edge is an
    artificial bracket that widens outward when it wins."""
    for _ in range(max_widen + 1):
        res = enumerate_minima(f, lo, hi, grid_n=grid_n, include_boundary=True)
        outer = lo if hi == 0.0 else hi
        pad = 2.0 * (hi - lo) / (grid_n - 1)
        # among co-minimal argmins, prefer one clear of the artificial edge
        interior = [y for y in res.argmins if abs(y - outer) > pad]
        if interior:
            vals = [float(f(y)) for y in interior]
            i = int(np.argmin(vals))
            return interior[i], vals[i]
        if hi == 0.0:
            lo *= 2.0
        else:
            hi *= 2.0
    raise BracketError("half-line minimum keeps reaching the outer bracket edge")


def _coordinate_F_2d(a_vec, psi, bracket, i):
    lo, hi = bracket
    n = 160
    xs = np.linspace(lo, hi, n)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    Z = a_vec[0] * X + a_vec[1] * Y + np.asarray(psi(np.stack([X, Y], axis=-1)), dtype=float)
    coord = X if i == 0 else Y
    vplus = float(np.min(np.where(coord >= 0, Z, np.inf)))
    vminus = float(np.min(np.where(coord <= 0, Z, np.inf)))
    return vplus - vminus


@dataclass(frozen=True)
class ShockCertificate:
    """Witness that ``|x - y|^2/(2t) + phi(y)`` has two distinct minimizers."""

    t_star: float
    x: float
    y1: float
    y2: float
    value_gap: float
    separation: float
    values: tuple[float, float]


@dataclass(frozen=True)
class ShockNotFound:
    reason: str
    largest_convexity_violation: float
    largest_value_gap: float
    t_checked: tuple[float, ...]


def default_t_grid(t0: float = 0.1, factor: float = 1.5, steps: int = 26) -> tuple[float, ...]:
    """Multiplicative horizon sweep; the first detected shock time is an upper
    bound for the true onset, which is not known in closed form."""
    return tuple(t0 * factor**k for k in range(steps))


def find_shock(
    phi: Callable,
    d: int = 1,
    t_grid: Sequence[float] | None = None,
    x_bracket: tuple[float, float] = (-8.0, 8.0),
    y_bracket: tuple[float, float] = (-24.0, 24.0),
    grid_n: int = 2048,
    check_growth: bool = True,
    sep_tol: float = 1e-3,
):
    """Search for a time and start point where the endpoint problem has two
    distinct global minimizers.

    Probes mid-point convexity of ``phi`` on a grid; if no violation exists the
    terminal cost is (grid-)convex and a not-found report is returned.  For
    each horizon in the sweep the terminal is recentred and tilted so the
    violation straddles the origin, the scalar coordinate map
    ``F(a) = F^+(a) - F^-(a)`` (nondecreasing in ``a``) is driven to zero by
    bisection, and the two half-line minimizers are read off.  Returns a
    :class:`ShockCertificate` at the first horizon exhibiting separation
    beyond ``sep_tol``, else a :class:`ShockNotFound` report.
    """
    if d != 1:
        raise PreconditionError("find_shock is implemented for d = 1")
    t_grid = tuple(t_grid) if t_grid is not None else default_t_grid()

    probe = _nonconvexity_probe(phi, x_bracket)
    if probe is None:
        return ShockNotFound("no mid-point convexity violation found (phi looks convex)",
                             0.0, 0.0, t_grid)
    x0, hstep, viol = probe

    if check_growth:
        _growth_check(phi, max(abs(y_bracket[0]), abs(y_bracket[1])), max(t_grid))

    best_gap = math.inf
    checked = []
    for t in t_grid:
        checked.append(t)
        if viol - hstep * hstep / (2.0 * t) <= 0:
            continue  # quadratic still wins at this horizon

        def psi_t(y):
            return y * y / (2.0 * t) + phi(y)

        b = (psi_t(x0 + hstep) - psi_t(x0 - hstep)) / (2.0 * hstep)
        psi0 = psi_t(x0)

        def psi_tilde(y):
            return psi_t(y + x0) - psi0 - b * y

        cert = _shock_at_t(phi, psi_tilde, t, x0, b, y_bracket, grid_n, sep_tol)
        if isinstance(cert, ShockCertificate):
            return cert
        best_gap = min(best_gap, cert)
    return ShockNotFound(
        "no two-minimizer configuration found on the horizon sweep",
        viol,
        best_gap if math.isfinite(best_gap) else 0.0,
        tuple(checked),
    )


def _nonconvexity_probe(phi, x_bracket, n_centers: int = 161, n_steps: int = 60):
    """Best (x0, h) mid-point violation, ranked by violation / h^2.

    The ratio ranking keeps the quadratic-versus-violation threshold sharp, so
    the first horizon that can exhibit a shock is close to the true onset.
    """
    lo, hi = x_bracket
    centers = np.linspace(lo, hi, n_centers)
    steps = np.geomspace(1e-2 * (hi - lo), 0.5 * (hi - lo), n_steps)
    best = None
    for h in steps:
        mid = eval_grid(phi, centers)
        up = eval_grid(phi, centers + h)
        dn = eval_grid(phi, centers - h)
        v = mid - 0.5 * (up + dn)
        i = int(np.argmax(v))
        if v[i] > 1e-12 * (1.0 + np.max(np.abs(mid))):
            score = v[i] / (h * h)
            if best is None or score > best[0]:
                best = (score, float(centers[i]), float(h), float(v[i]))
    if best is None:
        return None
    _, x0, hstep, viol = best
    return x0, hstep, viol


def _growth_check(phi, radius, t_max):
    """Reject terminal costs that beat the quadratic at every probed radius."""
    for r in (radius, 2.0 * radius, 4.0 * radius):
        q = r * r / (2.0 * t_max)
        if float(phi(r)) < q or float(phi(-r)) < q:
            return
    raise PreconditionError(
        "terminal cost grows at least quadratically on the probe radii; "
        "the endpoint objective may not be coercive"
    )


def _shock_at_t(phi, psi_tilde, t, x0, b, y_bracket, grid_n, sep_tol):
    """Drive F(a) = F+ - F- to zero and read off the two half-line minimizers.

    Returns a certificate, or the residual value gap (float) when the two
    minimizers coincide at the origin (no genuine shock at this horizon).
    """
    lo, hi = y_bracket

    def halves(a):
        yp, vp = _halfline_min(lambda y: a * y + psi_tilde(y), 0.0, hi, grid_n)
        ym, vm = _halfline_min(lambda y: a * y + psi_tilde(y), lo, 0.0, grid_n)
        return yp, vp, ym, vm

    def F(a):
        _, vp, _, vm = halves(a)
        return vp - vm

    a_rad = 1.0
    for _ in range(60):
        if F(-a_rad) < 0.0 < F(a_rad):
            break
        a_rad *= 2.0
    else:
        raise PreconditionError("could not bracket the root of the coordinate map")
    a_root = bisect_root(F, -a_rad, a_rad, xtol=1e-13 * (1.0 + a_rad))
    yp, vp, ym, vm = halves(a_root)
    gap = abs(vp - vm)
    if (yp - ym) <= sep_tol:
        return gap
    y1, y2 = ym + x0, yp + x0
    # the recentred minimizers u = y + x0 minimize (a-b) u + psi_t(u), and the
    # endpoint objective at start x carries the linear coefficient -x/t
    x_shock = -t * (a_root - b)
    phi_vals = (
        (x_shock - y1) ** 2 / (2.0 * t) + float(phi(y1)),
        (x_shock - y2) ** 2 / (2.0 * t) + float(phi(y2)),
    )
    return ShockCertificate(
        t_star=t,
        x=x_shock,
        y1=y1,
        y2=y2,
        value_gap=abs(phi_vals[0] - phi_vals[1]),
        separation=y2 - y1,
        values=phi_vals,
    )


def validate_shock(phi, cert: ShockCertificate, value_tol_scale: float = 1e-8) -> bool:
    """Re-evaluate a certificate: co-minimal endpoints, strictly worse midpoint."""
    f = lambda y: (cert.x - y) ** 2 / (2.0 * cert.t_star) + float(phi(y))
    v1, v2 = f(cert.y1), f(cert.y2)
    tol = value_tol_scale * (1.0 + max(abs(v1), abs(v2)))
    mid = f(0.5 * (cert.y1 + cert.y2))
    return abs(v1 - v2) <= tol and mid > max(v1, v2) + tol
