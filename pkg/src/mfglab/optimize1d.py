"""Shared 1-D search machinery: grid-then-refine global minimization and bisection.

Grid-then-refine (dense scan for candidate basins, golden-section polish per
basin) is used instead of pure Newton because several couplings in the catalog
are non-smooth (absolute values, piecewise slopes) and multi-modal; golden
section only needs continuity.  Co-minimality within ``value_tol`` plus
separation beyond ``sep_tol`` is what "two distinct minimizers" means
numerically here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import BracketError, DomainError, PreconditionError

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0  # 1/phi


def eval_grid(f: Callable[[float], float], ys: np.ndarray) -> np.ndarray:
    """Evaluate ``f`` on a grid, vectorizing when the callable supports arrays."""
    try:
        vs = np.asarray(f(ys), dtype=float)
        if vs.shape != ys.shape:
            raise ValueError
    except Exception:
        vs = np.array([float(f(float(y))) for y in ys])
    if not np.all(np.isfinite(vs)):
        bad = ys[~np.isfinite(vs)][0]
        raise DomainError(f"objective is not finite at y = {bad!r}")
    return vs


def golden_min(
    f: Callable[[float], float], lo: float, hi: float, xtol: float = 1e-12, max_iter: int = 200
) -> tuple[float, float]:
    """Golden-section minimum of a continuous function on [lo, hi].

    Returns ``(argmin, value)``.  Requires only continuity; on a unimodal
    interval it converges to the minimizer, with interval width shrinking by
    the golden ratio each step.
    """
    a, b = float(lo), float(hi)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = float(f(c)), float(f(d))
    it = 0
    while (b - a) > xtol and it < max_iter:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = float(f(c))
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = float(f(d))
        it += 1
    ym = 0.5 * (a + b)
    candidates = [(fc, c), (fd, d), (float(f(ym)), ym)]
    v, y = min(candidates)
    return y, v


@dataclass
class GridMinima:
    """All global minimizers found on a bracket, with the tolerances used."""

    argmins: tuple[float, ...]
    value: float
    value_tol: float
    sep_tol: float
    boundary_hit: bool  # global minimum sits at the bracket edge


def _local_min_indices(vs: np.ndarray) -> list[int]:
    """Indices of grid-local minima, compressing flat runs to their midpoints."""
    n = len(vs)
    idx: list[int] = []
    i = 1
    while i < n - 1:
        if vs[i] <= vs[i - 1] and vs[i] <= vs[i + 1]:
            j = i
            while j + 1 < n - 1 and vs[j + 1] == vs[i]:
                j += 1
            if vs[j] <= vs[min(j + 1, n - 1)]:
                idx.append((i + j) // 2)
            i = j + 1
        else:
            i += 1
    return idx


def enumerate_minima(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    grid_n: int = 4096,
    value_tol_scale: float = 1e-9,
    sep_tol_scale: float = 1e-4,
    include_boundary: bool = False,
    xtol: float = 1e-12,
) -> GridMinima:
    """Enumerate the global minimizers of ``f`` on [lo, hi].

    Dense grid scan locates candidate basins; each is polished by golden
    section on its bracketing cells.  Candidates whose refined value lies
    within ``value_tol = value_tol_scale * (1 + |min|)`` of the minimum are
    kept and deduplicated at separation ``sep_tol = sep_tol_scale * width``.

    With ``include_boundary=False`` a global minimum on the bracket edge sets
    ``boundary_hit`` so callers can widen; with ``True`` the edges compete as
    ordinary candidates (used for half-line constrained minimization).
    """
    if not hi > lo:
        raise ValueError("bracket must satisfy lo < hi")
    ys = np.linspace(lo, hi, grid_n)
    vs = eval_grid(f, ys)
    width = hi - lo
    cands: list[tuple[float, float]] = []
    for i in _local_min_indices(vs):
        a, b = ys[max(i - 1, 0)], ys[min(i + 1, grid_n - 1)]
        y, v = golden_min(f, a, b, xtol=xtol * max(1.0, abs(a), abs(b)))
        cands.append((v, y))
    # edges always refine on their first/last cell so boundary minima are seen
    for a, b in ((ys[0], ys[1]), (ys[-2], ys[-1])):
        y, v = golden_min(f, a, b, xtol=xtol * max(1.0, abs(a), abs(b)))
        cands.append((v, y))
    if not cands:
        raise PreconditionError("no minimum candidates found on the bracket")
    vmin = min(v for v, _ in cands)
    value_tol = value_tol_scale * (1.0 + abs(vmin))
    sep_tol = sep_tol_scale * width
    kept = sorted((y, v) for v, y in cands if v <= vmin + value_tol)
    dedup: list[tuple[float, float]] = []
    for y, v in kept:
        if dedup and abs(y - dedup[-1][0]) <= sep_tol:
            if v < dedup[-1][1]:
                dedup[-1] = (y, v)
        else:
            dedup.append((y, v))
    edge_pad = max(sep_tol, (ys[1] - ys[0]))
    boundary = any(y <= lo + edge_pad or y >= hi - edge_pad for y, _ in dedup)
    if not include_boundary and boundary:
        return GridMinima((), vmin, value_tol, sep_tol, True)
    return GridMinima(tuple(y for y, _ in dedup), vmin, value_tol, sep_tol, boundary)


def minimize_coercive(
    f: Callable[[float], float],
    center: float,
    half_width: float,
    grid_n: int = 4096,
    max_widen: int = 6,
    value_tol_scale: float = 1e-9,
    sep_tol_scale: float = 1e-4,
) -> GridMinima:
    """Global minimizers of a coercive objective, auto-widening the bracket.

    The bracket doubles (up to ``max_widen`` times) until no global minimizer
    touches the edge; a persistent edge minimum raises :class:`BracketError`.
    """
    w = half_width
    for _ in range(max_widen + 1):
        res = enumerate_minima(
            f,
            center - w,
            center + w,
            grid_n=grid_n,
            value_tol_scale=value_tol_scale,
            sep_tol_scale=sep_tol_scale,
        )
        if not res.boundary_hit:
            return res
        w *= 2.0
    raise BracketError(
        f"minimum keeps reaching the bracket edge after widening to half-width {w/2:g}; "
        "the objective may not be coercive"
    )


def bisect_root(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    xtol: float = 1e-12,
    max_iter: int = 200,
    f_lo: float | None = None,
    f_hi: float | None = None,
) -> float:
    """Root of a continuous sign-changing function by bisection.

    Works for increasing or decreasing ``f``; raises
    :class:`PreconditionError` when the endpoint values do not straddle zero.
    """
    a, b = float(lo), float(hi)
    fa = float(f(a)) if f_lo is None else float(f_lo)
    fb = float(f(b)) if f_hi is None else float(f_hi)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if fa * fb > 0:
        raise PreconditionError(f"no sign change on [{lo:g}, {hi:g}] (f: {fa:g} .. {fb:g})")
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        fm = float(f(mid))
        if fm == 0.0 or (b - a) < xtol:
            return mid
        if (fa < 0) == (fm < 0):
            a, fa = mid, fm
        else:
            b, fb = mid, fm
    return 0.5 * (a + b)


def scan_sign_changes(
    f: Callable[[float], float], lo: float, hi: float, grid_n: int = 512
) -> list[tuple[float, float, float, float]]:
    """Brackets ``(a, b, f(a), f(b))`` where ``f`` changes sign on a grid.

    Non-finite values mark points outside the map's domain; segments touching
    them are skipped rather than reported.
    """
    xs = np.linspace(lo, hi, grid_n)
    vs = np.array([float(f(float(x))) for x in xs])
    out = []
    for i in range(len(xs) - 1):
        a, b = vs[i], vs[i + 1]
        if not (np.isfinite(a) and np.isfinite(b)):
            continue
        if a == 0.0:
            out.append((float(xs[i]), float(xs[i]), a, a))
        elif a * b < 0:
            out.append((float(xs[i]), float(xs[i + 1]), a, b))
    return out


def solve_monotone(
    f: Callable[[float], float],
    target: float = 0.0,
    x0: float = 0.0,
    step: float = 1.0,
    xtol: float = 1e-12,
    max_expand: int = 60,
) -> float:
    """Solve ``f(x) = target`` for monotone ``f`` (either direction) on an expanding bracket."""
    def g(x: float) -> float:
        return float(f(x)) - target

    if g(x0) == 0.0:
        return x0
    s = step
    for _ in range(max_expand):
        lo, hi = x0 - s, x0 + s
        glo, ghi = g(lo), g(hi)
        if glo == 0.0:
            return lo
        if ghi == 0.0:
            return hi
        if glo * ghi < 0:
            return bisect_root(g, lo, hi, xtol=xtol, f_lo=glo, f_hi=ghi)
        s *= 2.0
    raise PreconditionError("could not bracket the root of a monotone function")
