"""Performance curves in quantile space, ironing, and areas.

A curve R(q) gives the expected objective from committing to sale
probability q against one agent: revenue R(q) = q V(q), residual surplus
R(q) = int_0^q (V(t) - V(q)) dt, welfare R(q) = int_0^q V(t) dt.  Curves are
sampled on a grid but carry an exact evaluator built from the
distribution's closed-form quantile machinery, so chord endpoints used by
the ironing operations do not pick up grid interpolation error.

Atoms show up as tagged segments: a ray of slope equal to the atom's value
under revenue, a horizontal piece under residual surplus.  A distribution
whose support starts above zero has a set-valued residual-surplus curve at
q = 1 (posting any price between 0 and the lowest value sells surely but
leaves different surplus); the interval is stored as ``endpoint_set`` and
ironing chords that end at q = 1 aim at its top.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable

import numpy as np
from scipy.optimize import minimize_scalar

from .distributions import (
    RESIDUAL_SURPLUS,
    REVENUE,
    WELFARE,
    Distribution,
    quantile_of_value,
)

TAG_SMOOTH = "smooth"
TAG_ATOM = "atom_flat"
TAG_ZERO = "zero"
TAG_CHORD = "chord"

_HULL_TOL = 1e-9


@dataclass(frozen=True)
class IroningSet:
    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        prev_end = -math.inf
        for a, b in self.intervals:
            if not (0.0 <= a < b <= 1.0):
                raise ValueError(f"interval [{a}, {b}] not inside [0, 1]")
            if a < prev_end:
                raise ValueError("ironing intervals overlap or are unsorted")
            prev_end = b

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self):
        return len(self.intervals)


@dataclass(frozen=True)
class QuantileCurve:
    q: np.ndarray
    r: np.ndarray
    tags: tuple[str, ...]              # one tag per grid interval
    evaluator: Callable                # exact R(q), vectorized
    endpoint_set: tuple[float, float] | None
    breakpoints: tuple[float, ...]
    objective: str
    label: str = ""

    def at(self, q):
        return self.evaluator(q)

    @property
    def top(self) -> float:
        """Value the curve reaches at q = 1 for hull purposes."""
        return self.endpoint_set[1] if self.endpoint_set else float(self.r[-1])


def _atom_quantile_ranges(dist: Distribution) -> list[tuple[float, float]]:
    ranges = []
    for a in dist.atoms:
        hi = quantile_of_value(dist, a.at)
        ranges.append((max(hi - a.mass, 0.0), min(hi, 1.0)))
    return ranges


def performance_curve(dist: Distribution, objective: str, grid_size: int = 512) -> QuantileCurve:
    """Sample the performance curve of one agent drawn from ``dist``."""
    if grid_size < 64:
        raise ValueError("grid_size must be at least 64")
    if not dist.normalized:
        raise ValueError("performance curves need a proper distribution")

    V, P = dist.value_of_quantile, dist.partial_mean

    if objective == REVENUE:
        def evaluator(q):
            q = np.asarray(q, dtype=float)
            with np.errstate(invalid="ignore"):
                out = q * V(np.maximum(q, 1e-300))
            return np.where(q <= 0, 0.0, out)
    elif objective == RESIDUAL_SURPLUS:
        p_vec = np.vectorize(lambda t: P(0.0, t), otypes=[float])

        def evaluator(q):
            q = np.asarray(q, dtype=float)
            out = p_vec(q) - q * V(np.maximum(q, 1e-300))
            return np.where(q <= 0, 0.0, np.maximum(out, 0.0))
    elif objective == WELFARE:
        p_vec = np.vectorize(lambda t: P(0.0, t), otypes=[float])

        def evaluator(q):
            return p_vec(np.asarray(q, dtype=float))
    else:
        raise ValueError(f"unknown objective {objective!r}")

    atom_ranges = _atom_quantile_ranges(dist)
    breaks = sorted({b for rng in atom_ranges for b in rng if 0.0 < b < 1.0})
    grid = np.unique(np.concatenate([np.linspace(0.0, 1.0, grid_size), np.asarray(breaks)]))
    r = np.asarray(evaluator(grid), dtype=float)

    tags = []
    for i in range(len(grid) - 1):
        mid = 0.5 * (grid[i] + grid[i + 1])
        tag = TAG_SMOOTH
        for a, b in atom_ranges:
            if a - 1e-12 <= mid <= b + 1e-12:
                tag = TAG_ATOM
                break
        if tag == TAG_ATOM and objective == RESIDUAL_SURPLUS and abs(r[i]) < 1e-13 and abs(r[i + 1]) < 1e-13:
            tag = TAG_ZERO
        tags.append(tag)

    endpoint_set = None
    if objective == RESIDUAL_SURPLUS and dist.support.lo > 0:
        r1 = float(evaluator(1.0))
        endpoint_set = (r1, r1 + dist.support.lo)

    return QuantileCurve(grid, r, tuple(tags), evaluator, endpoint_set,
                         tuple(breaks), objective, label=dist.family)


# ---------------------------------------------------------------------------
# ironing
# ---------------------------------------------------------------------------


def _upper_hull(q: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Upper convex hull (monotone chain) of points sorted by q."""
    hq, hr = [], []
    for x, y in zip(q, r):
        while len(hq) >= 2:
            cross = (hq[-1] - hq[-2]) * (y - hr[-2]) - (x - hq[-2]) * (hr[-1] - hr[-2])
            if cross >= -1e-15 * max(1.0, abs(y)):
                hq.pop()
                hr.pop()
            else:
                break
        hq.append(float(x))
        hr.append(float(y))
    return np.asarray(hq), np.asarray(hr)


def iron_concave_hull(curve: QuantileCurve) -> tuple[QuantileCurve, IroningSet]:
    """Smallest concave majorant over the sample grid plus endpoint-set top."""
    r_pts = curve.r.copy()
    if curve.endpoint_set is not None:
        r_pts[-1] = curve.endpoint_set[1]
    hq, hr = _upper_hull(curve.q, r_pts)

    def hull_eval(q):
        return np.interp(np.asarray(q, dtype=float), hq, hr)

    hull_r = hull_eval(curve.q)
    scale = max(1.0, float(np.max(np.abs(r_pts))))
    intervals = []
    for i in range(len(hq) - 1):
        inside = (curve.q > hq[i] + 1e-15) & (curve.q < hq[i + 1] - 1e-15)
        if np.any(inside) and np.any(hull_r[inside] > r_pts[inside] + _HULL_TOL * scale):
            if intervals and abs(intervals[-1][1] - hq[i]) < 1e-15:
                intervals[-1] = (intervals[-1][0], float(hq[i + 1]))
            else:
                intervals.append((float(hq[i]), float(hq[i + 1])))

    tags = []
    for i in range(len(curve.q) - 1):
        mid = 0.5 * (curve.q[i] + curve.q[i + 1])
        tag = curve.tags[i]
        for a, b in intervals:
            if a - 1e-12 <= mid <= b + 1e-12:
                tag = TAG_CHORD
                break
        tags.append(tag)

    ironed = QuantileCurve(curve.q.copy(), hull_r, tuple(tags), hull_eval, None,
                           curve.breakpoints, curve.objective, label=curve.label + "+hull")
    return ironed, IroningSet(tuple(intervals))


def iron_with(curve: QuantileCurve, ironing: IroningSet | Iterable) -> QuantileCurve:
    """Replace the curve on each ironed interval by the chord over it.

    A chord ending at q = 1 targets the top of the endpoint set.
    """
    if not isinstance(ironing, IroningSet):
        ironing = IroningSet(tuple(tuple(iv) for iv in ironing))
    base = curve.evaluator
    chords = []
    reaches_one = False
    for a, b in ironing:
        ra = float(base(a))
        if b >= 1.0 - 1e-15 and curve.endpoint_set is not None:
            rb = curve.endpoint_set[1]
            reaches_one = True
        else:
            rb = float(base(b))
        chords.append((a, b, ra, rb))

    def evaluator(q):
        q_arr = np.asarray(q, dtype=float)
        out = np.asarray(base(q_arr), dtype=float).copy()
        for a, b, ra, rb in chords:
            inside = (q_arr >= a) & (q_arr <= b)
            if np.any(inside):
                t = (q_arr - a) / (b - a)
                out = np.where(inside, ra + t * (rb - ra), out)
        return out if out.ndim else float(out)

    extra = [x for a, b, _, _ in chords for x in (a, b)]
    grid = np.unique(np.concatenate([curve.q, np.asarray(extra)])) if extra else curve.q.copy()
    r = np.asarray(evaluator(grid), dtype=float)
    tags = []
    for i in range(len(grid) - 1):
        mid = 0.5 * (grid[i] + grid[i + 1])
        tag = TAG_CHORD if any(a - 1e-15 <= mid <= b + 1e-15 for a, b, _, _ in chords) else TAG_SMOOTH
        tags.append(tag)
    endpoint = None if reaches_one else curve.endpoint_set
    return QuantileCurve(grid, r, tuple(tags), evaluator, endpoint,
                         curve.breakpoints, curve.objective, label=curve.label + "+ironed")


def monotone_cap(curve: QuantileCurve) -> QuantileCurve:
    """Flatten a concave curve to the right of its maximum.

    Turns the concave hull into the smallest monotone concave majorant,
    which is the geometry behind optimal reserve pricing: quantiles past the
    argmax are excluded from sale rather than sold at falling marginal value.
    """
    i_max = int(np.argmax(curve.r))
    peak = float(curve.r[i_max])
    q_peak = float(curve.q[i_max])
    base = curve.evaluator

    def evaluator(q):
        q_arr = np.asarray(q, dtype=float)
        out = np.where(q_arr <= q_peak, np.asarray(base(q_arr), dtype=float), peak)
        return out if out.ndim else float(out)

    r = np.maximum.accumulate(curve.r)
    return replace(curve, r=r, evaluator=evaluator, endpoint_set=None)


def area_under(curve: QuantileCurve) -> float:
    """Trapezoid integral over the sample grid; chords integrate exactly."""
    return float(np.trapezoid(curve.r, curve.q))


def best_downward_iron(curve: QuantileCurve) -> tuple[float, float]:
    """Quantile maximizing the chord slope R(q)/q from the origin.

    Grid scan keeps the smallest maximizer, then golden-section refinement
    sharpens interior maxima to ~1e-8.
    """
    q, r = curve.q, curve.r
    pos = q > 0
    if not np.any(r[pos] > 0):
        raise ValueError("best_downward_iron needs a curve positive somewhere")
    slopes = np.full_like(q, -np.inf)
    slopes[pos] = r[pos] / q[pos]
    best = int(np.argmax(slopes > np.max(slopes) - 1e-12 * max(1.0, np.max(slopes))))
    q_star, slope = float(q[best]), float(slopes[best])

    lo = float(q[max(best - 1, 0)]) or float(q[best]) * 0.5
    hi = float(q[min(best + 1, len(q) - 1)])
    if hi > lo:
        res = minimize_scalar(lambda t: -float(curve.evaluator(t)) / t,
                              bounds=(max(lo, 1e-12), hi), method="bounded",
                              options={"xatol": 1e-10})
        if res.success and -res.fun > slope + 1e-12 * max(1.0, abs(slope)):
            q_star, slope = float(res.x), float(-res.fun)
    return q_star, slope


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def curve_rows(curve: QuantileCurve, ironed: QuantileCurve | None = None) -> list[dict]:
    rows = []
    ir = None
    if ironed is not None:
        ir = np.asarray(ironed.evaluator(curve.q), dtype=float)
    for i, (qi, ri) in enumerate(zip(curve.q, curve.r)):
        row = {"q": float(qi), "R": float(ri),
               "tag": curve.tags[min(i, len(curve.tags) - 1)]}
        if ir is not None:
            row["R_ironed"] = float(ir[i])
        rows.append(row)
    return rows


def to_csv(curve: QuantileCurve, path: str, ironed: QuantileCurve | None = None) -> None:
    rows = curve_rows(curve, ironed)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
