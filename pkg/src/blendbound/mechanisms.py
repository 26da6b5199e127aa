"""Expected-performance evaluators for named auctions and Bayesian optima.

Two evaluation routes exist on purpose.  Price-based mechanisms (posted
price, second-price with or without reserve, markup, lottery) integrate a
pointwise payoff against the product distribution; curve-based mechanisms
(ironed second-price variants) are twice the area under the appropriately
ironed quantile curve.  SPA and the lottery support both routes, which the
tests cross-check against each other.

Conventions: tied agents split the allocation uniformly; under residual
surplus an agent whose value exactly equals the price is rejected (their
surplus is zero either way, so objective accounting still closes).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import curves as _curves
from .distributions import (
    RESIDUAL_SURPLUS,
    REVENUE,
    WELFARE,
    Distribution,
    point_mass,
)
from .numutil import integrate

SPA = "spa"
SPA_RESERVE = "spa_reserve"
POSTED = "posted"
LOTTERY = "lottery"
MARKUP = "markup"
IRONED_SPA = "ironed_spa"
TWO_PIECE_IRON = "two_piece_iron"

_PRICE_BASED = (SPA, SPA_RESERVE, POSTED, LOTTERY, TWO_PIECE_IRON)
_CURVE_ONLY = (IRONED_SPA,)


@dataclass(frozen=True)
class Mechanism:
    kind: str
    n: int = 2
    price: float | None = None            # reserve / posted price / iron threshold
    ratio: float | None = None             # markup factor
    ironing: _curves.IroningSet | None = None

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError("only 1 or 2 agents supported")
        if self.kind in (SPA_RESERVE, POSTED) and (self.price is None or self.price < 0):
            raise ValueError(f"{self.kind} needs a nonnegative price")
        if self.kind == MARKUP and (self.ratio is None or self.ratio < 1):
            raise ValueError("markup needs ratio >= 1")
        if self.kind == IRONED_SPA and self.ironing is None:
            raise ValueError("ironed_spa needs an IroningSet")

    def to_dict(self) -> dict:
        params = {}
        if self.price is not None:
            params["price"] = self.price
        if self.ratio is not None:
            params["ratio"] = self.ratio
        if self.ironing is not None:
            params["ironing"] = [list(iv) for iv in self.ironing]
        return {"kind": self.kind, "n": self.n, "params": params}


def mechanism_from_dict(rec: dict) -> Mechanism:
    params = rec.get("params", {})
    ironing = params.get("ironing")
    return Mechanism(rec["kind"], rec.get("n", 2), params.get("price"),
                     params.get("ratio"),
                     _curves.IroningSet(tuple(tuple(iv) for iv in ironing)) if ironing else None)


@dataclass(frozen=True)
class PerfResult:
    value: float
    breakdown: dict = field(default_factory=dict)

    def __float__(self):
        return self.value


# ---------------------------------------------------------------------------
# pointwise payoffs (n = 2)
# ---------------------------------------------------------------------------


def payoff(mech: Mechanism, objective: str, v1: float, v2: float) -> float:
    """Expected objective on the fixed profile (v1, v2); symmetric in its arguments."""
    hi, lo = (v1, v2) if v1 >= v2 else (v2, v1)
    kind = mech.kind

    if kind == LOTTERY:
        if objective == REVENUE:
            return 0.0
        return 0.5 * (v1 + v2)

    if kind == POSTED:
        p = mech.price
        acc_hi = hi > p if objective == RESIDUAL_SURPLUS else hi >= p
        acc_lo = lo > p if objective == RESIDUAL_SURPLUS else lo >= p
        if not acc_hi:
            return 0.0
        if objective == REVENUE:
            return p
        winner = 0.5 * (hi + lo) if acc_lo else hi
        return winner - p if objective == RESIDUAL_SURPLUS else winner

    if kind in (SPA, SPA_RESERVE):
        r = mech.price if kind == SPA_RESERVE else 0.0
        sells = hi > r if objective == RESIDUAL_SURPLUS else hi >= r
        if not sells:
            return 0.0
        pay = max(lo, r)
        if objective == REVENUE:
            return pay
        if objective == WELFARE:
            return hi
        return hi - pay

    if kind == MARKUP:
        p = mech.ratio * lo
        sells = hi > p if objective == RESIDUAL_SURPLUS else hi >= p
        if not sells:
            return 0.0
        if objective == REVENUE:
            return p
        if objective == WELFARE:
            return hi
        return hi - p

    if kind == TWO_PIECE_IRON:
        # Ironed SPA on two inferred types split at value c: both low ->
        # free lottery; both high -> each pays c/2 in expectation; mixed ->
        # high type wins at expected payment c/2 (Myerson payment identity).
        c = mech.price
        if c is None:
            raise ValueError("pointwise two_piece_iron payoff needs an explicit threshold")
        n_hi = (v1 >= c) + (v2 >= c)
        if n_hi == 0:
            rev, wel = 0.0, 0.5 * (v1 + v2)
        elif n_hi == 2:
            rev, wel = c, 0.5 * (v1 + v2)
        else:
            rev, wel = 0.5 * c, hi
        if objective == REVENUE:
            return rev
        if objective == WELFARE:
            return wel
        return wel - rev

    raise ValueError(f"no pointwise payoff for mechanism kind {kind!r}")


def payoff_single(mech: Mechanism, objective: str, v: float) -> float:
    """Single-agent payoff; only pricing mechanisms make sense here."""
    if mech.kind == LOTTERY:
        return 0.0 if objective == REVENUE else v
    if mech.kind == POSTED:
        p = mech.price
        acc = v > p if objective == RESIDUAL_SURPLUS else v >= p
        if not acc:
            return 0.0
        return {REVENUE: p, RESIDUAL_SURPLUS: v - p, WELFARE: v}[objective]
    raise ValueError(f"mechanism {mech.kind!r} undefined for one agent")


def _mech_breakpoints(mech: Mechanism) -> list[float]:
    pts = []
    if mech.kind in (POSTED, SPA_RESERVE, TWO_PIECE_IRON) and mech.price is not None:
        pts.append(float(mech.price))
    return pts


# ---------------------------------------------------------------------------
# product-prior evaluation
# ---------------------------------------------------------------------------


def _direct_product(mech: Mechanism, dist: Distribution, objective: str) -> float:
    lo, hi = dist.support.lo, dist.support.hi
    pdf = dist.cont_pdf
    brks = _mech_breakpoints(mech)

    def pay(a, b):
        return payoff(mech, objective, a, b)

    if mech.n == 1:
        cont = integrate(lambda v: float(pdf(v)) * payoff_single(mech, objective, v), lo, hi, points=brks)
        atom = sum(a.mass * payoff_single(mech, objective, a.at) for a in dist.atoms)
        return cont + atom

    def inner(v1: float) -> float:
        pts = list(brks)
        if mech.kind == MARKUP:
            pts.append(v1 / mech.ratio)
        val = integrate(lambda v2: float(pdf(v2)) * pay(v1, v2), lo, v1,
                        points=[p for p in pts if lo < p < v1])
        return float(pdf(v1)) * val

    total = 2.0 * integrate(inner, lo, hi, points=brks, epsrel=1e-10)
    for a in dist.atoms:
        total += 2.0 * a.mass * integrate(lambda v: float(pdf(v)) * pay(a.at, v), lo, hi,
                                          points=[p for p in brks if lo < p < hi])
    for a in dist.atoms:
        for b in dist.atoms:
            total += a.mass * b.mass * pay(a.at, b.at)
    return total


def _curve_product(mech: Mechanism, dist: Distribution, objective: str) -> float:
    if mech.n != 2:
        raise ValueError("curve-area evaluation is two-agent")
    curve = _performance_curve_cached(dist, objective)
    if mech.kind == SPA:
        return 2.0 * _curves.area_under(curve)
    if mech.kind == LOTTERY:
        return 2.0 * _curves.area_under(_curves.iron_with(curve, [(0.0, 1.0)]))
    if mech.kind == IRONED_SPA:
        return 2.0 * _curves.area_under(_curves.iron_with(curve, mech.ironing))
    if mech.kind == TWO_PIECE_IRON:
        h = dist.support.hi
        if not math.isfinite(h):
            raise ValueError("two_piece_iron needs a top-truncated distribution")
        q_star = math.e / h
        ironed = _curves.iron_with(curve, [(0.0, q_star), (q_star, 1.0)])
        return 2.0 * _curves.area_under(ironed)
    raise ValueError(f"no curve route for {mech.kind!r}")


_CURVE_CACHE: dict = {}


def _performance_curve_cached(dist: Distribution, objective: str, grid_size: int = 2049):
    key = (id(dist), objective, grid_size)
    if key not in _CURVE_CACHE:
        if len(_CURVE_CACHE) > 256:
            _CURVE_CACHE.clear()
        _CURVE_CACHE[key] = _curves.performance_curve(dist, objective, grid_size)
    return _CURVE_CACHE[key]


def perf_product(mech: Mechanism, dist: Distribution, objective: str,
                 method: str = "auto") -> PerfResult:
    """Expected performance of ``mech`` on ``mech.n`` i.i.d. draws from ``dist``."""
    if not dist.normalized:
        raise ValueError("perf_product needs a proper distribution")
    if method == "auto":
        method = "curve" if mech.kind in (IRONED_SPA, TWO_PIECE_IRON) else "direct"
    if method == "curve":
        value = _curve_product(mech, dist, objective)
    elif method == "direct":
        if mech.kind == TWO_PIECE_IRON and mech.price is None:
            mech = Mechanism(TWO_PIECE_IRON, mech.n, price=dist.support.hi / math.e)
        value = _direct_product(mech, dist, objective)
    else:
        raise ValueError(f"unknown method {method!r}")
    return PerfResult(value, {"method": method, "mechanism": mech.to_dict()})


def simulate(mech: Mechanism, dist: Distribution, objective: str,
             n_samples: int, rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo estimate (mean, stderr) via inverse-quantile sampling."""
    q = rng.random((n_samples, mech.n))
    v = np.asarray(dist.value_of_quantile(q), dtype=float)
    if mech.n == 1:
        vals = np.fromiter((payoff_single(mech, objective, x) for x in v[:, 0]),
                           dtype=float, count=n_samples)
    else:
        vals = np.fromiter((payoff(mech, objective, a, b) for a, b in v),
                           dtype=float, count=n_samples)
    return float(np.mean(vals)), float(np.std(vals) / math.sqrt(n_samples))


# ---------------------------------------------------------------------------
# correlated evaluation
# ---------------------------------------------------------------------------


def perf_correlated(mech: Mechanism, g, objective: str) -> PerfResult:
    """Expected performance against a correlated density bundle.

    Integrates over the cone v1 >= v2 (doubling the off-diagonal), then adds
    atom-line and atom-pair terms.  Only price-based mechanisms are allowed:
    ironed variants are defined relative to a product prior's quantiles.
    """
    if mech.kind not in _PRICE_BASED or (mech.kind == TWO_PIECE_IRON and mech.price is None):
        raise ValueError(f"perf_correlated supports price-based mechanisms, not {mech.kind!r}")
    lo, hi = g.support.lo, g.support.hi
    brks = _mech_breakpoints(mech)

    def pay(a, b):
        return payoff(mech, objective, a, b)

    def inner(v1: float) -> float:
        pts = [p for p in brks if lo < p < v1]
        if mech.kind == MARKUP:
            pts.append(v1 / mech.ratio)
        return integrate(lambda v2: g.d2(v1, v2) * pay(v1, v2), lo, v1, points=pts)

    total = 2.0 * integrate(inner, lo, hi, points=brks, epsrel=1e-10)
    breakdown = {"d2": total}
    for a in g.atom_locations:
        line = 2.0 * integrate(lambda v: g.d1(a, v) * pay(a, v), lo, a,
                               points=[p for p in brks if lo < p < a])
        breakdown[f"d1@{a:g}"] = line
        total += line
    for (a, b), mass in g.d0.items():
        term = mass * pay(a, b)
        breakdown[f"d0@({a:g},{b:g})"] = term
        total += term
    return PerfResult(total, breakdown)


# ---------------------------------------------------------------------------
# Bayesian optimal performance
# ---------------------------------------------------------------------------


def _closed_form_opt(dist: Distribution, objective: str, n: int) -> float | None:
    """Registered closed forms; None falls through to the hull route."""
    fam, tr = dist.family, dist.transforms
    ops = tuple(t["op"] for t in tr)

    if fam == "point_mass" and not ops:
        a = dist.params["a"]
        return a  # optimal posts a (revenue) or gives it away (residual/welfare)

    if fam == "uniform" and ops in ((), ("truncate_top",)):
        a, b = dist.params["a"], dist.params["b"]
        if objective == RESIDUAL_SURPLUS or objective == WELFARE:
            return dist.mean() if n == 1 or objective == RESIDUAL_SURPLUS else None
        if objective == REVENUE and not ops:
            if a == 0:
                return (5.0 / 12.0) * b if n == 2 else b / 4.0
            z = b / a
            if n == 1:
                return a * (0.25 * z if z >= 2 else 1.0)
            if z <= 2:
                return a * (1.0 + (z - 1.0) / 3.0)
            return a * ((5.0 / 12.0) * z**3 - 0.5 * z * z) / (z - 1.0) ** 2
        if objective == REVENUE and ops == ("truncate_top",):
            h = tr[0]["arg"]
            if n == 2 and a > 0 and abs(b - 2 * h) < 1e-12:
                # monopoly price sits exactly at the truncation point
                zz = h / a
                return a * zz * zz * (3 * zz - 2) / (2 * zz - 1) ** 2
        return None

    if fam == "quadratic" and ops == ("truncate_top",) and objective == REVENUE:
        z, h = dist.params["z"], tr[0]["arg"]
        if n == 1:
            return z
        return 2.0 * z - z * z / h

    return None


def bayes_opt(dist: Distribution, objective: str, n: int,
              grid_size: int = 2049, method: str = "auto") -> PerfResult:
    """Bayesian optimal expected performance for n in {1, 2}.

    n = 1 posts the monopoly price (the maximum of the ironed curve,
    including the endpoint-set top under residual surplus).  n = 2 is twice
    the area under the smallest monotone concave majorant of the curve, with
    the flat cap implementing exclusion below the monopoly quantile.
    """
    if n not in (1, 2):
        raise ValueError("bayes_opt supports n in {1, 2}")
    if method == "auto":
        closed = _closed_form_opt(dist, objective, n)
        if closed is not None:
            return PerfResult(closed, {"method": "closed_form"})
    elif method == "closed":
        closed = _closed_form_opt(dist, objective, n)
        if closed is None:
            raise ValueError("no closed form registered")
        return PerfResult(closed, {"method": "closed_form"})

    curve = _performance_curve_cached(dist, objective, grid_size)
    hull, _ = _curves.iron_concave_hull(curve)
    capped = _curves.monotone_cap(hull)
    idx = int(np.argmax(hull.r > np.max(hull.r) - 1e-12 * max(1.0, float(np.max(hull.r)))))
    q_m = float(hull.q[idx])
    price = float(dist.value_of_quantile(max(q_m, 1e-12)))
    if n == 1:
        value = float(np.max(hull.r))
    else:
        value = 2.0 * _curves.area_under(capped)
    return PerfResult(value, {"method": "hull", "monopoly_quantile": q_m,
                              "monopoly_price": price})
