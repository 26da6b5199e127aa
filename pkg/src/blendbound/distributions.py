"""One-dimensional value distributions with explicit atoms.

Every distribution is a continuous density plus a finite list of point
masses.  Atoms are never smuggled in as spike densities: the continuous and
discrete parts are stored and queried separately, which is what the
dimension-counted density bookkeeping in :mod:`blendbound.blends` relies on.

Transforms (truncate, condition, rescale, invert) compose closed-form
evaluators, so a truncated/conditioned/rescaled family member is evaluated
exactly rather than through tabulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

REVENUE = "revenue"
RESIDUAL_SURPLUS = "residual_surplus"
WELFARE = "welfare"
OBJECTIVES = (REVENUE, RESIDUAL_SURPLUS, WELFARE)

_MASS_TOL = 1e-8
_ATOM_EPS = 1e-12


class AtomQueryError(ValueError):
    """Continuous density queried exactly at a point mass."""


class SingularDensityError(ValueError):
    """Virtual value requested where the density vanishes inside the support."""


@dataclass(frozen=True)
class SupportInterval:
    lo: float
    hi: float  # math.inf for unbounded families

    def __post_init__(self):
        if self.lo < 0:
            raise ValueError("support must lie in [0, inf)")
        if not self.lo < self.hi:
            raise ValueError("support needs lo < hi")

    @property
    def finite(self) -> bool:
        return math.isfinite(self.hi)


@dataclass(frozen=True)
class Atom:
    at: float
    mass: float

    def __post_init__(self):
        if self.mass <= 0 or self.mass > 1 + _MASS_TOL:
            raise ValueError(f"atom mass {self.mass} outside (0, 1]")


@dataclass(frozen=True)
class Distribution:
    """Continuous density + atoms, with closed-form quantile machinery.

    ``cont_cdf``/``cont_pdf`` evaluate the continuous part only (atoms
    excluded).  ``value_of_quantile`` is V(q) with atoms resolved to flat
    ranges; ``partial_mean`` is P(a, b) = integral of V over [a, b] in
    quantile space, used by residual-surplus curves.  ``normalized`` is
    False for the unnormalized member functions that blends are allowed to
    carry (their mass lives in the blend weights instead).
    """

    family: str
    params: dict
    support: SupportInterval
    atoms: tuple[Atom, ...]
    cont_cdf: Callable
    cont_pdf: Callable
    value_of_quantile: Callable
    partial_mean: Callable
    cont_mass: float
    transforms: tuple[dict, ...] = ()
    normalized: bool = True

    def __post_init__(self):
        if self.normalized:
            total = self.cont_mass + sum(a.mass for a in self.atoms)
            if abs(total - 1.0) > _MASS_TOL:
                raise ValueError(f"total mass {total} differs from 1 beyond {_MASS_TOL}")

    # -- convenience wrappers over the module-level operations ---------

    def cdf(self, x):
        return eval_cdf(self, x)

    def pdf(self, x):
        return eval_pdf(self, x)

    def atom_at(self, x: float) -> float:
        for a in self.atoms:
            if abs(a.at - x) <= _ATOM_EPS * max(1.0, abs(x)):
                return a.mass
        return 0.0

    def mean(self) -> float:
        return self.partial_mean(0.0, 1.0)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": dict(self.params),
            "support": [self.support.lo, self.support.hi],
            "atoms": [[a.at, a.mass] for a in self.atoms],
            "transforms": [dict(t) for t in self.transforms],
        }


# ---------------------------------------------------------------------------
# base families
# ---------------------------------------------------------------------------


def uniform(a: float, b: float) -> Distribution:
    """Uniform on [a, b]."""
    if not 0 <= a < b:
        raise ValueError("uniform needs 0 <= a < b")
    w = b - a

    def cdf(x):
        return np.clip((np.asarray(x, dtype=float) - a) / w, 0.0, 1.0)

    def pdf(x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= a) & (x <= b), 1.0 / w, 0.0)

    def V(q):
        return b - np.asarray(q, dtype=float) * w

    def P(q1, q2):
        return b * (q2 - q1) - 0.5 * w * (q2 * q2 - q1 * q1)

    return Distribution("uniform", {"a": a, "b": b}, SupportInterval(a, b), (),
                        cdf, pdf, V, P, 1.0)


def quadratic(z: float) -> Distribution:
    """Equal-revenue distribution: CDF 1 - z/x on [z, inf)."""
    if z <= 0:
        raise ValueError("quadratic needs z > 0")

    def cdf(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(x <= z, 0.0, 1.0 - z / x)

    def pdf(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(x >= z, z / (x * x), 0.0)

    def V(q):
        q = np.asarray(q, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(q <= 0, np.inf, z / np.maximum(q, 1e-300))

    def P(q1, q2):
        if q1 <= 0:
            return math.inf
        return z * math.log(q2 / q1)

    return Distribution("quadratic", {"z": z}, SupportInterval(z, math.inf), (),
                        cdf, pdf, V, P, 1.0)


def shifted_exponential(a: float, beta: float = 1.0) -> Distribution:
    """CDF 1 - exp(-beta (x - a)) on [a, inf)."""
    if a < 0 or beta <= 0:
        raise ValueError("shifted_exponential needs a >= 0, beta > 0")

    def cdf(x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= a, 0.0, 1.0 - np.exp(-beta * (x - a)))

    def pdf(x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= a, beta * np.exp(-beta * np.maximum(x - a, 0.0)), 0.0)

    def V(q):
        q = np.asarray(q, dtype=float)
        with np.errstate(divide="ignore"):
            return a - np.log(np.maximum(q, 1e-300)) / beta

    def P(q1, q2):
        # integral of a - ln(t)/beta; t ln t - t -> 0 at t = 0
        def anti(t):
            return 0.0 if t <= 0 else (t * math.log(t) - t)

        return a * (q2 - q1) - (anti(q2) - anti(q1)) / beta

    return Distribution("shifted_exponential", {"a": a, "beta": beta},
                        SupportInterval(a, math.inf), (), cdf, pdf, V, P, 1.0)


def exponential(beta: float = 1.0) -> Distribution:
    return shifted_exponential(0.0, beta)


def shifted_quadratic(a: float, phi: float) -> Distribution:
    """CDF 1 - (a - phi)/(x - phi) on [a, inf); constant revenue virtual value phi."""
    if phi >= a:
        raise ValueError("shifted_quadratic needs phi < a")
    c = a - phi

    def cdf(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(x <= a, 0.0, 1.0 - c / (x - phi))

    def pdf(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(x >= a, c / np.square(x - phi), 0.0)

    def V(q):
        q = np.asarray(q, dtype=float)
        with np.errstate(divide="ignore"):
            return phi + c / np.maximum(q, 1e-300)

    def P(q1, q2):
        if q1 <= 0:
            return math.inf
        return phi * (q2 - q1) + c * math.log(q2 / q1)

    return Distribution("shifted_quadratic", {"a": a, "phi": phi},
                        SupportInterval(a, math.inf), (), cdf, pdf, V, P, 1.0)


def point_mass(a: float) -> Distribution:
    if a < 0:
        raise ValueError("point mass needs a >= 0")

    def cdf(x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def pdf(x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def V(q):
        return np.full_like(np.asarray(q, dtype=float), a)

    def P(q1, q2):
        return a * (q2 - q1)

    support = SupportInterval(a, a + max(1.0, a) * 1e-12) if a > 0 else SupportInterval(0.0, 1e-12)
    # a point mass has degenerate support; keep [a, a+eps) so invariants hold
    return Distribution("point_mass", {"a": a}, support, (Atom(a, 1.0),),
                        cdf, pdf, V, P, 0.0)


def from_raw_density(pdf: Callable, cdf: Callable, lo: float, hi: float,
                     cont_mass: float, label: str = "derived",
                     normalized: bool | None = None) -> Distribution:
    """Wrap a bare density (possibly unnormalized) as a Distribution.

    Used by the blend generators, whose members are restrictions of a base
    function; quantile machinery is unavailable for these.
    """

    def V(q):
        raise NotImplementedError("raw-density distributions have no quantile map")

    def P(q1, q2):
        raise NotImplementedError("raw-density distributions have no quantile map")

    if normalized is None:
        normalized = abs(cont_mass - 1.0) <= _MASS_TOL
    return Distribution(label, {"lo": lo, "hi": hi}, SupportInterval(lo, hi), (),
                        cdf, pdf, V, P, cont_mass, normalized=normalized)


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------


def truncate_top(dist: Distribution, h: float) -> Distribution:
    """Move all mass at or above h onto a point mass at h."""
    lo, hi = dist.support.lo, dist.support.hi
    if not (lo < h <= hi):
        raise ValueError(f"truncation point {h} outside support ({lo}, {hi}]")
    cont_below = float(dist.cont_cdf(h))
    moved = (dist.cont_mass - cont_below) + sum(a.mass for a in dist.atoms if a.at >= h - _ATOM_EPS)
    kept = tuple(a for a in dist.atoms if a.at < h - _ATOM_EPS)
    if moved <= _ATOM_EPS:
        return dist
    atoms = kept + (Atom(h, moved),)
    q_at = moved  # quantile range [0, moved] maps to value h

    base_cdf, base_pdf, base_V, base_P = dist.cont_cdf, dist.cont_pdf, dist.value_of_quantile, dist.partial_mean

    def cdf(x):
        x = np.asarray(x, dtype=float)
        return np.where(x < h, base_cdf(x), cont_below)

    def pdf(x):
        x = np.asarray(x, dtype=float)
        return np.where(x < h, base_pdf(x), 0.0)

    def V(q):
        q = np.asarray(q, dtype=float)
        return np.where(q <= q_at, h, base_V(np.maximum(q, q_at)))

    def P(q1, q2):
        lo_part = max(0.0, min(q2, q_at) - q1) if q1 < q_at else 0.0
        out = h * lo_part
        if q2 > q_at:
            out += base_P(max(q1, q_at), q2)
        return out

    return replace(dist, support=SupportInterval(lo, h), atoms=atoms,
                   cont_cdf=cdf, cont_pdf=pdf, value_of_quantile=V, partial_mean=P,
                   cont_mass=cont_below,
                   transforms=dist.transforms + ({"op": "truncate_top", "arg": h},))


def condition_above(dist: Distribution, a: float) -> Distribution:
    """Condition on the value being at least a and re-normalize."""
    lo, hi = dist.support.lo, dist.support.hi
    if not (lo <= a < hi):
        raise ValueError(f"conditioning point {a} outside [{lo}, {hi})")
    below = float(dist.cont_cdf(a)) + sum(at.mass for at in dist.atoms if at.at < a - _ATOM_EPS)
    s = (dist.cont_mass + sum(at.mass for at in dist.atoms)) - below
    if s <= _MASS_TOL:
        raise ValueError("no mass above the conditioning point")
    cdf_a = float(dist.cont_cdf(a))
    atoms = tuple(Atom(at.at, at.mass / s) for at in dist.atoms if at.at >= a - _ATOM_EPS)

    base_cdf, base_pdf, base_V, base_P = dist.cont_cdf, dist.cont_pdf, dist.value_of_quantile, dist.partial_mean

    def cdf(x):
        x = np.asarray(x, dtype=float)
        return np.where(x < a, 0.0, (base_cdf(x) - cdf_a) / s)

    def pdf(x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= a, base_pdf(x) / s, 0.0)

    def V(q):
        return base_V(np.asarray(q, dtype=float) * s)

    def P(q1, q2):
        return base_P(q1 * s, q2 * s) / s

    return replace(dist, support=SupportInterval(a, hi), atoms=atoms,
                   cont_cdf=cdf, cont_pdf=pdf, value_of_quantile=V, partial_mean=P,
                   cont_mass=(dist.cont_mass - cdf_a) / s,
                   transforms=dist.transforms + ({"op": "condition_above", "arg": a},))


def rescale(dist: Distribution, k: float) -> Distribution:
    """Scale values by k: CDF_out(x) = CDF_in(x/k)."""
    if k <= 0:
        raise ValueError("rescale needs k > 0")
    if k == 1.0:
        return dist
    base_cdf, base_pdf, base_V, base_P = dist.cont_cdf, dist.cont_pdf, dist.value_of_quantile, dist.partial_mean

    def cdf(x):
        return base_cdf(np.asarray(x, dtype=float) / k)

    def pdf(x):
        return base_pdf(np.asarray(x, dtype=float) / k) / k

    def V(q):
        return k * base_V(q)

    def P(q1, q2):
        return k * base_P(q1, q2)

    support = SupportInterval(dist.support.lo * k, dist.support.hi * k)
    atoms = tuple(Atom(a.at * k, a.mass) for a in dist.atoms)
    return replace(dist, support=support, atoms=atoms,
                   cont_cdf=cdf, cont_pdf=pdf, value_of_quantile=V, partial_mean=P,
                   transforms=dist.transforms + ({"op": "rescale", "arg": k},))


def invert(dist: Distribution) -> Distribution:
    """Inverse-distribution: CDF_out(x) = 1 - CDF_in(1/x).

    The support [lo, hi] maps to [1/hi, 1/lo]; an unbounded top maps to an
    open lower end at 0.  Mass exactly at 0 cannot be inverted.
    """
    lo, hi = dist.support.lo, dist.support.hi
    if lo <= 0 and (dist.atom_at(0.0) > 0 or float(dist.cont_cdf(1e-300)) > _MASS_TOL):
        raise ValueError("cannot invert a distribution with mass at 0")
    new_lo = 0.0 if math.isinf(hi) else 1.0 / hi
    new_hi = math.inf if lo == 0 else 1.0 / lo
    base_cdf, base_pdf, base_V = dist.cont_cdf, dist.cont_pdf, dist.value_of_quantile
    cont_mass = dist.cont_mass

    def cdf(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            inv = np.where(x > 0, 1.0 / np.maximum(x, 1e-300), np.inf)
        return np.where(x <= new_lo, 0.0, cont_mass - base_cdf(inv))

    def pdf(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            inv = np.where(x > 0, 1.0 / np.maximum(x, 1e-300), np.inf)
        return np.where((x > new_lo) & (x <= new_hi), base_pdf(inv) / np.maximum(x * x, 1e-300), 0.0)

    def V(q):
        q = np.asarray(q, dtype=float)
        with np.errstate(divide="ignore"):
            return 1.0 / base_V(1.0 - q)

    def P(q1, q2):
        from scipy.integrate import quad

        val, _ = quad(V, q1, q2, epsabs=1e-13, epsrel=1e-11, limit=200)
        return val

    atoms = tuple(sorted((Atom(1.0 / a.at, a.mass) for a in dist.atoms), key=lambda a: a.at))
    return replace(dist, support=SupportInterval(new_lo, new_hi), atoms=atoms,
                   cont_cdf=cdf, cont_pdf=pdf, value_of_quantile=V, partial_mean=P,
                   transforms=dist.transforms + ({"op": "invert", "arg": None},))


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def eval_cdf(dist: Distribution, x) -> float:
    """CDF including atoms at or below x, clamped to [0, 1]."""
    x_arr = np.asarray(x, dtype=float)
    out = np.asarray(dist.cont_cdf(x_arr), dtype=float).copy()
    for a in dist.atoms:
        out = out + np.where(x_arr >= a.at - _ATOM_EPS * max(1.0, abs(a.at)), a.mass, 0.0)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if np.isscalar(x) or out.ndim == 0 else out


def eval_pdf(dist: Distribution, x) -> float:
    """Continuous density at x; querying an atom location is an error."""
    if np.isscalar(x):
        if dist.atom_at(float(x)) > 0:
            raise AtomQueryError(f"x={x} is a point mass; use the atom list")
        return float(dist.cont_pdf(x))
    x_arr = np.asarray(x, dtype=float)
    for a in dist.atoms:
        if np.any(np.abs(x_arr - a.at) <= _ATOM_EPS * max(1.0, abs(a.at))):
            raise AtomQueryError(f"query hits atom at {a.at}; use the atom list")
    return dist.cont_pdf(x_arr)


def quantile_of_value(dist: Distribution, v) -> float:
    """Q(v) = Pr[X >= v]; at an atom this is the top of its quantile range."""
    v_arr = np.asarray(v, dtype=float)
    out = (dist.cont_mass + sum(a.mass for a in dist.atoms)) - np.asarray(dist.cont_cdf(v_arr), dtype=float)
    for a in dist.atoms:
        out = out - np.where(v_arr > a.at + _ATOM_EPS * max(1.0, abs(a.at)), a.mass, 0.0)
    out = np.clip(out, 0.0, None)
    return float(out) if np.isscalar(v) or out.ndim == 0 else out


def quantile_maps(dist: Distribution):
    """Return (value_of_quantile, quantile_of_value)."""
    return dist.value_of_quantile, lambda v: quantile_of_value(dist, v)


def virtual_value(dist: Distribution, objective: str, v: float) -> float:
    """Myerson virtual value for the given auction objective.

    revenue: v - (1-F)/f; residual surplus: (1-F)/f; welfare: v.  At a point
    mass the hazard rate is infinite, so revenue gives v and residual
    surplus gives 0.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}")
    if objective == WELFARE:
        return float(v)
    if dist.atom_at(float(v)) > 0:
        return float(v) if objective == REVENUE else 0.0
    f = float(dist.cont_pdf(v))
    lo, hi = dist.support.lo, dist.support.hi
    if f <= 0.0:
        if lo <= v <= hi:
            raise SingularDensityError(f"zero density at v={v} inside support")
        raise ValueError(f"v={v} outside support [{lo}, {hi}]")
    surv = 1.0 - eval_cdf(dist, v)
    if objective == REVENUE:
        return float(v) - surv / f
    return surv / f


# JSON round-trip -----------------------------------------------------------

_BASE_FAMILIES = {
    "uniform": uniform,
    "quadratic": quadratic,
    "shifted_exponential": shifted_exponential,
    "shifted_quadratic": shifted_quadratic,
    "point_mass": point_mass,
}

_TRANSFORM_OPS = {
    "truncate_top": truncate_top,
    "condition_above": condition_above,
    "rescale": rescale,
    "invert": lambda d, _arg: invert(d),
}


def from_dict(record: dict) -> Distribution:
    family = record["family"]
    if family not in _BASE_FAMILIES:
        raise ValueError(f"cannot rebuild family {family!r} from JSON")
    dist = _BASE_FAMILIES[family](**record["params"])
    for t in record.get("transforms", ()):
        dist = _TRANSFORM_OPS[t["op"]](dist, t.get("arg"))
    return dist


# named constructors used throughout the examples ---------------------------


def truncated_quadratic(z: float, h: float) -> Distribution:
    """Equal-revenue distribution on [z, h] with point mass z/h at h."""
    return truncate_top(quadratic(z), h)


def truncated_uniform(a: float, b: float, h: float) -> Distribution:
    """Uniform on [a, b] truncated at h with point mass (b-h)/(b-a)."""
    return truncate_top(uniform(a, b), h)
