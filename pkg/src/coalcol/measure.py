"""Finite measures on [0, 1] and their moment functionals.

A :class:`LambdaMeasure` is a probability measure on the unit interval,
represented as a finite mixture of beta densities, point masses, and
optional black-box densities.  The moment sequence

    nu_b = integral of (1 - x)^b over the measure

drives every rate computation downstream, so it gets exact log-gamma
closed forms wherever the component structure allows and tightly
controlled quadrature otherwise.

Measures are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy import integrate
from scipy.special import betainc, betaln

from .errors import DomainError, NumericalError, UnsupportedMeasure

# Construction / quadrature tolerances.  Quadrature stops when either the
# absolute or the relative target is met; diverging truncated moments make a
# purely absolute target unreachable in double precision.
MASS_TOL = 1e-12
QUAD_ABS_TOL = 1e-12
QUAD_REL_TOL = 1e-10
QUAD_LIMIT = 10_000


@dataclass(frozen=True)
class BetaDensity:
    """Density ``x^(a-1) (1-x)^(c-1) / B(a, c)`` with mixture weight."""

    a: float
    c: float
    weight: float = 1.0


@dataclass(frozen=True)
class Atom:
    """Point mass at ``x`` with mixture weight."""

    x: float
    weight: float = 1.0


@dataclass(frozen=True)
class GeneralDensity:
    """Caller-supplied density on (0, 1) with mixture weight.

    ``density`` must be a normalized probability density.  The remaining
    fields describe its behaviour near 0, if known: the distribution
    function of the component behaves like ``amplitude * x**alpha`` with a
    relative correction ``O(x**varsigma)``.  They are required by
    :func:`asymptotics_of` but not by plain moment computations; there is
    no reliable way to detect them from a black box, so we ask for them.
    """

    density: Callable[[float], float]
    weight: float = 1.0
    alpha: float | None = None
    amplitude: float | None = None
    varsigma: float | None = None


Component = Union[BetaDensity, Atom, GeneralDensity]


@dataclass(frozen=True)
class LambdaMeasure:
    """A probability measure on [0, 1] given as a finite mixture."""

    components: tuple[Component, ...]

    def __post_init__(self):
        if isinstance(self.components, list):
            object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise DomainError("measure needs at least one component")
        total = 0.0
        for comp in self.components:
            if comp.weight < 0:
                raise DomainError(f"negative component weight {comp.weight}")
            total += comp.weight
            if isinstance(comp, BetaDensity):
                if comp.a <= 0 or comp.c <= 0:
                    raise DomainError(f"beta parameters must be positive, got ({comp.a}, {comp.c})")
            elif isinstance(comp, Atom):
                if not 0.0 <= comp.x <= 1.0:
                    raise DomainError(f"atom location {comp.x} outside [0, 1]")
            elif not isinstance(comp, GeneralDensity):
                raise DomainError(f"unknown component type {type(comp).__name__}")
        if abs(total - 1.0) > MASS_TOL:
            raise DomainError(f"component weights sum to {total!r}, expected 1")

    def atom_mass_at(self, x: float) -> float:
        """Total point mass sitting exactly at ``x``."""
        return sum(c.weight for c in self.components if isinstance(c, Atom) and c.x == x)


@dataclass(frozen=True)
class MeasureAsymptotics:
    """Small-x behaviour of a measure: mass of [0, x] ~ amplitude * x**alpha,
    with relative correction O(x**varsigma)."""

    amplitude: float
    alpha: float
    varsigma: float

    @property
    def varsigma_prime(self) -> float:
        return min(1.0, self.varsigma)


# ---------------------------------------------------------------------------
# Convenience constructors


def kingman() -> LambdaMeasure:
    """Unit point mass at 0: only pairwise mergers."""
    return LambdaMeasure((Atom(0.0, 1.0),))


def lebesgue() -> LambdaMeasure:
    """Uniform measure on [0, 1]."""
    return LambdaMeasure((BetaDensity(1.0, 1.0, 1.0),))


def beta_measure(a: float, c: float) -> LambdaMeasure:
    """Pure beta(a, c) measure."""
    return LambdaMeasure((BetaDensity(a, c, 1.0),))


def beta_unit_atom_mixture(alpha: float) -> LambdaMeasure:
    """Mixture of a beta(alpha, 1) density (weight 1 - alpha/2) and a unit
    point mass (weight alpha/2).

    The density is the pure power law alpha * x**(alpha - 1), so the
    small-x amplitude is exactly 1 - alpha/2.  Every jump distribution of
    the induced chain has the same closed form, which makes this family a
    sharp end-to-end test case.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    return LambdaMeasure(
        (BetaDensity(alpha, 1.0, 1.0 - alpha / 2.0), Atom(1.0, alpha / 2.0))
    )


# ---------------------------------------------------------------------------
# JSON round trip


def measure_from_json(doc: str | dict) -> LambdaMeasure:
    """Build a measure from its JSON description.

    Expected shape: ``{"components": [{"kind": "beta", "a": .., "c": ..,
    "weight": ..}, {"kind": "atom", "x": .., "weight": ..}]}``.
    """
    if isinstance(doc, str):
        doc = json.loads(doc)
    try:
        raw = doc["components"]
    except (KeyError, TypeError):
        raise DomainError("measure document must have a 'components' list")
    comps: list[Component] = []
    for entry in raw:
        kind = entry.get("kind")
        if kind == "beta":
            comps.append(BetaDensity(float(entry["a"]), float(entry["c"]), float(entry.get("weight", 1.0))))
        elif kind == "atom":
            comps.append(Atom(float(entry["x"]), float(entry.get("weight", 1.0))))
        else:
            raise DomainError(f"unknown component kind {kind!r}")
    return LambdaMeasure(tuple(comps))


def measure_to_json(measure: LambdaMeasure) -> str:
    """Serialize a measure built from beta and atom components."""
    entries = []
    for comp in measure.components:
        if isinstance(comp, BetaDensity):
            entries.append({"kind": "beta", "a": comp.a, "c": comp.c, "weight": comp.weight})
        elif isinstance(comp, Atom):
            entries.append({"kind": "atom", "x": comp.x, "weight": comp.weight})
        else:
            raise UnsupportedMeasure("general density components cannot be serialized")
    return json.dumps({"components": entries})


# ---------------------------------------------------------------------------
# Quadrature for black-box densities


def _quad_component(comp: GeneralDensity, f, lo: float = 0.0, hi: float = 1.0) -> float:
    """Integrate f(x) * density(x) over (lo, hi) for one general component.

    If the component declared a power-law exponent alpha < 1, substitute
    x = t**(1/alpha) so the x**(alpha-1) endpoint singularity integrates a
    flat function of t instead.
    """
    rho = comp.density
    if comp.alpha is not None and 0.0 < comp.alpha < 1.0 and lo == 0.0:
        inv = 1.0 / comp.alpha

        def g(t: float) -> float:
            x = t**inv
            return f(x) * rho(x) * inv * t ** (inv - 1.0)

        a, b = 0.0, hi**comp.alpha
    else:
        def g(x: float) -> float:
            return f(x) * rho(x)

        a, b = lo, hi
    val, err, *rest = integrate.quad(
        g, a, b, epsabs=QUAD_ABS_TOL, epsrel=QUAD_REL_TOL, limit=QUAD_LIMIT, full_output=1
    )
    if len(rest) > 1:  # quad appends an explanation message on failure
        raise NumericalError(f"quadrature did not converge: {rest[1]}", achieved=err)
    if err > max(QUAD_ABS_TOL, abs(val) * QUAD_REL_TOL) * 100:
        raise NumericalError("quadrature error estimate above tolerance", achieved=err)
    return val


# ---------------------------------------------------------------------------
# Moments


def nu(measure: LambdaMeasure, b: int) -> float:
    """b-th moment of (1 - x): integral of (1 - x)**b over the measure.

    Exact in log-gamma space for beta components, pointwise for atoms
    (with the convention 0**0 = 1, so an atom at 1 still counts for
    b = 0), quadrature for general components.
    """
    if b < 0:
        raise DomainError(f"moment order must be nonnegative, got {b}")
    total = 0.0
    for comp in measure.components:
        if isinstance(comp, BetaDensity):
            total += comp.weight * math.exp(betaln(comp.a, comp.c + b) - betaln(comp.a, comp.c))
        elif isinstance(comp, Atom):
            total += comp.weight * ((1.0 - comp.x) ** b if b > 0 else 1.0)
        else:
            total += comp.weight * _quad_component(comp, lambda x: (1.0 - x) ** b)
    return total


def nu_array(measure: LambdaMeasure, bmax: int) -> np.ndarray:
    """Vector of nu_0 .. nu_bmax, computed column-wise per component."""
    if bmax < 0:
        raise DomainError(f"moment order must be nonnegative, got {bmax}")
    bs = np.arange(bmax + 1)
    out = np.zeros(bmax + 1)
    for comp in measure.components:
        if isinstance(comp, BetaDensity):
            out += comp.weight * np.exp(betaln(comp.a, comp.c + bs) - betaln(comp.a, comp.c))
        elif isinstance(comp, Atom):
            vals = (1.0 - comp.x) ** bs.astype(float)
            vals[0] = 1.0
            out += comp.weight * vals
        else:
            out += comp.weight * np.array(
                [_quad_component(comp, lambda x, _b=b: (1.0 - x) ** _b) for b in bs]
            )
    return out


def truncated_moment(measure: LambdaMeasure, x: float, order: int) -> float:
    """Integral of y**order over the measure restricted to [x, 1].

    Supports the two singular orders used by the tail machinery, -1 and
    -2.  Atoms located exactly at ``x`` are included.
    """
    if order not in (-1, -2):
        raise DomainError(f"order must be -1 or -2, got {order}")
    if x <= 0.0:
        raise DomainError("truncation point must be positive; the integral may diverge at 0")
    if x > 1.0:
        raise DomainError(f"truncation point {x} outside (0, 1]")
    total = 0.0
    for comp in measure.components:
        if isinstance(comp, Atom):
            if comp.x >= x:
                total += comp.weight * comp.x**order
        elif isinstance(comp, BetaDensity):
            ap = comp.a + order
            if ap > 0:
                # integral of y^(ap-1)(1-y)^(c-1) / B(a, c) over [x, 1]
                total += comp.weight * math.exp(betaln(ap, comp.c) - betaln(comp.a, comp.c)) * (
                    1.0 - betainc(ap, comp.c, x)
                )
            else:
                val, err = integrate.quad(
                    lambda y: y**order * y ** (comp.a - 1.0) * (1.0 - y) ** (comp.c - 1.0),
                    x,
                    1.0,
                    epsabs=QUAD_ABS_TOL,
                    epsrel=QUAD_REL_TOL,
                    limit=QUAD_LIMIT,
                )
                total += comp.weight * math.exp(-betaln(comp.a, comp.c)) * val
        else:
            total += comp.weight * _quad_component(comp, lambda y: y**order, lo=x)
    return total


# ---------------------------------------------------------------------------
# Small-x asymptotics


def asymptotics_of(measure: LambdaMeasure) -> MeasureAsymptotics:
    """Extract the power-law behaviour of the measure near 0.

    Requires a density component behaving like a power law x**(alpha-1)
    with alpha in (0, 1) and no atom at 0.  For a beta(a, c) component of
    weight w the distribution function near 0 is w * x**a / (a * B(a, c)),
    so the amplitude is w / (a * B(a, c)).  The correction exponent is the
    smallest gap to the other expansion terms; a pure power law has no
    correction term and reports 1 (any value is then valid).
    """
    if measure.atom_mass_at(0.0) > 0:
        raise UnsupportedMeasure("atom at 0: no power-law exponent in (0, 1)")

    exponents: list[tuple[float, Component]] = []
    for comp in measure.components:
        if isinstance(comp, BetaDensity) and comp.weight > 0:
            exponents.append((comp.a, comp))
        elif isinstance(comp, GeneralDensity) and comp.weight > 0:
            if comp.alpha is None or comp.amplitude is None or comp.varsigma is None:
                raise UnsupportedMeasure(
                    "general density needs declared alpha, amplitude and varsigma"
                )
            exponents.append((comp.alpha, comp))
    if not exponents:
        raise UnsupportedMeasure("no density component")

    alpha = min(e for e, _ in exponents)
    if not 0.0 < alpha < 1.0:
        raise UnsupportedMeasure(f"leading exponent {alpha} outside (0, 1)")

    amplitude = 0.0
    corrections: list[float] = []
    for e, comp in exponents:
        if e == alpha:
            if isinstance(comp, BetaDensity):
                amplitude += comp.weight * math.exp(-betaln(comp.a, comp.c)) / comp.a
                if comp.c != 1.0:
                    corrections.append(1.0)  # next term of (1-x)^(c-1)
            else:
                amplitude += comp.weight * comp.amplitude
                corrections.append(comp.varsigma)
        else:
            corrections.append(e - alpha)
    varsigma = min(corrections) if corrections else 1.0
    return MeasureAsymptotics(amplitude=amplitude, alpha=alpha, varsigma=varsigma)
