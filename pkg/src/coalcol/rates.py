"""Merger rates of the block-counting chain and their jump distributions.

For a mixture measure the rate of a j-merger among b blocks is

    lambda_{b,j} = C(b,j) * integral of x^(j-2) (1-x)^(b-j) d(measure),

the total rate is lambda_b = sum_j lambda_{b,j}, and the jump law is
q_b(j) = lambda_{b,j} / lambda_b.  Everything is computed in log space:
binomial coefficients overflow well before b reaches the 10^6 range used
by the limit diagnostics.

Two independent routes exist for several quantities (total rate via the
moment sum, tail sums via a telescoped integral, an alternating-sum form
of the rates).  Where the contract demands it, both routes are evaluated
and compared; disagreement raises ConsistencyError rather than returning
a silently wrong number.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import betainc, betaln, gammaln, logsumexp

from .errors import ConsistencyError, DomainError, ResourceLimit
from .measure import Atom, BetaDensity, GeneralDensity, LambdaMeasure, nu_array

# Route-agreement tolerances and structural caps.
TOTAL_RATE_TOL = 1e-10
MEAN_ROUTE_TOL = 1e-10
TAIL_ROUTE_TOL = 1e-8
ALTERNATING_MAX_B = 40  # cancellation grows like 2^j beyond this
GENERAL_ROW_MAX_B = 5000  # quadrature cost of one row is O(b) integrals

_EPS = float(np.finfo(np.float64).eps)


def _route_tol(base: float, b: int) -> float:
    """Cross-route relative tolerance at block count b.

    Log-gamma values grow like b log b, so after exponentiation every
    rate carries a relative error of order eps * gammaln(b).  Below
    b ~ 10^4 the fixed base tolerance dominates; beyond that the
    cancellation floor does.
    """
    return max(base, 32.0 * _EPS * float(gammaln(b + 1.0)))


@dataclass(frozen=True)
class RateRow:
    """Log-rates of one block count: log lambda_{b,j} for j = 2..b."""

    b: int
    log_lambda_bj: np.ndarray
    lambda_b: float

    @property
    def j_values(self) -> np.ndarray:
        return np.arange(2, self.b + 1)


@dataclass(frozen=True)
class JumpDistribution:
    """Jump law q_b(j) = lambda_{b,j} / lambda_b on j = 2..b."""

    b: int
    pmf: np.ndarray

    @property
    def j_values(self) -> np.ndarray:
        return np.arange(2, self.b + 1)

    def mean_decrement(self) -> float:
        """E[J_b - 1], the mean loss of blocks in one collision."""
        return float(np.dot(self.j_values - 1.0, self.pmf))

    def survival(self) -> np.ndarray:
        """P[J_b >= j] for j = 2..b (index 0 is j = 2, always 1)."""
        return np.cumsum(self.pmf[::-1])[::-1]


def _log_binom(b, j):
    return gammaln(b + 1.0) - gammaln(j + 1.0) - gammaln(b - j + 1.0)


def _has_general(measure: LambdaMeasure) -> bool:
    return any(isinstance(c, GeneralDensity) for c in measure.components)


def _build_log_row(measure: LambdaMeasure, b: int) -> np.ndarray:
    """log lambda_{b,j} for j = 2..b, summed over mixture components."""
    js = np.arange(2, b + 1)
    logc = _log_binom(b, js)
    acc = np.full(b - 1, -np.inf)
    for comp in measure.components:
        if comp.weight == 0.0:
            continue
        logw = math.log(comp.weight)
        if isinstance(comp, BetaDensity):
            term = logc + betaln(comp.a + js - 2.0, comp.c + b - js) - betaln(comp.a, comp.c)
            acc = np.logaddexp(acc, logw + term)
        elif isinstance(comp, Atom):
            if comp.x == 0.0:
                # 0^0 = 1 in the integrand: only the pairwise rate survives
                acc[0] = np.logaddexp(acc[0], logw + _log_binom(b, 2))
            elif comp.x == 1.0:
                acc[-1] = np.logaddexp(acc[-1], logw)
            else:
                term = logc + (js - 2.0) * math.log(comp.x) + (b - js) * math.log1p(-comp.x)
                acc = np.logaddexp(acc, logw + term)
        else:
            if b > GENERAL_ROW_MAX_B:
                raise ResourceLimit(
                    f"rate rows for general densities are capped at b = {GENERAL_ROW_MAX_B}"
                )
            rho = comp.density
            vals = np.empty(b - 1)
            for idx, j in enumerate(js):
                lc = logc[idx]
                f = lambda x: math.exp(lc + (j - 2.0) * math.log(x) + (b - j) * math.log1p(-x)) * rho(x)
                vals[idx], _ = integrate.quad(f, 0.0, 1.0, epsabs=1e-13, epsrel=1e-11, limit=500)
            with np.errstate(divide="ignore"):
                acc = np.logaddexp(acc, logw + np.log(np.maximum(vals, 0.0)))
    return acc


@functools.lru_cache(maxsize=256)
def _cached_log_row(measure: LambdaMeasure, b: int) -> np.ndarray:
    return _build_log_row(measure, b)


def log_rate_row(measure: LambdaMeasure, b: int) -> np.ndarray:
    """Cached log lambda_{b,j} array for j = 2..b.  Treat as read-only."""
    if b < 2:
        raise DomainError(f"need at least 2 blocks, got {b}")
    return _cached_log_row(measure, b)


def total_rate_array(measure: LambdaMeasure, n: int) -> np.ndarray:
    """lambda_b for all b = 0..n via the moment sum, in one cumulative pass.

    lambda_b = sum_{i=1}^{b-1} i * nu_{i-1}.  Entries 0 and 1 are zero.
    b = 2 gives nu_0 = 1 for any probability measure.
    """
    if n < 2:
        raise DomainError(f"need at least 2 blocks, got {n}")
    nus = nu_array(measure, max(n - 2, 0))
    lam = np.zeros(n + 1)
    lam[2:] = np.cumsum(np.arange(1, n) * nus[: n - 1])
    return lam


def rate_row(measure: LambdaMeasure, b: int) -> RateRow:
    """Full rate row at block count b, cross-checked between two routes.

    The row sum of exp(log lambda_{b,j}) must agree with the moment-sum
    total rate; the returned ``lambda_b`` is the moment-sum value.
    """
    log_row = log_rate_row(measure, b)
    # compensated sums: plain accumulation drifts past the agreement
    # tolerance once b reaches the 10^5 range
    row_sum = math.fsum(np.exp(log_row))
    nus = nu_array(measure, b - 2)
    eq_moment = math.fsum(np.arange(1, b) * nus[: b - 1])
    if abs(row_sum - eq_moment) > _route_tol(TOTAL_RATE_TOL, b) * max(abs(eq_moment), 1e-300):
        raise ConsistencyError(
            f"total rate mismatch at b={b}: row sum {row_sum!r} vs moment sum {eq_moment!r}",
            achieved=abs(row_sum - eq_moment) / max(abs(eq_moment), 1e-300),
        )
    return RateRow(b=b, log_lambda_bj=log_row, lambda_b=eq_moment)


def lambda_bj(measure: LambdaMeasure, b: int, j: int) -> float:
    """Rate of a j-merger among b blocks."""
    if not 2 <= j <= b:
        raise DomainError(f"merger size {j} outside [2, {b}]")
    return float(np.exp(log_rate_row(measure, b)[j - 2]))


def lambda_total(measure: LambdaMeasure, b: int) -> float:
    """Total collision rate of b blocks (both routes must agree)."""
    return rate_row(measure, b).lambda_b


def rates_from_nu_alternating(nu_values, b: int, j: int) -> float:
    """Alternating-sum route to lambda_{b,j} from the moment sequence.

    C(b,j) * sum_{s=0}^{j-2} (-1)^(j-s) C(j-2,s) nu_{b-2-s}.  Test-only
    oracle: catastrophic cancellation makes it unusable past b = 40.
    """
    if b > ALTERNATING_MAX_B:
        raise DomainError(f"alternating sum is numerically unstable beyond b = {ALTERNATING_MAX_B}")
    if not 2 <= j <= b:
        raise DomainError(f"merger size {j} outside [2, {b}]")
    total = 0.0
    for s in range(j - 1):
        total += (-1.0) ** (j - s) * math.comb(j - 2, s) * float(nu_values[b - 2 - s])
    return math.comb(b, j) * total


def jump_distribution(measure: LambdaMeasure, b: int) -> JumpDistribution:
    """Jump law q_b(j) = lambda_{b,j} / lambda_b, j = 2..b."""
    row = rate_row(measure, b)
    pmf = np.exp(row.log_lambda_bj - logsumexp(row.log_lambda_bj))
    return JumpDistribution(b=b, pmf=pmf)


def mean_jump_minus_one(measure: LambdaMeasure, b: int) -> float:
    """E[J_b - 1] via the moment-ratio formula, checked against the pmf mean.

    The ratio form is sum_i (b-i) nu_{i-1} / sum_i i nu_{i-1} over
    i = 1..b-1.
    """
    if b < 2:
        raise DomainError(f"need at least 2 blocks, got {b}")
    nus = nu_array(measure, b - 2)
    i = np.arange(1, b)
    den = math.fsum(i * nus)
    num = math.fsum((b - i) * nus)
    ratio = num / den
    pmf_mean = jump_distribution(measure, b).mean_decrement()
    if abs(ratio - pmf_mean) > _route_tol(MEAN_ROUTE_TOL, b) * abs(ratio):
        raise ConsistencyError(
            f"mean decrement mismatch at b={b}: ratio {ratio!r} vs pmf {pmf_mean!r}",
            achieved=abs(ratio - pmf_mean) / abs(ratio),
        )
    return ratio


def _telescoped_full_tail(measure: LambdaMeasure, b: int, m: int) -> float:
    """sum_{j=m}^{b} lambda_{b,j} as a single integral.

    Because the inner sum telescopes, the full tail equals the integral of
    y^(-2) I_y(m, b-m+1) over the measure, with I the regularized
    incomplete beta function.  An atom at 0 contributes C(b,2) only when
    m = 2 (the y -> 0 limit of the integrand).
    """
    total = 0.0
    for comp in measure.components:
        if comp.weight == 0.0:
            continue
        if isinstance(comp, Atom):
            if comp.x == 0.0:
                if m == 2:
                    total += comp.weight * math.comb(b, 2)
            else:
                total += comp.weight * comp.x**-2.0 * float(betainc(m, b - m + 1, comp.x))
        else:
            if isinstance(comp, BetaDensity):
                lognorm = -betaln(comp.a, comp.c)
                a_, c_ = comp.a, comp.c
                rho = lambda y: math.exp(lognorm + (a_ - 1.0) * math.log(y) + (c_ - 1.0) * math.log1p(-y))
            else:
                rho = comp.density
            f = lambda y: y**-2.0 * float(betainc(m, b - m + 1, y)) * rho(y)
            center = min(max(m / b, 1e-12), 1.0 - 1e-12)
            val, _ = integrate.quad(
                f, 0.0, 1.0, points=[center], epsabs=1e-13, epsrel=1e-11, limit=800
            )
            total += comp.weight * val
    return total


def tail_sum(measure: LambdaMeasure, b: int, m: int, k: int) -> float:
    """sum_{j=m}^{k} lambda_{b,j}.

    Full tails (k = b) are additionally computed by the telescoped
    integral route and the two must agree to relative 1e-8.
    """
    if not 2 <= m <= k <= b:
        raise DomainError(f"tail range [{m}, {k}] invalid for b = {b}")
    log_row = log_rate_row(measure, b)
    direct = float(np.exp(logsumexp(log_row[m - 2 : k - 1])))
    if k == b:
        tele = _telescoped_full_tail(measure, b, m)
        if abs(tele - direct) > _route_tol(TAIL_ROUTE_TOL, b) * max(direct, 1e-300):
            raise ConsistencyError(
                f"tail sum mismatch at (b={b}, m={m}): direct {direct!r} vs telescoped {tele!r}",
                achieved=abs(tele - direct) / max(direct, 1e-300),
            )
    return direct


def jump_tail_mean(measure: LambdaMeasure, b: int, m: int) -> float:
    """sum_{j > m} j * q_b(j): mean decrement spent above threshold m."""
    q = jump_distribution(measure, b)
    mask = q.j_values > m
    return float(np.dot(q.j_values[mask], q.pmf[mask]))


# ---------------------------------------------------------------------------
# The limiting jump law (small-jump regime) and CF expansions


def limit_jump_pmf(alpha: float, j: int) -> float:
    """Limit of q_n(j) as n grows: (2 - alpha) (alpha)_{j-2} / j!
    with the rising factorial (alpha)_m."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if j < 2:
        raise DomainError(f"jump size must be at least 2, got {j}")
    return (2.0 - alpha) * math.exp(gammaln(alpha + j - 2.0) - gammaln(alpha) - gammaln(j + 1.0))


def limit_jump_tail(alpha: float, j0: int) -> float:
    """sum_{j >= j0} of the limiting jump pmf.

    The series telescopes to Gamma(j0 + alpha - 2) / ((j0-1)! Gamma(alpha));
    at j0 = 2 this is exactly 1.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if j0 < 2:
        raise DomainError(f"jump size must be at least 2, got {j0}")
    return math.exp(gammaln(j0 + alpha - 2.0) - gammaln(j0) - gammaln(alpha))


def limit_jump_mean(alpha: float) -> float:
    """Mean of J - 1 under the limiting jump law: 1 / (1 - alpha)."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    return 1.0 / (1.0 - alpha)


def jump_cf(measure: LambdaMeasure, n: int, u: float) -> complex:
    """Characteristic function of the first decrement, E[e^{iu(J_n - 1)}]."""
    q = jump_distribution(measure, n)
    return complex(np.dot(q.pmf, np.exp(1j * u * (q.j_values - 1.0))))


def jump_cf_expansion(alpha: float, m: float, s: float) -> complex:
    """Small-argument expansion of the decrement CF at u = s/m:

        1 + i s / ((1-alpha) m) - omega(s) |s|^(2-alpha) / ((1-alpha) m^(2-alpha))

    with omega(s) = exp(i pi alpha sign(s) / 2).
    """
    omega = complex(np.exp(1j * math.pi * alpha * np.sign(s) / 2.0))
    return (
        1.0
        + 1j * s / ((1.0 - alpha) * m)
        - omega * abs(s) ** (2.0 - alpha) / ((1.0 - alpha) * m ** (2.0 - alpha))
    )
