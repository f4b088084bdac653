"""The block-counting chain: simulation and exact small-size oracles.

The chain starts at n blocks and, at every collision, jumps from b to
b - J_b + 1 where J_b follows the jump law q_b.  We count collisions
until the chain first reaches a target state k (k = 1 for the classical
collision count).

Simulation comes in two flavours:

* a compiled kernel for measures made of beta densities plus atoms at
  the endpoints, which enumerates each jump law lazily through the
  ratio recurrence

      lambda_{b,j+1}/lambda_{b,j} = ((b-j)/(j+1)) * ((j-2+a)/(b-j-1+c))

  so one collision costs O(E[J]) = O(1) work and one uniform;

* a generic inverse-CDF path over fully materialized jump rows for
  measures with interior atoms or black-box densities, capped at
  ``N_MAX_EXACT`` states because the row table is quadratic.

Replicates are deterministic: replicate r of a run draws from the
substream (seed, stream, r), so results are identical no matter how many
workers execute them.
"""

from __future__ import annotations

import functools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit
from scipy.special import betaln, logsumexp
from scipy.stats import ks_2samp

from .errors import DomainError, ResourceLimit
from .measure import Atom, BetaDensity, LambdaMeasure
from .rates import _log_binom, log_rate_row, total_rate_array
from .rng import substream

N_MAX_EXACT = 5000  # quadratic-cost cap for exact passes and row tables
N_MAX_DISTRIBUTION = 300  # cubic-cost cap for the full collision pmf


@dataclass(frozen=True)
class DescentResult:
    """Outcome of one descent: collision count and the state at which the
    chain first dropped to k or below."""

    collisions: int
    landing_state: int
    trace: Optional[tuple] = None


@dataclass(frozen=True)
class GreenKernel:
    """Visit probabilities g(n, b) for b = 1..n (index 0 unused)."""

    n: int
    g: np.ndarray


@dataclass(frozen=True)
class CollisionPmf:
    """P(C_n = c) for c = 0..n-1 (mass sits on 1..n-1 once n >= 2)."""

    n: int
    pmf: np.ndarray

    def mean(self) -> float:
        return float(np.dot(np.arange(self.pmf.size), self.pmf))

    def variance(self) -> float:
        c = np.arange(self.pmf.size)
        m = self.mean()
        return float(np.dot((c - m) ** 2, self.pmf))


def _resolve_workers(workers: Optional[int]) -> int:
    if workers is not None:
        return max(1, workers)
    env = os.environ.get("COALCOL_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# Fast path: beta mixtures with endpoint atoms


def _beta_family(measure: LambdaMeasure):
    """Split into (beta components, endpoint atom masses) or None if the
    measure needs the generic path."""
    betas = []
    w0 = 0.0
    for comp in measure.components:
        if isinstance(comp, BetaDensity):
            betas.append((comp.a, comp.c, comp.weight))
        elif isinstance(comp, Atom):
            if comp.x == 0.0:
                w0 += comp.weight
            elif comp.x == 1.0:
                pass  # absorbed by the terminal jump, no table needed
            else:
                return None
        else:
            return None
    return betas, w0


@functools.lru_cache(maxsize=8)
def _beta_tables(measure: LambdaMeasure, n: int):
    """Per-(measure, n) arrays consumed by the compiled kernel."""
    family = _beta_family(measure)
    assert family is not None
    betas, w0 = family
    lam = total_rate_array(measure, n)
    bs = np.arange(2, n + 1)
    anchors = np.zeros((max(len(betas), 1), n + 1))
    avals = np.zeros(max(len(betas), 1))
    cvals = np.ones(max(len(betas), 1))
    for i, (a, c, w) in enumerate(betas):
        avals[i] = a
        cvals[i] = c
        # lambda_{b,2} of this component: anchor of the lazy enumeration
        anchors[i, 2:] = w * np.exp(_log_binom(bs, 2) + betaln(a, c + bs - 2.0) - betaln(a, c))
    return lam, anchors, avals, cvals, w0


@njit(nogil=True, cache=True)
def _descend_beta(n, k, us, lam, anchors, avals, cvals, w0):
    """One descent from n to <= k.  Consumes one uniform per collision.

    Tail mass beyond cumulative (1 - 1e-14) of a row is assigned to the
    largest enumerated jump; the unenumerated remainder at j = b covers
    any atom at 1 automatically because j can never exceed b.
    """
    b = n
    collisions = 0
    ui = 0
    ncomp = avals.shape[0]
    vals = np.empty(ncomp)
    while b > k:
        t = us[ui] * lam[b]
        ui += 1
        acc = w0 * (b * (b - 1.0) / 2.0)
        for i in range(ncomp):
            vals[i] = anchors[i, b]
            acc += vals[i]
        j = 2
        lim = lam[b] * (1.0 - 1e-14)
        while acc < t and j < b and acc < lim:
            tot = 0.0
            for i in range(ncomp):
                vals[i] *= (b - j) * (j - 2.0 + avals[i]) / ((j + 1.0) * (b - j - 1.0 + cvals[i]))
                tot += vals[i]
            j += 1
            acc += tot
        b = b - j + 1
        collisions += 1
    return collisions, b


# ---------------------------------------------------------------------------
# Generic path: materialized jump rows


@functools.lru_cache(maxsize=4)
def _cdf_rows(measure: LambdaMeasure, n: int):
    """Cumulative jump laws for every state up to n (quadratic memory)."""
    if n > N_MAX_EXACT:
        raise ResourceLimit(
            f"generic sampling needs row tables, capped at n = {N_MAX_EXACT}; got {n}"
        )
    rows = [None, None]
    for b in range(2, n + 1):
        rows.append(np.cumsum(_q_pmf(measure, b)))
    return rows


def _q_pmf(measure: LambdaMeasure, b: int) -> np.ndarray:
    log_row = log_rate_row(measure, b)
    return np.exp(log_row - logsumexp(log_row))


def _descend_generic(n, k, rng, rows, trace=None):
    b = n
    collisions = 0
    while b > k:
        u = rng.random()
        j = 2 + int(np.searchsorted(rows[b], u * rows[b][-1], side="right"))
        j = min(j, b)
        b = b - j + 1
        collisions += 1
        if trace is not None:
            trace.append(b)
    return collisions, b


# ---------------------------------------------------------------------------
# Public simulation API


def simulate_descent(
    measure: LambdaMeasure,
    n: int,
    k: int = 1,
    rng: Optional[np.random.Generator] = None,
    trace: bool = False,
) -> DescentResult:
    """Run one descent from n to the first state <= k.

    Returns the collision count and landing state; ``trace`` additionally
    records every visited state (memory proportional to the path length).
    """
    if n < 1:
        raise DomainError(f"need at least 1 block, got {n}")
    if not 1 <= k <= n:
        raise DomainError(f"target state {k} outside [1, {n}]")
    if rng is None:
        rng = substream(0)
    if n <= k:
        return DescentResult(0, n, (n,) if trace else None)
    path = [n] if trace else None
    family = _beta_family(measure)
    if family is not None:
        lam, anchors, avals, cvals, w0 = _beta_tables(measure, n)
        b = n
        collisions = 0
        while b > k:
            us = np.array([rng.random()])
            c_step, b = _descend_beta(b, max(k, b - 1), us, lam, anchors, avals, cvals, w0)
            collisions += 1
            if path is not None:
                path.append(int(b))
        return DescentResult(collisions, int(b), tuple(path) if path else None)
    rows = _cdf_rows(measure, n)
    collisions, b = _descend_generic(n, k, rng, rows, trace=path)
    return DescentResult(collisions, int(b), tuple(path) if path else None)


def _descents_from_starts(measure, starts, k, seed, stream, workers):
    """Vector of descents with per-replicate start states.

    Replicate r draws from substream (seed, stream, r) regardless of the
    worker layout, so the output is worker-count independent.
    """
    reps = len(starts)
    counts = np.zeros(reps, dtype=np.int64)
    landings = np.zeros(reps, dtype=np.int64)
    family = _beta_family(measure)
    if family is not None:
        nmax = int(max(starts))
        lam, anchors, avals, cvals, w0 = _beta_tables(measure, nmax)

        def run_block(lo, hi):
            for r in range(lo, hi):
                s = int(starts[r])
                if s <= k:
                    counts[r], landings[r] = 0, s
                    continue
                rng = substream(seed, stream, r)
                us = rng.random(s - k)
                counts[r], landings[r] = _descend_beta(
                    s, k, us, lam, anchors, avals, cvals, w0
                )

        nworkers = _resolve_workers(workers)
        if nworkers == 1 or reps < 64:
            run_block(0, reps)
        else:
            chunk = -(-reps // (nworkers * 4))
            bounds = list(range(0, reps, chunk)) + [reps]
            with ThreadPoolExecutor(max_workers=nworkers) as pool:
                futures = [
                    pool.submit(run_block, lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])
                ]
                for f in futures:
                    f.result()
        return counts, landings
    rows = _cdf_rows(measure, int(max(starts)))
    for r in range(reps):
        s = int(starts[r])
        if s <= k:
            counts[r], landings[r] = 0, s
            continue
        rng = substream(seed, stream, r)
        counts[r], landings[r] = _descend_generic(s, k, rng, rows)
    return counts, landings


def sample_collisions(
    measure: LambdaMeasure,
    n: int,
    k: int = 1,
    replicates: int = 1,
    seed: int = 0,
    workers: Optional[int] = None,
    stream: int = 0,
):
    """Simulate the collision count of a descent n -> k, many replicates.

    Returns (counts, landing_states) as int64 arrays of length
    ``replicates``.
    """
    if n < 1:
        raise DomainError(f"need at least 1 block, got {n}")
    if not 1 <= k <= n:
        raise DomainError(f"target state {k} outside [1, {n}]")
    if replicates < 1:
        raise DomainError(f"need at least 1 replicate, got {replicates}")
    starts = np.full(replicates, n, dtype=np.int64)
    return _descents_from_starts(measure, starts, k, seed, stream, workers)


# ---------------------------------------------------------------------------
# Exact computations


def green_kernel(measure: LambdaMeasure, n: int, n_max_exact: int = N_MAX_EXACT) -> GreenKernel:
    """Visit probabilities of every state, by forward mass propagation.

    Start with unit mass at n; each state s passes its mass v(s) down
    according to q_s.  The result satisfies the one-step recursion of the
    visit probabilities by construction, and conservation forces
    g(n, 1) = 1 up to rounding.
    """
    if n < 1:
        raise DomainError(f"need at least 1 block, got {n}")
    if n > n_max_exact:
        raise ResourceLimit(f"exact pass capped at n = {n_max_exact}; got {n}")
    g = np.zeros(n + 1)
    g[n] = 1.0
    for s in range(n, 1, -1):
        q = _q_pmf(measure, s)
        # jump j sends mass to s - j + 1; reversed q aligns with states 1..s-1
        g[1:s] += g[s] * q[::-1]
    if n == 1:
        g[1] = 1.0
    return GreenKernel(n=n, g=g)


def exact_moments(measure: LambdaMeasure, n: int, n_max_exact: int = N_MAX_EXACT):
    """Exact mean and second moment of the collision count C_n.

    mean = sum_b g(n, b); the second moment weighs each visited state by
    the conditional remaining count through E[C_b], obtained from the
    first-step recursion E[C_b] = 1 + sum_j q_b(j) E[C_{b-j+1}].
    """
    if n < 1:
        raise DomainError(f"need at least 1 block, got {n}")
    if n > n_max_exact:
        raise ResourceLimit(f"exact pass capped at n = {n_max_exact}; got {n}")
    if n == 1:
        return 0.0, 0.0
    g = green_kernel(measure, n, n_max_exact).g
    ec = np.zeros(n + 1)
    for b in range(2, n + 1):
        q = _q_pmf(measure, b)
        ec[b] = 1.0 + float(np.dot(q[::-1], ec[1:b]))
    mean = math.fsum(g[2:])
    second = math.fsum(g[2:] * (2.0 * ec[2:] - 1.0))
    return mean, second


def exact_distribution(
    measure: LambdaMeasure, n: int, n_max: int = N_MAX_DISTRIBUTION
) -> CollisionPmf:
    """Full pmf of C_n by dynamic programming over the jump laws."""
    if n < 1:
        raise DomainError(f"need at least 1 block, got {n}")
    if n > n_max:
        raise ResourceLimit(f"collision pmf capped at n = {n_max}; got {n}")
    if n == 1:
        return CollisionPmf(1, np.array([1.0]))
    pm = np.zeros((n + 1, n))
    pm[1, 0] = 1.0
    for b in range(2, n + 1):
        q = _q_pmf(measure, b)
        pm[b, 1:] = q[::-1] @ pm[1:b, :-1]
    return CollisionPmf(n=n, pmf=pm[n])


def iterated_decomposition_check(
    measure: LambdaMeasure,
    n: int,
    cut_points,
    replicates: int = 10_000,
    seed: int = 0,
    level: float = 0.01,
    workers: Optional[int] = None,
) -> bool:
    """Check that C_n matches the sum of its partial-descent segments.

    The left sample draws C_n directly.  The right sample descends
    n -> cut_1, restarts at the (random) landing state, descends to
    cut_2, and so on down to 1, summing segment counts.  Both samples
    follow the same law; a two-sample KS test at ``level`` decides.
    """
    cuts = list(cut_points)
    if any(c2 >= c1 for c1, c2 in zip(cuts, cuts[1:])) or any(not 1 <= c < n for c in cuts):
        raise DomainError(f"cut points must be strictly decreasing inside [1, {n})")
    left, _ = sample_collisions(measure, n, 1, replicates, seed, workers, stream=0)
    totals = np.zeros(replicates, dtype=np.int64)
    starts = np.full(replicates, n, dtype=np.int64)
    for idx, cut in enumerate(cuts + [1]):
        counts, landings = _descents_from_starts(measure, starts, cut, seed, idx + 1, workers)
        totals += counts
        starts = landings
    if np.array_equal(left, totals):
        return True  # degenerate chains produce identical constant samples
    return bool(ks_2samp(left, totals).pvalue >= level)
