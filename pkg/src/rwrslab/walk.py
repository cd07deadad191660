"""Simple symmetric lattice walks with local-time tracking.

Walk simulation consumes exactly one rng word per step, so replica streams
are reproducible independent of storage layout.  Occupation statistics for
d >= 2 go through packed site codes and a sort (open addressing would buy
nothing at these sizes); d = 1 uses a plain offset array.

For transient dimensions the module also exposes the exact first-return
law (built by the oracle's renewal machinery), which is what makes
indicator Monte Carlo at horizons like 10^6 feasible: local-time events
depend on the walk only through its excursion lengths, and those can be
sampled exactly from the table instead of stepping the lattice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels, oracle

__all__ = [
    "WalkSpec",
    "LocalTimeField",
    "ReturnTimes",
    "simulate_path",
    "estimate_Kd",
    "estimate_f0",
    "sample_return_times",
    "first_return_cdf",
    "return_prob_bounds",
    "ell0_samples",
    "local_time_exceedance_mc",
]

SIMPLE_SYMMETRIC = "SimpleSymmetric"


@dataclass(frozen=True)
class WalkSpec:
    """A lattice walk model: dimension and step law."""

    d: int
    kind: str = SIMPLE_SYMMETRIC

    def __post_init__(self):
        if self.d not in (1, 2, 3, 4):
            raise ValueError(f"dimension d={self.d} unsupported (need 1..4)")
        if self.kind != SIMPLE_SYMMETRIC:
            raise ValueError(f"walk kind {self.kind!r} not implemented")

    @property
    def recurrent(self) -> bool:
        return self.d <= 2


@dataclass
class LocalTimeField:
    """Occupation statistics of one simulated path (epochs S_0 .. S_{n-1})."""

    n: int
    sites: np.ndarray   # packed site codes, sorted
    counts: np.ndarray  # visit counts per site
    ell0: int
    lmax: int
    range_size: int

    def __post_init__(self):
        total = int(self.counts.sum())
        if total != self.n:
            raise AssertionError(
                f"occupation identity violated: sum ell = {total} != n = {self.n}")
        if self.ell0 < 1 or not (1 <= self.lmax <= self.n):
            raise AssertionError("local-time bounds violated")
        if not (1 <= self.range_size <= self.n):
            raise AssertionError("range bounds violated")


@dataclass
class ReturnTimes:
    """Observed return times to the origin, censored at a horizon."""

    times: np.ndarray   # strictly increasing, all <= horizon
    horizon: int
    censored: bool      # True if no further return was observed by `horizon`

    def __post_init__(self):
        if len(self.times) and (np.diff(self.times) <= 0).any():
            raise AssertionError("return times must be strictly increasing")

    @property
    def increments(self) -> np.ndarray:
        return np.diff(np.concatenate(([0], self.times)))


def _require_n(n):
    if n < 1:
        raise ValueError("need horizon n >= 1")


def simulate_path(spec: WalkSpec, n: int, rng: np.random.Generator) -> LocalTimeField:
    """Exact occupation statistics of n epochs of the simple walk."""
    _require_n(n)
    codes = np.empty(n, dtype=np.int64)
    _kernels.walk_site_codes(rng, spec.d, n, codes)
    origin = _origin_code(spec.d, n)
    sites, counts = np.unique(codes, return_counts=True)
    idx = np.searchsorted(sites, origin)
    ell0 = int(counts[idx])  # origin is always visited (S_0 = 0)
    return LocalTimeField(n=n, sites=sites, counts=counts, ell0=ell0,
                          lmax=int(counts.max()), range_size=len(sites))


def _origin_code(d: int, n: int) -> int:
    base = 2 * n + 1
    code = 0
    for _ in range(d):
        code = code * base + n
    return code


def ell0_samples(spec: WalkSpec, n: int, replicas: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Monte Carlo sample of ell_n(0) (one walk per replica)."""
    _require_n(n)
    out = np.empty(replicas, dtype=np.int64)
    _kernels.ell0_batch(rng, spec.d, n, replicas, out)
    return out


def estimate_Kd(spec: WalkSpec, n: int, replicas: int,
                rng: np.random.Generator):
    """Monte Carlo estimate of the normalized expected local time at 0.

    Normalizer: n^(1/2) in d = 1, log n in d = 2.  Returns (estimate,
    stderr).  Rejected for d >= 3 where the constant is not defined.
    """
    if spec.d >= 3:
        raise ValueError("K_d is defined only for recurrent dimensions d <= 2")
    if n < 2:
        raise ValueError("need n >= 2 for a nonzero normalizer")
    norm = math.sqrt(n) if spec.d == 1 else math.log(n)
    vals = ell0_samples(spec, n, replicas, rng) / norm
    est = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0
    return est, stderr


def estimate_f0(spec: WalkSpec, m: int, replicas: int,
                rng: np.random.Generator):
    """Sandwich estimate of the return probability for transient walks.

    lower: empirical P(T_1 <= m) minus 3 binomial stderr.
    upper: empirical + 3 stderr + an analytic bound on returns after m from
    the local-CLT envelope P(S_{2k} = 0) <= C_d k^(-d/2) (constants in
    ``oracle.LOCAL_CLT_ENVELOPE``), summed over 2k > m.
    point: midpoint.  Returns (lower, upper, point).
    """
    if spec.d <= 2:
        raise ValueError("recurrent: f_0 = 1 in d <= 2")
    if m < 2:
        raise ValueError("need horizon m >= 2")
    out = np.empty(replicas, dtype=np.int64)
    _kernels.first_return_batch(rng, spec.d, m, replicas, out)
    phat = float((out > 0).mean())
    se = math.sqrt(max(phat * (1.0 - phat), 1e-12) / replicas)
    cd = oracle.LOCAL_CLT_ENVELOPE[spec.d]
    late = cd * (2.0 / (spec.d - 2)) * (m / 2.0) ** (1 - spec.d / 2.0)
    lower = max(phat - 3.0 * se, 0.0)
    upper = min(phat + 3.0 * se + late, 1.0)
    return lower, upper, 0.5 * (lower + upper)


def sample_return_times(spec: WalkSpec, m: int, max_returns: int,
                        rng: np.random.Generator) -> ReturnTimes:
    """Return times of one path up to horizon m (at most max_returns kept)."""
    _require_n(m)
    out = np.empty((1, max_returns), dtype=np.int64)
    _kernels.return_times_batch(rng, spec.d, m, max_returns, 1, out)
    times = out[0][out[0] > 0]
    return ReturnTimes(times=times, horizon=m,
                       censored=len(times) < max_returns)


def return_times_batch(spec: WalkSpec, m: int, max_returns: int,
                       replicas: int, rng: np.random.Generator) -> np.ndarray:
    """Stacked return times for many paths (-1 padded); test plumbing."""
    out = np.empty((replicas, max_returns), dtype=np.int64)
    _kernels.return_times_batch(rng, spec.d, m, max_returns, replicas, out)
    return out


# ---------------------------------------------------------------------------
# exact first-return quantities (excursion representation)
# ---------------------------------------------------------------------------

def first_return_cdf(spec: WalkSpec, m: int) -> float:
    """Exact P(T_1 <= m), from the renewal-recursion first-return law."""
    _require_n(m)
    cum, _total = oracle.first_return_table(spec.d, max(m, 2))
    k = m // 2
    if k == 0:
        return 0.0
    return float(cum[min(k, len(cum)) - 1])


def return_prob_bounds(spec: WalkSpec):
    """(lower, upper) bracket for f_0 from the tabulated first-return law.

    The table mass is a lower bound; the analytic local-CLT envelope bounds
    the mass of excursions longer than the table.
    """
    if spec.d <= 2:
        return 1.0, 1.0
    cum, total = oracle.first_return_table(spec.d, 1 << 20)
    kmax = len(cum)
    cd = oracle.LOCAL_CLT_ENVELOPE[spec.d]
    late = cd * (2.0 / (spec.d - 2)) * float(kmax) ** (1 - spec.d / 2.0)
    return total, min(total + late, 1.0)


def local_time_exceedance_mc(spec: WalkSpec, n: int, a: int, replicas: int,
                             rng: np.random.Generator) -> int:
    """Indicator MC hits for {ell_n(0) > a} in transient dimensions.

    Samples the a-th return time as a sum of excursions drawn from the
    exact first-return law and censors at the horizon; statistically
    identical to stepping the walk, at table-lookup cost.
    """
    if spec.d <= 2:
        raise ValueError("excursion sampling is for transient dimensions")
    _require_n(n)
    if a < 1 or a > n:
        raise ValueError("need 1 <= a <= n")
    horizon = n - 1
    cum, total = oracle.first_return_table(spec.d, max(horizon, 2))
    return int(_kernels.excursion_indicator_batch(
        rng, cum, total, horizon, a, replicas))


def ell0_excursion_samples(spec: WalkSpec, n: int, replicas: int,
                           rng: np.random.Generator, cap: int = 64) -> np.ndarray:
    """ell_n(0) samples through the excursion representation (d >= 3)."""
    if spec.d <= 2:
        raise ValueError("excursion sampling is for transient dimensions")
    _require_n(n)
    out = np.empty(replicas, dtype=np.int64)
    cum, total = oracle.first_return_table(spec.d, max(n - 1, 2))
    _kernels.excursion_ell0_batch(rng, cum, total, n - 1, cap, replicas, out)
    return out
