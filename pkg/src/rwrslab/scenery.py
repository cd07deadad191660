"""Scenery distributions with stretched-exponential upper tails.

Two concrete families are provided, both centered (mean exactly zero) with
finite variance and a closed-form upper tail ``P(Y > t)``:

* ``SymmetricWeibull(q, b)``: law symmetric about 0 with
  ``P(Y > t) = exp(-(t/b)**q) / 2`` for ``t >= 0``.
* ``CenteredWeibull(q, b)``: ``Y = W - E[W]`` for a one-sided Weibull ``W``
  with ``P(W > t) = exp(-(t/b)**q)``.

For both families ``log P(Y > t)`` behaves like ``-c * t**q`` for large
``t`` with ``c = b**-q``, so the slowly-varying tail coefficient is the
constant ``c`` and its scaling exponent ``gamma`` is identically 1.

Everything tail-related is exposed in log space as well: rare-event work
routinely needs probabilities far below the smallest positive double.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SYMMETRIC_WEIBULL",
    "CENTERED_WEIBULL",
    "SceneryDist",
    "tail_prob",
    "log_tail_prob",
    "inverse_tail",
    "moments",
    "sample",
    "sample_tail",
]

SYMMETRIC_WEIBULL = "SymmetricWeibull"
CENTERED_WEIBULL = "CenteredWeibull"

_FAMILIES = (SYMMETRIC_WEIBULL, CENTERED_WEIBULL)

# Smallest uniform we feed into inverse transforms; keeps draws finite.
_U_FLOOR = 1e-300


@dataclass(frozen=True)
class SceneryDist:
    """An i.i.d. scenery law, pinned down by family, tail exponent and scale.

    Parameters
    ----------
    family : str
        ``"SymmetricWeibull"`` or ``"CenteredWeibull"``.
    q : float
        Tail exponent in (0, 1].  ``q = 1`` (exponential tails) is admitted
        only so that small convolution oracles stay analytic; theorem-facing
        code validates ``q < 1`` separately.
    b : float
        Scale parameter, same units as the scenery values.

    Derived attributes: ``c = b**-q`` (the constant tail coefficient),
    ``shift`` (``E[W]`` for the centered family, else 0) and ``sigma2``
    (the exact variance).
    """

    family: str
    q: float
    b: float
    c: float = field(init=False)
    shift: float = field(init=False)
    sigma2: float = field(init=False)

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown scenery family {self.family!r}")
        if not (0.0 < self.q <= 1.0):
            raise ValueError(f"tail exponent q={self.q} outside (0, 1]")
        if not (self.b > 0.0):
            raise ValueError(f"scale b={self.b} must be positive")
        object.__setattr__(self, "c", self.b ** -self.q)
        g2 = math.gamma(1.0 + 2.0 / self.q)
        if self.family == SYMMETRIC_WEIBULL:
            object.__setattr__(self, "shift", 0.0)
            object.__setattr__(self, "sigma2", self.b ** 2 * g2)
        else:
            g1 = math.gamma(1.0 + 1.0 / self.q)
            object.__setattr__(self, "shift", self.b * g1)
            object.__setattr__(self, "sigma2", self.b ** 2 * (g2 - g1 ** 2))

    # dataclass sugar so the distribution reads like a value
    def tail_prob(self, t):
        return tail_prob(self, t)

    def log_tail_prob(self, t):
        return log_tail_prob(self, t)

    def moments(self):
        return moments(self)

    def sample(self, rng, size=None):
        return sample(self, rng, size)

    def sample_tail(self, u, rng, size=None):
        return sample_tail(self, u, rng, size)

    def label(self) -> str:
        return f"{self.family}(q={self.q}, b={self.b})"


def tail_prob(dist: SceneryDist, t):
    """Exact ``P(Y > t)``; accepts scalars or arrays, any real ``t``."""
    t = np.asarray(t, dtype=float)
    if dist.family == SYMMETRIC_WEIBULL:
        pos = 0.5 * np.exp(-((np.abs(t) / dist.b) ** dist.q))
        out = np.where(t >= 0.0, pos, 1.0 - pos)
    else:
        z = np.maximum(t + dist.shift, 0.0)
        out = np.where(t + dist.shift >= 0.0,
                       np.exp(-((z / dist.b) ** dist.q)), 1.0)
    return out if out.ndim else float(out)

def log_tail_prob(dist: SceneryDist, t):
    """``log P(Y > t)`` evaluated without underflow for large ``t``."""
    t = np.asarray(t, dtype=float)
    if dist.family == SYMMETRIC_WEIBULL:
        expo = (np.abs(t) / dist.b) ** dist.q
        pos = math.log(0.5) - expo
        # t < 0: log(1 - exp(pos)) with pos <= log(1/2), safe for log1p
        neg = np.log1p(-0.5 * np.exp(-expo))
        out = np.where(t >= 0.0, pos, neg)
    else:
        z = np.maximum(t + dist.shift, 0.0)
        out = np.where(t + dist.shift >= 0.0, -((z / dist.b) ** dist.q), 0.0)
    return out if out.ndim else float(out)

def inverse_tail(dist: SceneryDist, p):
    """Upper quantile: the ``t`` with ``tail_prob(dist, t) = p``, ``p`` in (0, 1).

    Strictly decreasing in ``p``; the inverse-transform seam used by both
    samplers (a uniform ``u`` forced onto the positive branch of the
    symmetric family lands on ``b * (-log u)**(1/q)``).
    """
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ValueError("inverse_tail needs p strictly inside (0, 1)")
    if dist.family == SYMMETRIC_WEIBULL:
        hi = dist.b * (-np.log(np.minimum(2.0 * p, 1.0))) ** (1.0 / dist.q)
        lo = -dist.b * (-np.log(np.minimum(2.0 * (1.0 - p), 1.0))) ** (1.0 / dist.q)
        out = np.where(p <= 0.5, hi, lo)
    else:
        out = dist.b * (-np.log(p)) ** (1.0 / dist.q) - dist.shift
    return out if out.ndim else float(out)


def moments(dist: SceneryDist):
    """``(mean, variance)``: mean is exactly 0 by construction."""
    return 0.0, dist.sigma2


def sample(dist: SceneryDist, rng: np.random.Generator, size=None):
    """i.i.d. draws with the exact law of ``dist`` (inverse transform).

    One uniform word per draw; reproducible given the generator state.
    """
    u = rng.random(size)
    u = np.maximum(u, _U_FLOOR)
    return inverse_tail(dist, u)


def sample_tail(dist: SceneryDist, u, rng: np.random.Generator, size=None):
    """Draws from ``Y | Y > u``; every returned value is strictly above ``u``.

    The density ratio against the unconditional law is ``1/tail_prob(dist, u)``
    on ``(u, inf)``, so ``tail_prob(dist, u)`` is the importance weight that
    reverses the conditioning.

    Raises
    ------
    ValueError
        If ``tail_prob(dist, u)`` underflows to zero; callers must switch to
        log-space machinery in that regime.
    """
    p0 = tail_prob(dist, u)
    if p0 <= 0.0:
        raise ValueError(
            f"tail_prob({u}) underflowed to 0; conditional sampling must be "
            "done in log space at this level")
    v = np.maximum(rng.random(size), _U_FLOOR)
    # v < 1 always (rng.random is in [0,1)), hence the strict support bound
    return inverse_tail(dist, v * p0)
