"""Distribution algebra for nonnegative light-tailed laws.

Declarative specs (exponential, deterministic, uniform interval, Erlang,
finite mixture) closed under the transforms a single-server queue analysis
needs: truncation B*1(B<y), conditioning on {B < y}, endpoint-atom removal,
and renewal thinning of an arrival stream.  Every moment generating
function is closed form; no quadrature anywhere.  Sampling is inverse
transform driven by ``rng.random()`` so streams are reproducible bit for
bit from a seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import gammainc, gammaincinv


class OutOfDomainError(ValueError):
    """Evaluation point at or beyond an abscissa of convergence."""


class OutOfRangeError(ValueError):
    """Target value outside the invertible range of a transform."""


@dataclass(frozen=True)
class Exponential:
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")


@dataclass(frozen=True)
class Deterministic:
    value: float

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError("value must be nonnegative")


@dataclass(frozen=True)
class UniformInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (0 <= self.lo < self.hi):
            raise ValueError("need 0 <= lo < hi")


@dataclass(frozen=True)
class Erlang:
    shape: int
    rate: float

    def __post_init__(self):
        if self.shape != int(self.shape) or self.shape < 1:
            raise ValueError("shape must be a positive integer")
        if not self.rate > 0:
            raise ValueError("rate must be positive")


@dataclass(frozen=True)
class FiniteMixture:
    components: Tuple[Tuple[float, "DistributionSpec"], ...]

    def __post_init__(self):
        comps = tuple((float(w), d) for w, d in self.components)
        if not comps:
            raise ValueError("mixture needs at least one component")
        for w, _ in comps:
            if not (0 < w <= 1):
                raise ValueError("weights must lie in (0, 1]")
        if abs(math.fsum(w for w, _ in comps) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        object.__setattr__(self, "components", comps)


@dataclass(frozen=True)
class ConditionedBelow:
    """Law of ``base`` given {base < cutoff}.

    Derived variant produced by :func:`truncate_below` and
    :func:`split_endpoint_atom`; base must be Exponential or Erlang
    (the other variants condition structurally).
    """

    base: Union[Exponential, Erlang]
    cutoff: float

    def __post_init__(self):
        if not isinstance(self.base, (Exponential, Erlang)):
            raise ValueError("base must be Exponential or Erlang")
        if not self.cutoff > 0:
            raise ValueError("cutoff must be positive")


DistributionSpec = Union[
    Exponential, Deterministic, UniformInterval, Erlang, FiniteMixture,
    ConditionedBelow,
]

@dataclass(frozen=True)
class MgfDomain:
    s_max: float
    finite_at_boundary: bool


def _erlang_params(base) -> Tuple[int, float]:
    if isinstance(base, Exponential):
        return 1, base.rate
    return base.shape, base.rate


def _int_power_exp(m: int, theta: float, y: float) -> float:
    """Integral of x^m * exp(-theta*x) over [0, y], y finite."""
    if theta == 0.0:
        return y ** (m + 1) / (m + 1)
    if theta > 0:
        return math.factorial(m) / theta ** (m + 1) * float(gammainc(m + 1, theta * y))
    # theta < 0: all-positive series, no cancellation
    a = -theta
    c = y ** (m + 1)
    p = 1.0
    total = 0.0
    for j in range(100000):
        term = p * c / (m + j + 1)
        total += term
        if term < total * 1e-18:
            break
        p *= a * y / (j + 1)
    return total


def _cond_parts(d: ConditionedBelow) -> Tuple[int, float, float]:
    k, rate = _erlang_params(d.base)
    den = float(gammainc(k, rate * d.cutoff))
    return k, rate, den


def _gamma_coeff(k: int, rate: float) -> float:
    return rate ** k / math.factorial(k - 1)


def mgf_abscissa(d: DistributionSpec) -> MgfDomain:
    """Abscissa of convergence of the mgf; +inf for bounded support."""
    if isinstance(d, (Exponential, Erlang)):
        return MgfDomain(d.rate, False)
    if isinstance(d, FiniteMixture):
        s_max = min(mgf_abscissa(c).s_max for _, c in d.components)
        return MgfDomain(s_max, math.isinf(s_max))
    return MgfDomain(math.inf, True)


def mgf(d: DistributionSpec, s: float) -> float:
    """E[exp(s X)], exact per-variant closed form.

    Raises OutOfDomainError when s >= s_max(d).
    """
    if s >= mgf_abscissa(d).s_max:
        raise OutOfDomainError(f"s={s} at or beyond abscissa of convergence")
    return _mgf(d, s)


def _mgf(d, s):
    if isinstance(d, Exponential):
        return d.rate / (d.rate - s)
    if isinstance(d, Deterministic):
        return math.exp(s * d.value)
    if isinstance(d, UniformInterval):
        if s == 0.0:
            return 1.0
        x = s * (d.hi - d.lo)
        return math.exp(s * d.lo) * math.expm1(x) / x
    if isinstance(d, Erlang):
        return (d.rate / (d.rate - s)) ** d.shape
    if isinstance(d, ConditionedBelow):
        k, rate, den = _cond_parts(d)
        return _gamma_coeff(k, rate) * _int_power_exp(k - 1, rate - s, d.cutoff) / den
    return math.fsum(w * _mgf(c, s) for w, c in d.components)


def mgf_deriv(d: DistributionSpec, s: float) -> float:
    """E[X exp(s X)], the derivative of the mgf."""
    if s >= mgf_abscissa(d).s_max:
        raise OutOfDomainError(f"s={s} at or beyond abscissa of convergence")
    return _mgf_deriv(d, s)


def _uniform_slope(x: float) -> float:
    # d/dx of expm1(x)/x; series near 0 avoids cancellation
    if abs(x) < 1e-4:
        return 0.5 + x / 3.0 + x * x / 8.0 + x ** 3 / 30.0
    return ((x - 1.0) * math.exp(x) + 1.0) / (x * x)


def _mgf_deriv(d, s):
    if isinstance(d, Exponential):
        return d.rate / (d.rate - s) ** 2
    if isinstance(d, Deterministic):
        return d.value * math.exp(s * d.value)
    if isinstance(d, UniformInterval):
        h = d.hi - d.lo
        x = s * h
        if s == 0.0:
            return 0.5 * (d.lo + d.hi)
        g = math.expm1(x) / x
        return math.exp(s * d.lo) * (d.lo * g + h * _uniform_slope(x))
    if isinstance(d, Erlang):
        return d.shape * d.rate ** d.shape / (d.rate - s) ** (d.shape + 1)
    if isinstance(d, ConditionedBelow):
        k, rate, den = _cond_parts(d)
        return _gamma_coeff(k, rate) * _int_power_exp(k, rate - s, d.cutoff) / den
    return math.fsum(w * _mgf_deriv(c, s) for w, c in d.components)


def moments(d: DistributionSpec) -> Tuple[float, float]:
    """(mean, variance) in closed form."""
    if isinstance(d, Exponential):
        return 1.0 / d.rate, 1.0 / d.rate ** 2
    if isinstance(d, Deterministic):
        return d.value, 0.0
    if isinstance(d, UniformInterval):
        return 0.5 * (d.lo + d.hi), (d.hi - d.lo) ** 2 / 12.0
    if isinstance(d, Erlang):
        return d.shape / d.rate, d.shape / d.rate ** 2
    if isinstance(d, ConditionedBelow):
        k, rate, den = _cond_parts(d)
        coeff = _gamma_coeff(k, rate)
        m1 = coeff * _int_power_exp(k, rate, d.cutoff) / den
        m2 = coeff * _int_power_exp(k + 1, rate, d.cutoff) / den
        return m1, m2 - m1 * m1
    parts = [(w,) + moments(c) for w, c in d.components]
    mean = math.fsum(w * m for w, m, _ in parts)
    msq = math.fsum(w * (v + m * m) for w, m, v in parts)
    return mean, msq - mean * mean


def ess_sup(d: DistributionSpec) -> float:
    if isinstance(d, (Exponential, Erlang)):
        return math.inf
    if isinstance(d, Deterministic):
        return d.value
    if isinstance(d, UniformInterval):
        return d.hi
    if isinstance(d, ConditionedBelow):
        return d.cutoff
    return max(ess_sup(c) for _, c in d.components)


def ess_inf(d: DistributionSpec) -> float:
    if isinstance(d, (Exponential, Erlang, ConditionedBelow)):
        return 0.0
    if isinstance(d, Deterministic):
        return d.value
    if isinstance(d, UniformInterval):
        return d.lo
    return min(ess_inf(c) for _, c in d.components)


def atom_at(d: DistributionSpec, x: float) -> float:
    """Point mass P(X = x); structural, only Deterministic leaves carry atoms."""
    if isinstance(d, Deterministic):
        return 1.0 if d.value == x else 0.0
    if isinstance(d, FiniteMixture):
        return math.fsum(w * atom_at(c, x) for w, c in d.components)
    return 0.0


def cdf(d: DistributionSpec, x: float) -> float:
    """P(X <= x)."""
    if isinstance(d, Exponential):
        return -math.expm1(-d.rate * x) if x > 0 else 0.0
    if isinstance(d, Deterministic):
        return 1.0 if x >= d.value else 0.0
    if isinstance(d, UniformInterval):
        if x <= d.lo:
            return 0.0
        if x >= d.hi:
            return 1.0
        return (x - d.lo) / (d.hi - d.lo)
    if isinstance(d, Erlang):
        return float(gammainc(d.shape, d.rate * x)) if x > 0 else 0.0
    if isinstance(d, ConditionedBelow):
        if x <= 0:
            return 0.0
        if x >= d.cutoff:
            return 1.0
        k, rate, den = _cond_parts(d)
        return float(gammainc(k, rate * x)) / den
    return math.fsum(w * cdf(c, x) for w, c in d.components)


def prob_below(d: DistributionSpec, x: float) -> float:
    """P(X < x), strict."""
    return cdf(d, x) - atom_at(d, x)


def inverse_mgf_neg(d: DistributionSpec, v: float) -> float:
    """The unique u >= 0 with mgf(d, -u) = v.

    The map u -> mgf(d, -u) decreases continuously from 1 toward P(X=0),
    so v must lie in (P(X=0), 1].  Bisection after bracket doubling,
    absolute tolerance 1e-12 in u.
    """
    if v > 1.0:
        raise OutOfRangeError(f"v={v} exceeds mgf(d, 0) = 1")
    floor = atom_at(d, 0.0)
    if v <= floor:
        raise OutOfRangeError(f"v={v} at or below inf mgf(d, -u) = {floor}")
    if v == 1.0:
        return 0.0
    lo, hi = 0.0, 1.0
    for _ in range(1100):
        if _mgf(d, -hi) < v:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise OutOfRangeError(f"v={v} too close to the infimum to bracket")
    for _ in range(200):
        if hi - lo <= 1e-12:
            break
        mid = 0.5 * (lo + hi)
        if _mgf(d, -mid) > v:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _condition_below(d: DistributionSpec, y: float) -> DistributionSpec:
    # law of X given {X < y}; caller guarantees P(X < y) > 0
    if isinstance(d, (Exponential, Erlang)):
        return ConditionedBelow(d, y)
    if isinstance(d, Deterministic):
        return d
    if isinstance(d, UniformInterval):
        return d if y >= d.hi else UniformInterval(d.lo, y)
    if isinstance(d, ConditionedBelow):
        return d if y >= d.cutoff else ConditionedBelow(d.base, y)
    parts = [(w * prob_below(c, y), c) for w, c in d.components]
    total = math.fsum(p for p, _ in parts)
    kept = [(p / total, _condition_below(c, y)) for p, c in parts if p > 0]
    if len(kept) == 1:
        return kept[0][1]
    return FiniteMixture(tuple(kept))


def truncate_below(d: DistributionSpec, y: float) -> DistributionSpec:
    """Law of X*1(X < y): mass P(X >= y) relocated to an atom at 0."""
    if not y > 0:
        raise ValueError("y must be positive")
    below = prob_below(d, y)
    above = 1.0 - below
    if above == 0.0:
        return d
    if below == 0.0:
        return Deterministic(0.0)
    return FiniteMixture(((above, Deterministic(0.0)),
                          (below, _condition_below(d, y))))


def split_endpoint_atom(
    d: DistributionSpec,
) -> Tuple[float, float, Optional[DistributionSpec]]:
    """(q, x_B, B1): endpoint atom mass, essential sup, and the law of
    X given {X < x_B} when 0 < q < 1 (None when q is 0 or 1)."""
    x_b = ess_sup(d)
    if math.isinf(x_b):
        return 0.0, math.inf, None
    q = atom_at(d, x_b)
    if q == 0.0:
        return 0.0, x_b, None
    if q >= 1.0:
        return 1.0, x_b, None
    return q, x_b, _condition_below(d, x_b)


def thinned_arrival_mgf(arrival: DistributionSpec, p: float, s: float) -> float:
    """Mgf of the inter-arrival time of a p-thinned renewal stream.

    A geometric(p) sum of original inter-arrival times:
    p*Phi_A(s) / (1 - (1-p)*Phi_A(s)).
    """
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    phi = mgf(arrival, s)
    rest = (1.0 - p) * phi
    if rest >= 1.0:
        raise OutOfDomainError("thinned geometric series diverges")
    return p * phi / (1.0 - rest)


def thinned_arrival_mgf_deriv(arrival: DistributionSpec, p: float, s: float) -> float:
    """Derivative in s of thinned_arrival_mgf."""
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    phi = mgf(arrival, s)
    rest = (1.0 - p) * phi
    if rest >= 1.0:
        raise OutOfDomainError("thinned geometric series diverges")
    return p * mgf_deriv(arrival, s) / (1.0 - rest) ** 2


def stream(seed: int, index: int) -> np.random.Generator:
    """Named substream: generator index of the family rooted at seed."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def sample_array(d: DistributionSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    """n inverse-transform draws as a float64 array.

    Mixture draws consume the selector uniforms first, then one block of
    uniforms per component in declaration order, so a (seed, n) pair
    fixes the output exactly.
    """
    if isinstance(d, Deterministic):
        return np.full(n, d.value, dtype=np.float64)
    if isinstance(d, Exponential):
        return -np.log1p(-rng.random(n)) / d.rate
    if isinstance(d, UniformInterval):
        return d.lo + (d.hi - d.lo) * rng.random(n)
    if isinstance(d, Erlang):
        u = rng.random((n, d.shape))
        return -np.log1p(-u).sum(axis=1) / d.rate
    if isinstance(d, ConditionedBelow):
        u = rng.random(n)
        k, rate = _erlang_params(d.base)
        if k == 1:
            return -np.log1p(u * np.expm1(-rate * d.cutoff)) / rate
        return gammaincinv(k, u * gammainc(k, rate * d.cutoff)) / rate
    u = rng.random(n)
    weights = np.array([w for w, _ in d.components])
    idx = np.searchsorted(np.cumsum(weights), u, side="right")
    idx = np.minimum(idx, len(weights) - 1)
    out = np.empty(n, dtype=np.float64)
    for j, (_, comp) in enumerate(d.components):
        mask = idx == j
        cnt = int(mask.sum())
        if cnt:
            out[mask] = sample_array(comp, rng, cnt)
    return out


def sample(d: DistributionSpec, rng: np.random.Generator) -> float:
    return float(sample_array(d, rng, 1)[0])


def to_json(d: DistributionSpec) -> dict:
    if isinstance(d, Exponential):
        return {"type": "exponential", "rate": d.rate}
    if isinstance(d, Deterministic):
        return {"type": "deterministic", "value": d.value}
    if isinstance(d, UniformInterval):
        return {"type": "uniform", "lo": d.lo, "hi": d.hi}
    if isinstance(d, Erlang):
        return {"type": "erlang", "shape": d.shape, "rate": d.rate}
    if isinstance(d, ConditionedBelow):
        return {"type": "conditioned_below", "base": to_json(d.base),
                "cutoff": d.cutoff}
    return {"type": "mixture",
            "components": [{"weight": w, "dist": to_json(c)}
                           for w, c in d.components]}


def from_json(obj: dict) -> DistributionSpec:
    """Parse the JSON object form; raises ValueError on malformed input."""
    if not isinstance(obj, dict) or "type" not in obj:
        raise ValueError("distribution JSON must be an object with a 'type'")
    t = obj["type"]
    if t == "exponential":
        return Exponential(float(obj["rate"]))
    if t == "deterministic":
        return Deterministic(float(obj["value"]))
    if t == "uniform":
        return UniformInterval(float(obj["lo"]), float(obj["hi"]))
    if t == "erlang":
        return Erlang(int(obj["shape"]), float(obj["rate"]))
    if t == "conditioned_below":
        base = from_json(obj["base"])
        if not isinstance(base, (Exponential, Erlang)):
            raise ValueError("conditioned_below base must be exponential or erlang")
        return ConditionedBelow(base, float(obj["cutoff"]))
    if t == "mixture":
        comps = tuple((float(c["weight"]), from_json(c["dist"]))
                      for c in obj["components"])
        return FiniteMixture(comps)
    raise ValueError(f"unknown distribution type {t!r}")
