"""Tail decay estimation and rare-event cross-validation.

Two estimators connect simulation output to the analytic decay rates:
a least-squares fit to the logarithmic empirical ccdf over an upper
quantile window, and an exponential change-of-measure estimator for
workload exceedance probabilities driven by the positive root of the
Lundberg equation, so the tilted random walk drifts upward and first
passage is certain.

The bootstrap confidence interval resamples at the customer level and
ignores autocorrelation between successive waits, so it is optimistic;
the joint-interval agreement rule below compensates with a relative
floor when two fits are compared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import dist
from .dist import (ConditionedBelow, Deterministic, Erlang, Exponential,
                   FiniteMixture, OutOfDomainError, UniformInterval, mgf,
                   mgf_deriv, sample_array, stream)
from .ratecalc import QueueModel, gamma_w_detail, psi


class DegenerateTailError(ValueError):
    """Too few distinct values in the fitting window to estimate a slope."""


class TiltUnavailableError(ValueError):
    """No upward-drifting exponential change of measure exists here."""


@dataclass(frozen=True)
class TailFit:
    rate: float
    stderr: float
    window: Tuple[float, float]
    points_used: int
    bootstrap_ci: Optional[Tuple[float, float]] = None

    def to_json(self) -> dict:
        ci = None if self.bootstrap_ci is None else [self.bootstrap_ci[0],
                                                     self.bootstrap_ci[1]]
        return {"rate": self.rate, "stderr": self.stderr,
                "window": [self.window[0], self.window[1]],
                "points": self.points_used, "ci": ci}


def _ccdf_slope(x: np.ndarray, lo_quantile: float, drop_top: int,
                min_points: int):
    x = np.sort(x)
    n = x.size
    x_lo = x[int(np.ceil(lo_quantile * n)) - 1]
    x_hi = x[n - drop_top]
    vals, counts = np.unique(x, return_counts=True)
    tail = n - np.cumsum(counts)        # count strictly greater than vals[i]
    m = (vals >= x_lo) & (vals <= x_hi) & (tail > 0)
    if int(m.sum()) < min_points:
        raise DegenerateTailError(
            f"only {int(m.sum())} distinct values in the window "
            f"[{x_lo}, {x_hi}]; need {min_points}")
    xs = vals[m]
    ys = np.log(tail[m] / n)
    xbar = xs.mean()
    sxx = float(((xs - xbar) ** 2).sum())
    slope = float(((xs - xbar) * ys).sum()) / sxx
    resid = ys - ys.mean() - slope * (xs - xbar)
    se = math.sqrt(float((resid ** 2).sum()) / (len(xs) - 2) / sxx)
    return -slope, se, (float(x_lo), float(x_hi)), len(xs)


def fit_decay(samples, lo_quantile: float = 0.99, drop_top: int = 10,
              min_points: int = 500, bootstrap: int = 0,
              seed: int = 0) -> TailFit:
    """Least-squares slope of the log empirical ccdf over the window
    between the lo_quantile sample and the point where drop_top order
    statistics remain; the decay rate estimate is minus that slope.

    bootstrap > 0 adds a percentile confidence interval from that many
    customer-level resamples.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1:
        x = x.ravel()
    if x.size < 5000:
        raise ValueError(f"need at least 5000 samples, got {x.size}")
    if np.any(x < 0):
        raise ValueError("samples must be nonnegative")
    if not 0.0 < lo_quantile < 1.0:
        raise ValueError("lo_quantile must lie in (0, 1)")
    if drop_top < 1 or drop_top >= x.size:
        raise ValueError("drop_top out of range")
    rate, se, window, pts = _ccdf_slope(x, lo_quantile, drop_top, min_points)
    ci = None
    if bootstrap > 0:
        rng = stream(seed, 0)
        rates: List[float] = []
        for _ in range(bootstrap):
            pick = rng.integers(0, x.size, x.size)
            try:
                r, _, _, _ = _ccdf_slope(x[pick], lo_quantile, drop_top,
                                         min_points)
            except DegenerateTailError:
                continue
            rates.append(r)
        if len(rates) >= 2:
            lo, hi = np.percentile(rates, [2.5, 97.5])
            ci = (float(lo), float(hi))
    return TailFit(rate=rate, stderr=se, window=window, points_used=pts,
                   bootstrap_ci=ci)


@dataclass(frozen=True)
class RateComparison:
    analytic: float
    fitted: float
    stderr: float
    rel_error: float
    z_score: float
    tolerance: float
    passed: bool

    def to_json(self) -> dict:
        return {"analytic": self.analytic, "fitted": self.fitted,
                "stderr": self.stderr, "rel_error": self.rel_error,
                "z_score": self.z_score, "tolerance": self.tolerance,
                "passed": self.passed}


def compare_rates(analytic: float, fitted: TailFit,
                  tolerance: float = 0.1) -> RateComparison:
    """Relative error and z-score of a fitted rate against an analytic one;
    passes when |relative error| <= tolerance."""
    diff = fitted.rate - analytic
    if analytic != 0.0:
        rel = diff / analytic
    else:
        rel = 0.0 if diff == 0.0 else math.inf
    if fitted.stderr > 0.0:
        z = diff / fitted.stderr
    else:
        z = 0.0 if diff == 0.0 else math.inf
    return RateComparison(analytic=analytic, fitted=fitted.rate,
                          stderr=fitted.stderr, rel_error=rel, z_score=z,
                          tolerance=tolerance, passed=abs(rel) <= tolerance)


def fits_agree(first: TailFit, second: TailFit, z_width: float = 4.0,
               rel_floor: float = 0.02) -> bool:
    """Joint-interval agreement: each rate gets the interval
    rate +- max(z_width * stderr, rel_floor * rate); the fits agree when
    the intervals overlap.  The relative floor covers the downward bias
    of the regression stderr on dependent ccdf points."""
    h1 = max(z_width * first.stderr, rel_floor * abs(first.rate))
    h2 = max(z_width * second.stderr, rel_floor * abs(second.rate))
    return (first.rate - h1 <= second.rate + h2
            and second.rate - h2 <= first.rate + h1)


class _WindowLaw:
    """Density proportional to exp(slope * x) on [lo, lo + width)."""

    def __init__(self, lo: float, width: float, slope: float):
        self.lo = lo
        self.width = width
        self.slope = slope

    def draw(self, rng, n: int) -> np.ndarray:
        u = rng.random(n)
        t = self.slope * self.width
        if t == 0.0:
            return self.lo + u * self.width
        return self.lo + np.log1p(u * np.expm1(t)) / self.slope


class _Direct:
    def __init__(self, law):
        self.law = law

    def draw(self, rng, n: int) -> np.ndarray:
        return sample_array(self.law, rng, n)


class _MixedLaw:
    """Selector uniforms first, then component blocks in order."""

    def __init__(self, weights, parts):
        self.weights = np.asarray(weights)
        self.parts = parts

    def draw(self, rng, n: int) -> np.ndarray:
        u = rng.random(n)
        edges = np.cumsum(self.weights)
        which = np.searchsorted(edges, u, side="right")
        which = np.minimum(which, len(self.parts) - 1)
        out = np.empty(n, dtype=np.float64)
        for j, part in enumerate(self.parts):
            sel = which == j
            k = int(sel.sum())
            if k:
                out[sel] = part.draw(rng, k)
        return out


def _tilt_law(law, theta: float):
    """Sampler for the law reweighted by exp(theta * x), staying in closed
    form for every supported variant."""
    if theta == 0.0:
        return _Direct(law)
    if isinstance(law, Exponential):
        if theta >= law.rate:
            raise TiltUnavailableError(
                f"tilt {theta} reaches the Exponential rate {law.rate}")
        return _Direct(Exponential(law.rate - theta))
    if isinstance(law, Erlang):
        if theta >= law.rate:
            raise TiltUnavailableError(
                f"tilt {theta} reaches the Erlang rate {law.rate}")
        return _Direct(Erlang(law.shape, law.rate - theta))
    if isinstance(law, Deterministic):
        return _Direct(law)
    if isinstance(law, UniformInterval):
        return _WindowLaw(law.lo, law.hi - law.lo, theta)
    if isinstance(law, ConditionedBelow):
        base = law.base
        if isinstance(base, Exponential):
            return _WindowLaw(0.0, law.cutoff, theta - base.rate)
        if theta < base.rate:
            return _Direct(ConditionedBelow(Erlang(base.shape,
                                                   base.rate - theta),
                                            law.cutoff))
        raise TiltUnavailableError(
            "tilting a below-cutoff Erlang past its rate has no closed form")
    if isinstance(law, FiniteMixture):
        weights = []
        parts = []
        for w, comp in law.components:
            weights.append(w * mgf(comp, theta))
            parts.append(_tilt_law(comp, theta))
        total = math.fsum(weights)
        return _MixedLaw([w / total for w in weights], parts)
    raise TiltUnavailableError(f"unsupported law {type(law).__name__}")


@dataclass(frozen=True)
class TiltedMeasure:
    nu: float
    psi_nu: float
    arrival: object
    service: object


def tilt_measure(model: QueueModel, nu: Optional[float] = None) -> TiltedMeasure:
    """Exponential change of measure: services reweighted by exp(nu * b),
    inter-arrivals by exp(-psi(nu) * a).  The default nu is the workload
    decay rate, where psi(nu) = nu and the tilted walk drifts upward."""
    if nu is None:
        root, boundary = gamma_w_detail(model)
        if boundary:
            raise TiltUnavailableError(
                "the decay rate sits on the service MGF-domain boundary; "
                "no zero-crossing tilt exists")
        nu = root
        psi_nu = nu
    else:
        if nu <= 0:
            raise ValueError("nu must be positive")
        try:
            psi_nu = psi(model.arrival, model.service, nu)
        except OutOfDomainError as exc:
            raise TiltUnavailableError(
                f"nu={nu} is at or beyond the service MGF domain") from exc
    drift = (mgf_deriv(model.service, nu) / mgf(model.service, nu)
             - mgf_deriv(model.arrival, -psi_nu) / mgf(model.arrival, -psi_nu))
    if not drift > 0.0:
        raise TiltUnavailableError(
            f"tilted drift {drift} is not positive at nu={nu}")
    return TiltedMeasure(nu=nu, psi_nu=psi_nu,
                         arrival=_tilt_law(model.arrival, -psi_nu),
                         service=_tilt_law(model.service, nu))


def is_workload_tail(model: QueueModel, x: float, replications: int,
                     seed: int) -> Tuple[float, float]:
    """Unbiased importance-sampling estimate of P(W > x) with its relative
    standard error.

    Each replication simulates the random walk S_k = sum(B_i - A_i) under
    the measure tilted at the workload decay rate until first passage over
    x, then weighs the path by exp(-gamma_w * S_tau)."""
    if x < 0:
        raise ValueError("x must be nonnegative")
    if replications < 2:
        raise ValueError("need at least two replications")
    measure = tilt_measure(model)
    nu = measure.nu
    chunk = 64
    estimates = np.empty(replications, dtype=np.float64)
    for rep in range(replications):
        rng = stream(seed, rep)
        s = 0.0
        while True:
            b = measure.service.draw(rng, chunk)
            a = measure.arrival.draw(rng, chunk)
            path = s + np.cumsum(b - a)
            over = np.flatnonzero(path > x)
            if over.size:
                s = float(path[over[0]])
                break
            s = float(path[-1])
        estimates[rep] = math.exp(-nu * s)
    mean = float(estimates.mean())
    se = float(estimates.std(ddof=1)) / math.sqrt(replications)
    return mean, se / mean
