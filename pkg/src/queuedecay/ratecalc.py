"""Analytic tail decay rates for the stable single-server queue.

Everything reduces to three primitives: the workload rate ``gamma_w``
(unique positive root of Phi_A(-s) Phi_B(s) = 1), the busy-period rate
``gamma_p`` (concave program sup {s - psi(s)}), and low-priority /
shortest-remaining-processing-time variants built on the thinned
arrival stream.  One-dimensional searches are bisection for roots and
golden-section for concave maxima; derivatives appear only in regime
guards and in the reported initial-workload fraction ``a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

from .dist import (
    Deterministic,
    DistributionSpec,
    Exponential,
    FiniteMixture,
    OutOfDomainError,
    OutOfRangeError,
    cdf,
    ess_inf,
    ess_sup,
    from_json,
    inverse_mgf_neg,
    mgf,
    mgf_abscissa,
    mgf_deriv,
    moments,
    split_endpoint_atom,
    thinned_arrival_mgf,
    thinned_arrival_mgf_deriv,
    to_json,
    truncate_below,
)


class UnstableError(ValueError):
    """System load at or above one."""


class NoDelaysError(ValueError):
    """Service time never exceeds an inter-arrival time."""


class NumericalFailure(RuntimeError):
    """An expansion or iteration budget was exhausted."""


_ROOT_TOL = 1e-12
_GOLDEN_TOL = 1e-12
_MAX_EXPAND = 200
_DOMAIN_MARGIN = 1.0 - 1e-9
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Split:
    """Two-class decomposition: class 1 with probability p, else class 2."""
    p: float
    class1: DistributionSpec
    class2: DistributionSpec

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must lie strictly inside (0, 1)")


@dataclass(frozen=True)
class QueueModel:
    """One arrival law plus a service law or a two-class split.

    With a split, the full-system service law is always the mixture
    p * class1 + (1-p) * class2 and is derived automatically.
    Construction enforces stability (load below one) and that service
    can exceed an inter-arrival time at all.
    """

    arrival: DistributionSpec
    service: Optional[DistributionSpec] = None
    split: Optional[Split] = None

    def __post_init__(self):
        if self.split is not None:
            mix = FiniteMixture(((self.split.p, self.split.class1),
                                 (1.0 - self.split.p, self.split.class2)))
            if self.service is None:
                object.__setattr__(self, "service", mix)
            elif self.service != mix:
                raise ValueError("explicit service law must match the split mixture")
        if self.service is None:
            raise ValueError("provide a service law or a split")
        mean_a = moments(self.arrival)[0]
        mean_b = moments(self.service)[0]
        if not mean_b < mean_a:
            raise UnstableError(f"load {mean_b / mean_a:.6g} is not below 1")
        if not ess_sup(self.service) > ess_inf(self.arrival):
            raise NoDelaysError("service never exceeds an inter-arrival time")

    @property
    def rho(self) -> float:
        return moments(self.service)[0] / moments(self.arrival)[0]

    @property
    def arrival_rate(self) -> float:
        return 1.0 / moments(self.arrival)[0]


@dataclass(frozen=True)
class PriorityDecay:
    rate: float
    regime: str            # "interior" or "boundary"
    s_opt: float
    a: float               # positive only in the boundary regime


@dataclass(frozen=True)
class SrptDecay:
    rate: float
    case: str              # "no-atom", "atom", or "deterministic"


@dataclass(frozen=True)
class PoissonRates:
    gamma_w: float
    gamma_w2: Optional[float]
    gamma_v: Optional[float]
    guard_ok: Optional[bool]


@dataclass(frozen=True)
class CriticalTruncation:
    value: float
    tail_prob: float


@dataclass(frozen=True)
class HeavyTrafficApprox:
    K: float
    gamma_w_approx: float
    gamma_w2_approx: Optional[float]


@dataclass(frozen=True)
class DecayReport:
    """All analytic rates for one model; optional entries are None."""
    gamma_w: float
    gamma_p: float
    gamma_w2: Optional[float]
    gamma_v: Optional[float]
    regime: Optional[str]
    s_opt: Optional[float]
    a: Optional[float]
    K: float
    rho: float
    q: float
    x_b: float
    case: Optional[str]

    def to_json(self) -> dict:
        return {
            "gamma_w": self.gamma_w, "gamma_p": self.gamma_p,
            "gamma_w2": self.gamma_w2, "gamma_v": self.gamma_v,
            "regime": self.regime, "s_opt": self.s_opt, "a": self.a,
            "K": self.K, "rho": self.rho, "q": self.q, "x_b": self.x_b,
            "case": self.case,
        }


def _usable_cap(d: DistributionSpec) -> float:
    s_max = mgf_abscissa(d).s_max
    return s_max if math.isinf(s_max) else s_max * _DOMAIN_MARGIN


def _neg_inf_on_error(f: Callable[[float], float]) -> Callable[[float], float]:
    def wrapped(s):
        try:
            return f(s)
        except (OutOfDomainError, OutOfRangeError, OverflowError):
            return -math.inf
    return wrapped


def _diverging(g: Callable[[float], float]) -> Callable[[float], float]:
    def wrapped(s):
        try:
            return g(s)
        except (OutOfDomainError, OverflowError):
            return math.inf
    return wrapped


def _positive_root(g: Callable[[float], float], cap: float) -> Optional[float]:
    # g(0) = 0, g dips negative, at most one positive crossing; None when
    # g stays nonpositive all the way to a finite domain boundary
    lo = 0.0
    hi = None
    if math.isinf(cap):
        h = 1.0
        for _ in range(_MAX_EXPAND):
            if g(h) > 0.0:
                hi = h
                break
            lo = h
            h *= 2.0
        if hi is None:
            raise NumericalFailure("no sign change within the expansion budget")
    else:
        for k in range(1, 60):
            h = cap * (1.0 - 0.5 ** k)
            if h <= lo:
                continue
            if g(h) > 0.0:
                hi = h
                break
            lo = h
        if hi is None:
            return None
    for _ in range(200):
        if hi - lo <= _ROOT_TOL * max(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _expand_peak(f: Callable[[float], float]) -> float:
    # right end of a bracket containing the max of a concave f, f(0) = 0
    hi = 1.0
    fh = f(hi)
    for _ in range(_MAX_EXPAND):
        f2 = f(2.0 * hi)
        if f2 <= fh:
            return 2.0 * hi
        hi *= 2.0
        fh = f2
    raise NumericalFailure("no concave turnover within the expansion budget")


def _golden_max(f: Callable[[float], float], lo: float, hi: float
                ) -> Tuple[float, float]:
    """Maximize a concave f on [lo, hi]; returns (argmax, max).

    Evaluation failures upstream must already map to -inf so the search
    retreats from inadmissible regions.
    """
    tol = _GOLDEN_TOL * max(1.0, abs(hi))
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1, f2 = f(x1), f(x2)
    best_x, best_v = (x1, f1) if f1 >= f2 else (x2, f2)
    for _ in range(300):
        if hi - lo <= tol:
            break
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INVPHI * (hi - lo)
            f1 = f(x1)
            if f1 > best_v:
                best_x, best_v = x1, f1
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INVPHI * (hi - lo)
            f2 = f(x2)
            if f2 > best_v:
                best_x, best_v = x2, f2
    return best_x, best_v


def psi(arrival: DistributionSpec, service: DistributionSpec, s: float) -> float:
    """Busy-cycle input rate function: the unique u >= 0 with
    Phi_A(-u) * Phi_B(s) = 1.  Increasing and convex, psi(0) = 0."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    if s == 0.0:
        return 0.0
    v = 1.0 / mgf(service, s)
    if v > 1.0:
        v = 1.0    # mgf(service, s) >= 1 for s >= 0; guard rounding
    return inverse_mgf_neg(arrival, v)


def psi1(arrival: DistributionSpec, p: float, class1: DistributionSpec,
         s: float) -> float:
    """psi of the class-1 subsystem seen through the p-thinned arrival
    stream: the unique u >= 0 with Phi_A1(-u) * Phi_B1(s) = 1."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly inside (0, 1)")
    if s < 0:
        raise ValueError("s must be nonnegative")
    if s == 0.0:
        return 0.0
    v = 1.0 / mgf(class1, s)
    if v > 1.0:
        v = 1.0
    lo, hi = 0.0, 1.0
    for _ in range(1100):
        if thinned_arrival_mgf(arrival, p, -hi) < v:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise OutOfRangeError("target below the thinned-mgf infimum")
    for _ in range(200):
        if hi - lo <= 1e-12:
            break
        mid = 0.5 * (lo + hi)
        if thinned_arrival_mgf(arrival, p, -mid) > v:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def psi1_dual(arrival: DistributionSpec, p: float, class1: DistributionSpec,
              s: float) -> float:
    """Same map computed without thinning: psi against the service law
    that is class1 with probability p and zero otherwise."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly inside (0, 1)")
    mixed = FiniteMixture(((p, class1), (1.0 - p, Deterministic(0.0))))
    return psi(arrival, mixed, s)


def _psi1_deriv(arrival, p, class1, s, u: Optional[float] = None) -> float:
    # implicit differentiation of Phi_A1(-u(s)) * Phi_B1(s) = 1
    if u is None:
        u = psi1(arrival, p, class1, s)
    phi_b = mgf(class1, s)
    den = thinned_arrival_mgf_deriv(arrival, p, -u)
    return mgf_deriv(class1, s) / (den * phi_b * phi_b)


def gamma_w_detail(model: QueueModel) -> Tuple[float, bool]:
    """(gamma_w, boundary_flag).

    The flag is True when Phi_A(-s) Phi_B(s) never exceeds one on the
    mgf domain, in which case the sup-definition yields the abscissa
    s_max(B) itself rather than a root.
    """
    arrival, service = model.arrival, model.service
    g = _diverging(lambda s: mgf(arrival, -s) * mgf(service, s) - 1.0)
    root = _positive_root(g, _usable_cap(service))
    if root is None:
        return mgf_abscissa(service).s_max, True
    return root, False


def gamma_w(model: QueueModel) -> float:
    """Workload tail decay rate."""
    return gamma_w_detail(model)[0]


def gamma_p_detail(model: QueueModel) -> Tuple[float, float]:
    """(gamma_p, argmax) of the concave program sup_{s>=0} {s - psi(s)}."""
    arrival, service = model.arrival, model.service
    f = _neg_inf_on_error(lambda s: s - psi(arrival, service, s))
    cap = _usable_cap(service)
    hi = cap if not math.isinf(cap) else _expand_peak(f)
    s_opt, value = _golden_max(f, 0.0, hi)
    return value, s_opt


def gamma_p(model: QueueModel) -> float:
    """Busy-period tail decay rate."""
    return gamma_p_detail(model)[0]


def gamma_p_trunc(model: QueueModel, y: float) -> float:
    """Busy-period decay rate after truncating service at y (work of
    customers with service >= y removed).  Also the conditional sojourn
    decay rate of a shortest-remaining-first customer with service y
    when y carries no atom.  +inf when the truncated system never
    queues."""
    if not y > 0:
        raise ValueError("y must be positive")
    truncated = truncate_below(model.service, y)
    if not ess_sup(truncated) > ess_inf(model.arrival):
        return math.inf
    return gamma_p(QueueModel(model.arrival, truncated))


def gamma_w2(model: QueueModel) -> PriorityDecay:
    """Decay rate of low-priority waiting and sojourn time.

    Maximizes s - psi1(s) over [0, gamma_w].  Interior regime: the
    unconstrained optimizer lies inside, and the rate equals the
    class-1 busy-period rate.  Boundary regime: the map still rises at
    gamma_w; the rate is gamma_w - psi1(gamma_w) and a = 1 - psi1'(gamma_w)
    in (0, 1) is the most likely initial-workload fraction.
    """
    if model.split is None:
        raise ValueError("model has no class split")
    arrival = model.arrival
    p, class1 = model.split.p, model.split.class1
    gw, _ = gamma_w_detail(model)
    cap1 = _usable_cap(class1)
    if gw < cap1:
        u_gw = psi1(arrival, p, class1, gw)
        slope = _psi1_deriv(arrival, p, class1, gw, u_gw)
        if slope < 1.0:
            return PriorityDecay(gw - u_gw, "boundary", gw, 1.0 - slope)
    f = _neg_inf_on_error(lambda s: s - psi1(arrival, p, class1, s))
    s_opt, value = _golden_max(f, 0.0, min(gw, cap1))
    return PriorityDecay(value, "interior", s_opt, 0.0)


def gamma_v_srpt(model: QueueModel) -> SrptDecay:
    """Sojourn decay rate under shortest-remaining-processing-time,
    preemptive or not.  Dispatches on the service endpoint atom q:
    q = 0 gives the busy-period rate, q = 1 the workload rate, and
    0 < q < 1 the low-priority rate of the auxiliary model in which the
    endpoint atom is the low class."""
    q, x_b, class1 = split_endpoint_atom(model.service)
    if q == 0.0:
        return SrptDecay(gamma_p(model), "no-atom")
    if q >= 1.0:
        return SrptDecay(gamma_w(model), "deterministic")
    aux = QueueModel(model.arrival,
                     split=Split(1.0 - q, class1, Deterministic(x_b)))
    return SrptDecay(gamma_w2(aux).rate, "atom")


def poisson_rates(lam: float, service: Optional[DistributionSpec] = None,
                  split: Optional[Split] = None) -> PoissonRates:
    """Closed-form bundle for Poisson arrivals with rate lam.

    gamma_w solves s = lam * (Phi_B(s) - 1).  With a split, gamma_w2 is
    gamma_w - lam1 * (Phi_B1(gamma_w) - 1) provided the slope guard
    lam1 * Phi_B1'(gamma_w) < 1 holds; otherwise the program is interior
    and the class-1 busy-period rate is returned instead.  With a
    service endpoint atom q, gamma_v is the atom formula
    lam * q * (exp(x_B * gamma_w) - 1), whose own guard thins by 1 - q;
    when that guard fails the generic program's value is returned.
    guard_ok is the conjunction of the guards of the closed forms
    emitted, or None when nothing guarded applied.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    model = QueueModel(Exponential(lam), service, split)
    service = model.service
    g = _diverging(lambda s: lam * (mgf(service, s) - 1.0) - s)
    gw = _positive_root(g, _usable_cap(service))
    if gw is None:
        raise NumericalFailure("no root of the arrival-rate fixed point")
    gw2 = None
    guards = []
    if split is not None:
        lam1 = split.p * lam
        try:
            ok = lam1 * mgf_deriv(split.class1, gw) < 1.0
        except OutOfDomainError:
            ok = False
        guards.append(ok)
        if ok:
            gw2 = gw - lam1 * (mgf(split.class1, gw) - 1.0)
        else:
            gw2 = gamma_p(QueueModel(Exponential(lam1), split.class1))
    q, x_b, below = split_endpoint_atom(service)
    gv = None
    if q >= 1.0:
        gv = lam * math.expm1(x_b * gw)
    elif q > 0.0:
        lam1 = lam * (1.0 - q)
        try:
            ok = lam1 * mgf_deriv(below, gw) < 1.0
        except OutOfDomainError:
            ok = False
        guards.append(ok)
        if ok:
            gv = lam * q * math.expm1(x_b * gw)
        else:
            gv = gamma_v_srpt(model).rate
    guard = all(guards) if guards else None
    return PoissonRates(gw, gw2, gv, guard)


def y_star(model: QueueModel) -> CriticalTruncation:
    """Largest service-time cutoff whose truncated busy-period rate still
    reaches gamma_w, with the service tail mass P(B > y*) beside it.

    Bisection on the nonincreasing map y -> gamma_p_trunc(y) - gamma_w.
    For a degenerate service law the cutoff is its value, exactly.
    """
    q, x_b, _ = split_endpoint_atom(model.service)
    if q >= 1.0:
        return CriticalTruncation(x_b, 0.0)
    gw = gamma_w(model)
    lo, hi = 0.0, 1.0
    for _ in range(_MAX_EXPAND):
        if gamma_p_trunc(model, hi) < gw:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise NumericalFailure("no finite cutoff bracket; load may be degenerate")
    for _ in range(200):
        if hi - lo <= 1e-10 * max(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        if gamma_p_trunc(model, mid) >= gw:
            lo = mid
        else:
            hi = mid
    value = 0.5 * (lo + hi)
    return CriticalTruncation(value, 1.0 - cdf(model.service, value))


def heavy_traffic(model: QueueModel) -> HeavyTrafficApprox:
    """First-order rates near saturation: K = 2 / (var A + var B),
    gamma_w ~ K (1 - rho), and with a split
    gamma_w2 ~ K (1 - rho1) (1 - rho) where rho1 is the class-1 load."""
    var_a = moments(model.arrival)[1]
    var_b = moments(model.service)[1]
    total = var_a + var_b
    k = 2.0 / total if total > 0 else math.inf
    rho = model.rho
    gw2 = None
    if model.split is not None:
        rho1 = model.split.p * moments(model.split.class1)[0] * model.arrival_rate
        gw2 = k * (1.0 - rho1) * (1.0 - rho)
    return HeavyTrafficApprox(k, k * (1.0 - rho), gw2)


def decay_report(model: QueueModel) -> DecayReport:
    """Compute every applicable rate for the model in one pass."""
    gw, _ = gamma_w_detail(model)
    gp, _ = gamma_p_detail(model)
    q, x_b, class1 = split_endpoint_atom(model.service)
    regime = s_opt = a_frac = None
    gw2 = None
    if model.split is not None:
        pr = gamma_w2(model)
        gw2, regime, s_opt, a_frac = pr.rate, pr.regime, pr.s_opt, pr.a
    if q == 0.0:
        gv, case = gp, "no-atom"
    elif q >= 1.0:
        gv, case = gw, "deterministic"
    else:
        aux = QueueModel(model.arrival,
                         split=Split(1.0 - q, class1, Deterministic(x_b)))
        pr = gamma_w2(aux)
        gv, case = pr.rate, "atom"
        if regime is None:
            regime, s_opt, a_frac = pr.regime, pr.s_opt, pr.a
    ht = heavy_traffic(model)
    return DecayReport(gamma_w=gw, gamma_p=gp, gamma_w2=gw2, gamma_v=gv,
                       regime=regime, s_opt=s_opt, a=a_frac, K=ht.K,
                       rho=model.rho, q=q, x_b=x_b, case=case)


def model_to_json(model: QueueModel) -> dict:
    if model.split is not None:
        return {"arrival": to_json(model.arrival),
                "split": {"p": model.split.p,
                          "class1": to_json(model.split.class1),
                          "class2": to_json(model.split.class2)}}
    return {"arrival": to_json(model.arrival),
            "service": to_json(model.service)}


def model_from_json(obj: dict) -> QueueModel:
    """Parse {"arrival": DIST, "service": DIST} or
    {"arrival": DIST, "split": {"p", "class1", "class2"}}."""
    if not isinstance(obj, dict) or "arrival" not in obj:
        raise ValueError("model JSON needs an 'arrival' law")
    arrival = from_json(obj["arrival"])
    if obj.get("split") is not None:
        sp = obj["split"]
        split = Split(float(sp["p"]), from_json(sp["class1"]),
                      from_json(sp["class2"]))
        return QueueModel(arrival, split=split)
    if "service" not in obj:
        raise ValueError("model JSON needs a 'service' law or a 'split'")
    return QueueModel(arrival, from_json(obj["service"]))
