"""Event-driven single-server queue simulator.

Six work-conserving disciplines run on identical sampled streams so
coupled runs are comparable path by path: first-come-first-served,
preemptive last-come-first-served, shortest-remaining-processing-time
(preemptive and non-preemptive), and two-class priority (preemptive and
non-preemptive).

Clock arithmetic inside a busy period uses compensated double-double
sums anchored at exact arrival epochs, so event times agree bitwise
across disciplines whenever the dynamics say they must (the error of a
recorded time is ~2^-105 before the final rounding, far below the
spacing of float64).  Workload at arrival and busy periods come from
the canonical recursion on the shared streams, which makes them
discipline-independent by construction.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from heapq import heappop, heappush
from typing import Iterator, List, Optional, Tuple

import numpy as np

from .dist import sample_array, stream
from .ratecalc import NumericalFailure, QueueModel


class Discipline(Enum):
    FIFO = "fifo"
    LIFO_PR = "lifo-pr"
    SRPT_PR = "srpt-pr"
    SRPT_NP = "srpt-np"
    PRIO_PR = "prio-pr"
    PRIO_NP = "prio-np"


@dataclass(frozen=True)
class CustomerRecord:
    index: int
    arrival_time: float
    service_time: float
    customer_class: int          # 0 when the model has no split
    first_service_start: float
    departure_time: float
    workload_at_arrival: float


@dataclass
class SimOutput:
    """Full per-customer arrays (length n); analysis accessors return the
    post-warmup slice.  Busy periods always come from the full stream."""

    discipline: Discipline
    warmup: int
    arrival_time: np.ndarray
    service_time: np.ndarray
    customer_class: np.ndarray
    first_service_start: np.ndarray
    departure_time: np.ndarray
    workload_at_arrival: np.ndarray
    busy_starts: np.ndarray
    busy_durations: np.ndarray

    @property
    def n(self) -> int:
        return len(self.arrival_time)

    @property
    def served(self) -> int:
        return self.n

    @property
    def total_time(self) -> float:
        return float(self.departure_time.max())

    def kept(self) -> slice:
        return slice(self.warmup, self.n)

    def waiting(self) -> np.ndarray:
        k = self.kept()
        return self.first_service_start[k] - self.arrival_time[k]

    def sojourn(self) -> np.ndarray:
        k = self.kept()
        return self.departure_time[k] - self.arrival_time[k]

    def records(self) -> Iterator[CustomerRecord]:
        for i in range(self.warmup, self.n):
            yield CustomerRecord(
                i, float(self.arrival_time[i]), float(self.service_time[i]),
                int(self.customer_class[i]), float(self.first_service_start[i]),
                float(self.departure_time[i]), float(self.workload_at_arrival[i]))


def lindley_workload(interarrivals: np.ndarray, services: np.ndarray) -> np.ndarray:
    """Workload found by each arrival: W_1 = 0 and
    W_{k+1} = max(W_k + B_k - A_{k+1}, 0)."""
    if len(interarrivals) != len(services):
        raise ValueError("sequences must have equal length")
    a = np.asarray(interarrivals, dtype=np.float64).tolist()
    b = np.asarray(services, dtype=np.float64).tolist()
    n = len(a)
    out = [0.0] * n
    w = 0.0
    for k in range(n - 1):
        w = w + b[k] - a[k + 1]
        if w < 0.0:
            w = 0.0
        out[k + 1] = w
    return np.asarray(out)


def _busy_spans(arrival, service, workload) -> Tuple[np.ndarray, np.ndarray]:
    # group starts where workload hits exactly 0; each span drains at
    # arrival[m] + workload[m] + service[m] for its last member m
    idx = np.flatnonzero(workload == 0.0)
    nxt = np.append(idx[1:], len(workload))
    last = nxt - 1
    end = arrival[last] + (workload[last] + service[last])
    starts = arrival[idx]
    return starts, end - starts


def busy_periods(out: SimOutput) -> np.ndarray:
    """Durations of maximal intervals with positive unfinished work,
    recomputed from the retained streams (identical across disciplines)."""
    return _busy_spans(out.arrival_time, out.service_time,
                       out.workload_at_arrival)[1]


def _two_sum(a: float, b: float) -> Tuple[float, float]:
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _two_diff(a: float, b: float) -> Tuple[float, float]:
    s = a - b
    bb = s - a
    return s, (a - (s - bb)) - (b + bb)


def _dd_start(t: float, rh: float, rl: float) -> Tuple[float, float]:
    # completion time of a job with remaining (rh, rl) starting at float t
    s, e = _two_sum(t, rh)
    lo = rl + e
    hi = s + lo
    return hi, lo - (hi - s)


def _dd_chain(ch: float, cl: float, rh: float, rl: float) -> Tuple[float, float]:
    # completion time when starting at the double-double instant (ch, cl)
    s, e = _two_sum(ch, rh)
    lo = cl + rl + e
    hi = s + lo
    return hi, lo - (hi - s)


def _dd_remaining(ch: float, cl: float, t: float) -> Tuple[float, float]:
    # remaining work of the active job at the exact arrival epoch t
    s, e = _two_diff(ch, t)
    lo = cl + e
    hi = s + lo
    return hi, lo - (hi - s)


def run(model: QueueModel, discipline: Discipline, n: int, seed: int,
        warmup_fraction: float = 0.2) -> SimOutput:
    """Simulate n arrivals under one discipline.

    Streams are fixed by the seed alone: substream 0 inter-arrivals,
    substream 1 class marks (split models), substream 2 services (split
    models draw the class-1 block first, then the class-2 block), so
    every discipline consumes identical randomness.  Simultaneous
    completion and arrival resolve completion-first.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0.0 <= warmup_fraction < 1.0:
        raise ValueError("warmup_fraction must lie in [0, 1)")
    if not isinstance(discipline, Discipline):
        discipline = Discipline(discipline)
    if discipline in (Discipline.PRIO_PR, Discipline.PRIO_NP) and model.split is None:
        raise ValueError("priority disciplines need a two-class split")

    interarrival = sample_array(model.arrival, stream(seed, 0), n)
    arrival = np.cumsum(interarrival)
    if model.split is not None:
        marks = stream(seed, 1).random(n)
        cls = np.where(marks < model.split.p, 1, 2).astype(np.int8)
        svc_rng = stream(seed, 2)
        service = np.empty(n, dtype=np.float64)
        one = cls == 1
        count1 = int(one.sum())
        service[one] = sample_array(model.split.class1, svc_rng, count1)
        service[~one] = sample_array(model.split.class2, svc_rng, n - count1)
    else:
        cls = np.zeros(n, dtype=np.int8)
        service = sample_array(model.service, stream(seed, 2), n)

    workload = lindley_workload(interarrival, service)
    first, depart = _simulate(discipline, arrival, service, cls)
    busy_starts, busy_durations = _busy_spans(arrival, service, workload)
    return SimOutput(
        discipline=discipline, warmup=int(warmup_fraction * n),
        arrival_time=arrival, service_time=service, customer_class=cls,
        first_service_start=first, departure_time=depart,
        workload_at_arrival=workload,
        busy_starts=busy_starts, busy_durations=busy_durations)


def _simulate(discipline, arrival, service, cls):
    n = len(arrival)
    t_arr: List[float] = arrival.tolist()
    svc: List[float] = service.tolist()
    klass: List[int] = cls.tolist()
    first = [math.nan] * n
    depart = [math.nan] * n

    fifo = discipline is Discipline.FIFO
    lifo = discipline is Discipline.LIFO_PR
    srpt_pr = discipline is Discipline.SRPT_PR
    srpt_np = discipline is Discipline.SRPT_NP
    prio_pr = discipline is Discipline.PRIO_PR
    srpt = srpt_pr or srpt_np
    prio = prio_pr or discipline is Discipline.PRIO_NP

    queue = deque()            # FIFO: customer ids
    stack = []                 # LIFO_PR: (cust, rem_hi, rem_lo)
    heap = []                  # SRPT: (rem_hi, rem_lo, cust)
    q1 = deque()               # PRIO: (cust, rem_hi, rem_lo)
    q2 = deque()

    active = -1
    comp_hi = comp_lo = 0.0
    served = 0
    i = 0
    while served < n:
        if active >= 0 and (i >= n or comp_hi < t_arr[i]
                            or (comp_hi == t_arr[i] and comp_lo <= 0.0)):
            now = comp_hi + comp_lo
            depart[active] = now
            served += 1
            # select the next job
            if fifo:
                if queue:
                    cust = queue.popleft()
                    rh, rl = svc[cust], 0.0
                else:
                    active = -1
                    continue
            elif lifo:
                if stack:
                    cust, rh, rl = stack.pop()
                else:
                    active = -1
                    continue
            elif srpt:
                if heap:
                    rh, rl, cust = heappop(heap)
                else:
                    active = -1
                    continue
            else:
                if q1:
                    cust, rh, rl = q1.popleft()
                elif q2:
                    cust, rh, rl = q2.popleft()
                else:
                    active = -1
                    continue
            if first[cust] != first[cust]:
                first[cust] = now
            comp_hi, comp_lo = _dd_chain(comp_hi, comp_lo, rh, rl)
            active = cust
        else:
            t = t_arr[i]
            b = svc[i]
            if active < 0:
                first[i] = t
                comp_hi, comp_lo = _dd_start(t, b, 0.0)
                active = i
            elif fifo:
                queue.append(i)
            elif lifo:
                rh, rl = _dd_remaining(comp_hi, comp_lo, t)
                stack.append((active, rh, rl))
                first[i] = t
                comp_hi, comp_lo = _dd_start(t, b, 0.0)
                active = i
            elif srpt_pr:
                rh, rl = _dd_remaining(comp_hi, comp_lo, t)
                if b < rh or (b == rh and rl > 0.0):
                    heappush(heap, (rh, rl, active))
                    first[i] = t
                    comp_hi, comp_lo = _dd_start(t, b, 0.0)
                    active = i
                else:
                    heappush(heap, (b, 0.0, i))
            elif srpt_np:
                heappush(heap, (b, 0.0, i))
            elif prio:
                c = klass[i]
                if prio_pr and c == 1 and klass[active] == 2:
                    rh, rl = _dd_remaining(comp_hi, comp_lo, t)
                    q2.appendleft((active, rh, rl))
                    first[i] = t
                    comp_hi, comp_lo = _dd_start(t, b, 0.0)
                    active = i
                elif c == 1:
                    q1.append((i, b, 0.0))
                else:
                    q2.append((i, b, 0.0))
            i += 1
    return np.asarray(first), np.asarray(depart)


def empirical_psi(model: QueueModel, s: float, horizon: float,
                  replications: int, seed: int) -> float:
    """(1/t) log of the replication average of exp(s X(t)), where X(t) is
    the total work arriving in [0, t].  Finite-horizon, finite-sample
    estimate of the input rate function psi."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if replications < 1:
        raise ValueError("need at least one replication")
    terms = []
    for rep in range(replications):
        rng = stream(seed, rep)
        work = _arrived_work(model, rng, horizon)
        try:
            terms.append(math.exp(s * work))
        except OverflowError as exc:
            raise NumericalFailure(
                f"exp({s} * {work}) exceeds the representable range") from exc
    mean = math.fsum(terms) / replications
    return math.log(mean) / horizon


def _arrived_work(model, rng, horizon) -> float:
    # arrivals in fixed chunks keeps the draw sequence a function of the
    # replication stream alone
    count = 0
    offset = 0.0
    while True:
        chunk = sample_array(model.arrival, rng, 1024)
        times = np.cumsum(chunk) + offset
        k = int(np.searchsorted(times, horizon, side="right"))
        count += k
        if k < 1024:
            break
        offset = float(times[-1])
    if count == 0:
        return 0.0
    return float(sample_array(model.service, rng, count).sum())


def service_bins(out: SimOutput, width: float):
    """Post-warmup records grouped by service-time bin of the given width;
    returns a list of (lo, hi, index-array into the post-warmup slice)."""
    if not width > 0:
        raise ValueError("width must be positive")
    svc = out.service_time[out.kept()]
    which = np.floor(svc / width).astype(np.int64)
    bins = []
    for j in np.unique(which):
        sel = np.flatnonzero(which == j)
        bins.append((float(j * width), float((j + 1) * width), sel))
    return bins


def write_records_csv(out: SimOutput, fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(["index", "arrival", "service", "class",
                     "first_service", "departure", "workload_at_arrival"])
    k = out.kept()
    cols = (out.arrival_time[k], out.service_time[k], out.customer_class[k],
            out.first_service_start[k], out.departure_time[k],
            out.workload_at_arrival[k])
    for row in zip(range(out.warmup, out.n), *cols):
        writer.writerow([row[0], repr(float(row[1])), repr(float(row[2])),
                         int(row[3]), repr(float(row[4])),
                         repr(float(row[5])), repr(float(row[6]))])


def records_to_csv(out: SimOutput, path: str) -> None:
    """Post-warmup records, one row per customer."""
    with open(path, "w", newline="") as fh:
        write_records_csv(out, fh)


def write_busy_csv(out: SimOutput, fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(["start", "duration"])
    for s, d in zip(out.busy_starts, out.busy_durations):
        writer.writerow([repr(float(s)), repr(float(d))])


def busy_to_csv(out: SimOutput, path: str) -> None:
    with open(path, "w", newline="") as fh:
        write_busy_csv(out, fh)
