"""Discrete-event simulation of the hybrid cloud market.

Spot side: ``k`` parallel single-server queues, each arrival routed uniformly
at random, preemptive-resume priority by bid (first-price: a job pays its bid).
PAYG side: infinitely many servers. Jobs pick a channel with the equilibrium
participation rule for the cutoffs they are given.

The engine keeps one future-event list ordered by ``(time, sequence)``.
Preemption bumps the queue's token so the pending completion of the
preempted job goes stale, and stores the job's remaining work.
"""
from __future__ import annotations

import csv
import heapq
import io
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .equilibrium import payment_curve
from .model import CutoffVector, MarketParams, Unstable
from .waiting import DEFAULT_MODEL, STAB_EPS, WaitingTimeModel, spot_load

UnstableConfig = Unstable

BALK, PAYG, SPOT = 0, 1, 2
CHANNEL_NAMES = {BALK: "Balk", PAYG: "Payg", SPOT: "Spot"}

_ARRIVAL, _SPOT_DONE, _PAYG_DONE = 0, 1, 2


@dataclass(frozen=True)
class SpotOnly:
    pass


@dataclass(frozen=True)
class Hybrid:
    price: float


@dataclass(frozen=True)
class PaygOnly:
    price: float


SimRegime = Union[SpotOnly, Hybrid, PaygOnly]


@dataclass
class Job:
    id: int
    class_index: int
    cost: float
    arrival_time: float
    channel: str
    service_requirement: float
    bid: Optional[float] = None
    queue_index: Optional[int] = None
    completion_time: Optional[float] = None


@dataclass
class JobTable:
    """Column store of the jobs fed to the engine (arrival-time order)."""

    arrival: np.ndarray
    class_index: np.ndarray
    cost: np.ndarray
    channel: np.ndarray
    bid: np.ndarray
    queue: np.ndarray
    service: np.ndarray
    completion: np.ndarray = None

    def __post_init__(self):
        if self.completion is None:
            self.completion = np.full(len(self.arrival), np.nan)

    def __len__(self):
        return len(self.arrival)

    def job(self, j: int) -> Job:
        ch = int(self.channel[j])
        done = self.completion[j]
        return Job(j, int(self.class_index[j]), float(self.cost[j]), float(self.arrival[j]), CHANNEL_NAMES[ch],
                   float(self.service[j]), float(self.bid[j]) if ch == SPOT else None,
                   int(self.queue[j]) if ch == SPOT else None, None if np.isnan(done) else float(done))


@dataclass
class SimStats:
    horizon: float
    warmup: float
    bucket_edges: np.ndarray
    bucket_counts: np.ndarray
    bucket_mean: np.ndarray
    bucket_stderr: np.ndarray
    spot_revenue_rate: float
    payg_revenue_rate: float
    spot_revenue_se: float
    payg_revenue_se: float
    counts: dict
    busy_time: np.ndarray
    served_work: np.ndarray
    price: Optional[float] = None
    priority_checks: int = 0
    jobs: Optional[JobTable] = field(default=None, repr=False)
    # batch-means SE of the combined rate; batches share time windows so the
    # two channels are not treated as independent
    total_revenue_se: float = float("nan")

    @property
    def bucket_centers(self) -> np.ndarray:
        return 0.5 * (self.bucket_edges[:-1] + self.bucket_edges[1:])


def channel_rule(regime: SimRegime, cutoffs: CutoffVector, params: MarketParams):
    """Return ``(spot_below, payg_top)`` per class: a class-``i`` job with cost
    ``c`` bids in the spot market iff ``c < spot_below[i]``, otherwise uses PAYG
    iff ``c <= payg_top[i]``, otherwise balks."""
    if isinstance(regime, SpotOnly):
        return (cutoffs.c1, cutoffs.c2), (-np.inf, -np.inf)
    p = regime.price
    tops = (params.upper(1) - p, params.upper(2) - p)
    if isinstance(regime, PaygOnly):
        return (0.0, 0.0), tops
    return (cutoffs.c1, cutoffs.c2), tops


def draw_jobs(params: MarketParams, regime: SimRegime, cutoffs: CutoffVector, horizon: float,
              rng: np.random.Generator, model: WaitingTimeModel = DEFAULT_MODEL, bid_grid: int = 32769) -> JobTable:
    """Poisson arrivals on ``[0, horizon)`` with classes, costs, channels, bids and service needs."""
    lam1, lam2 = params.class1.arrival_rate, params.class2.arrival_rate
    lam = lam1 + lam2
    n = int(rng.poisson(lam * horizon))
    arrival = np.sort(rng.uniform(0.0, horizon, n))
    cls = np.where(rng.uniform(size=n) < lam1 / lam, 1, 2)
    cost = np.empty(n)
    for i, cl in enumerate(params.classes, start=1):
        mask = cls == i
        cost[mask] = cl.cost_dist.sample(rng, int(mask.sum()))
    queue = rng.integers(0, params.num_servers, n)
    service = rng.exponential(1.0 / params.service_rate, n)

    spot_below, payg_top = channel_rule(regime, cutoffs, params)
    below = np.where(cls == 1, spot_below[0], spot_below[1])
    top = np.where(cls == 1, payg_top[0], payg_top[1])
    channel = np.where(cost < below, SPOT, np.where(cost <= top, PAYG, BALK))

    bid = np.zeros(n)
    spot = channel == SPOT
    if spot.any():
        # payments are exact on the grid and smooth between grid points once
        # the cutoffs (where the payment's curvature jumps) are grid points
        grid = np.union1d(np.linspace(0.0, cutoffs.hi, bid_grid), [c for c in cutoffs if c > 0.0])
        bid[spot] = np.interp(cost[spot], grid, payment_curve(grid, cutoffs, params, model))
    return JobTable(arrival, cls, cost, channel, bid, queue, service)


def run_engine(jobs: JobTable, num_servers: int, horizon: float, debug: bool = False) -> dict:
    """Process every event up to ``horizon``; fills ``jobs.completion`` in place."""
    # plain lists: scalar indexing into numpy arrays dominates the loop otherwise
    arrival, channel, bid = jobs.arrival.tolist(), jobs.channel.tolist(), jobs.bid.tolist()
    queue, service = jobs.queue.tolist(), jobs.service.tolist()
    completion = jobs.completion.tolist()
    n = len(jobs)
    remaining = list(service)
    serving = [-1] * num_servers
    started = [0.0] * num_servers
    token = [0] * num_servers
    waiting = [[] for _ in range(num_servers)]
    busy = [0.0] * num_servers
    payg_active = set()
    checks = 0

    events = []
    seq = 0
    if n:
        heapq.heappush(events, (arrival[0], seq, _ARRIVAL, 0, 0))
        seq += 1

    def start(q, j, now):
        nonlocal seq, checks
        if debug:
            # the job put into service must carry the largest bid in its queue
            if waiting[q] and -waiting[q][0][0] > bid[j]:
                raise AssertionError(f"priority violated in queue {q} at t={now}")
            checks += 1
        serving[q] = j
        started[q] = now
        token[q] += 1
        heapq.heappush(events, (now + remaining[j], seq, _SPOT_DONE, q, token[q]))
        seq += 1

    while events:
        now, _, kind, a, b = heapq.heappop(events)
        if now > horizon:
            break
        if kind == _ARRIVAL:
            j = a
            if j + 1 < n:
                heapq.heappush(events, (arrival[j + 1], seq, _ARRIVAL, j + 1, 0))
                seq += 1
            ch = channel[j]
            if ch == SPOT:
                q = queue[j]
                s = serving[q]
                if s < 0:
                    start(q, j, now)
                elif bid[j] > bid[s]:
                    elapsed = now - started[q]
                    busy[q] += elapsed
                    remaining[s] = max(remaining[s] - elapsed, 0.0)
                    heapq.heappush(waiting[q], (-bid[s], s))
                    start(q, j, now)
                else:
                    heapq.heappush(waiting[q], (-bid[j], j))
            elif ch == PAYG:
                payg_active.add(j)
                heapq.heappush(events, (now + service[j], seq, _PAYG_DONE, j, 0))
                seq += 1
        elif kind == _SPOT_DONE:
            q, tok = a, b
            if tok != token[q]:
                continue
            j = serving[q]
            elapsed = now - started[q]
            busy[q] += elapsed
            remaining[j] = 0.0
            completion[j] = now
            serving[q] = -1
            if waiting[q]:
                _, nxt = heapq.heappop(waiting[q])
                start(q, nxt, now)
        else:
            payg_active.discard(a)
            completion[a] = now

    # close the books at the horizon: partial service of jobs still in service
    for q in range(num_servers):
        if serving[q] >= 0:
            elapsed = horizon - started[q]
            busy[q] += elapsed
            remaining[serving[q]] -= elapsed
    jobs.completion[:] = completion
    remaining = np.array(remaining)
    queue, service, channel = jobs.queue, jobs.service, jobs.channel
    in_queue = sum(len(w) for w in waiting) + sum(s >= 0 for s in serving)
    spot = channel == SPOT
    # work delivered per queue, reconstructed from each job's leftover requirement
    served = np.bincount(queue[spot], weights=(service - remaining)[spot], minlength=num_servers)
    return {
        "busy_time": np.array(busy),
        "served_work": served,
        "remaining": remaining,
        "in_system_spot": in_queue,
        "in_system_payg": len(payg_active),
        "priority_checks": checks,
    }


def _batch_se(values_per_batch: np.ndarray, batch_len: float) -> float:
    rates = values_per_batch / batch_len
    if len(rates) < 2:
        return float("nan")
    return float(np.std(rates, ddof=1) / np.sqrt(len(rates)))


def simulate(params: MarketParams, regime: SimRegime, cutoffs: CutoffVector, horizon: float,
             warmup: Optional[float] = None, seed: int = 0, n_buckets: int = 20, n_batches: int = 50,
             model: WaitingTimeModel = DEFAULT_MODEL, debug: bool = False, keep_jobs: bool = False,
             jobs: Optional[JobTable] = None) -> SimStats:
    """Run one replication and summarise it.

    Statistics cover ``[warmup, horizon]`` (warmup defaults to 10% of the
    horizon). Sojourn times are bucketed by cost over ``[0, max cutoff]`` for
    spot jobs that arrive after warmup and finish by the horizon. Revenue
    standard errors use batch means over ``n_batches`` equal windows.
    ``jobs`` replaces the random arrival stream (for scripted scenarios).
    """
    if warmup is None:
        warmup = 0.1 * horizon
    if not (horizon > warmup >= 0):
        raise ValueError("need horizon > warmup >= 0")
    if isinstance(regime, PaygOnly):
        cutoffs = CutoffVector(0.0, 0.0)
    load = spot_load(cutoffs.c1, cutoffs.c2, params)
    if load >= 1.0 - STAB_EPS:
        raise UnstableConfig(f"spot load {load:.6g} at cutoffs is not below 1")
    if jobs is None:
        jobs = draw_jobs(params, regime, cutoffs, horizon, np.random.default_rng(seed), model)
    info = run_engine(jobs, params.num_servers, horizon, debug)

    window = horizon - warmup
    batch_edges = np.linspace(warmup, horizon, n_batches + 1)
    batch_len = window / n_batches
    done = ~np.isnan(jobs.completion)
    is_spot = jobs.channel == SPOT
    is_payg = jobs.channel == PAYG

    # spot revenue: bids collected from completions inside the window
    paid = is_spot & done & (jobs.completion >= warmup)
    spot_batches = np.histogram(jobs.completion[paid], bins=batch_edges, weights=jobs.bid[paid])[0]
    spot_rate = float(jobs.bid[paid].sum() / window)

    # PAYG revenue: price times PAYG busy time inside the window
    price = getattr(regime, "price", None)
    payg_rate, payg_batches = 0.0, np.zeros(n_batches)
    if price is not None and is_payg.any():
        s = jobs.arrival[is_payg]
        e = s + jobs.service[is_payg]
        for b in range(n_batches):
            lo, hi = batch_edges[b], batch_edges[b + 1]
            payg_batches[b] = np.clip(np.minimum(e, hi) - np.maximum(s, lo), 0.0, None).sum()
        payg_batches *= price
        payg_rate = float(payg_batches.sum() / window)

    edges = np.linspace(0.0, cutoffs.hi, n_buckets + 1) if cutoffs.hi > 0 else np.zeros(1)
    counts = np.zeros(max(len(edges) - 1, 0), dtype=int)
    means = np.full(len(counts), np.nan)
    ses = np.full(len(counts), np.nan)
    obs = is_spot & done & (jobs.arrival >= warmup)
    if len(counts):
        soj = jobs.completion[obs] - jobs.arrival[obs]
        idx = np.clip(np.searchsorted(edges, jobs.cost[obs], side="right") - 1, 0, len(counts) - 1)
        counts = np.bincount(idx, minlength=len(counts))
        sums = np.bincount(idx, weights=soj, minlength=len(counts))
        sq = np.bincount(idx, weights=soj * soj, minlength=len(counts))
        with np.errstate(invalid="ignore", divide="ignore"):
            means = sums / counts
            var = (sq - counts * means ** 2) / (counts - 1)
            ses = np.sqrt(np.maximum(var, 0.0) / counts)

    n = len(jobs)
    n_done = int(done.sum())
    tally = {
        "arrivals": n,
        "spot": int(is_spot.sum()),
        "payg": int(is_payg.sum()),
        "balk": int((jobs.channel == BALK).sum()),
        "completed_spot": int((is_spot & done).sum()),
        "completed_payg": int((is_payg & done).sum()),
        "completed": n_done,
        "in_system": info["in_system_spot"] + info["in_system_payg"],
    }
    return SimStats(horizon, warmup, edges, counts, means, ses, spot_rate, payg_rate,
                    _batch_se(spot_batches, batch_len), _batch_se(payg_batches, batch_len) if price else 0.0,
                    tally, info["busy_time"], info["served_work"], price, info["priority_checks"],
                    jobs if keep_jobs else None, _batch_se(spot_batches + payg_batches, batch_len))


@dataclass(frozen=True)
class WaitingCurveReport:
    centers: np.ndarray
    counts: np.ndarray
    predicted: np.ndarray
    measured: np.ndarray
    rel_error: np.ndarray          # nan where the bucket was excluded
    insufficient: tuple            # bucket indices below the sample threshold
    max_rel_error: float
    mean_rel_error: float


def compare_waiting_curve(stats: SimStats, cutoffs: CutoffVector, params: MarketParams,
                          model: WaitingTimeModel = DEFAULT_MODEL, min_samples: int = 500,
                          waiting: Optional[Callable] = None) -> WaitingCurveReport:
    """Relative error of bucket-mean sojourn against the waiting-time formula at bucket centres.

    ``waiting(c_array)`` overrides the formula being checked.
    """
    centers = stats.bucket_centers
    if waiting is None:
        waiting = lambda c: model.wait(c, cutoffs.c1, cutoffs.c2, params)
    predicted = waiting(centers) if len(centers) else np.empty(0)
    ok = stats.bucket_counts >= min_samples
    rel = np.full(len(centers), np.nan)
    rel[ok] = np.abs(stats.bucket_mean[ok] - predicted[ok]) / predicted[ok]
    insufficient = tuple(int(i) for i in np.flatnonzero(~ok))
    used = rel[ok]
    return WaitingCurveReport(centers, stats.bucket_counts, predicted, stats.bucket_mean, rel, insufficient,
                              float(used.max()) if used.size else float("nan"),
                              float(used.mean()) if used.size else float("nan"))


def measured_revenue(stats: SimStats) -> tuple[float, float]:
    return stats.spot_revenue_rate, stats.payg_revenue_rate


SIM_COLUMNS = ("kind", "bucket", "cost_lo", "cost_hi", "count", "mean_sojourn", "stderr_sojourn", "horizon",
               "warmup", "price", "spot_revenue_rate", "spot_revenue_se", "payg_revenue_rate", "payg_revenue_se",
               "total_revenue_se", "n_arrivals", "n_spot", "n_payg", "n_balk")


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return "" if np.isnan(x) else repr(float(x))
    return str(x)


def write_sim_csv(stats: SimStats, fh=None) -> str:
    """One ``bucket`` row per cost bucket, then one ``summary`` row."""
    buf = fh if fh is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SIM_COLUMNS)
    blank = [""] * (len(SIM_COLUMNS) - 7)
    for b in range(len(stats.bucket_counts)):
        w.writerow(["bucket", b, _fmt(stats.bucket_edges[b]), _fmt(stats.bucket_edges[b + 1]),
                    int(stats.bucket_counts[b]), _fmt(stats.bucket_mean[b]), _fmt(stats.bucket_stderr[b])] + blank)
    c = stats.counts
    w.writerow(["summary", "", "", "", "", "", "", _fmt(stats.horizon), _fmt(stats.warmup), _fmt(stats.price),
                _fmt(stats.spot_revenue_rate), _fmt(stats.spot_revenue_se), _fmt(stats.payg_revenue_rate),
                _fmt(stats.payg_revenue_se), _fmt(stats.total_revenue_se), c["arrivals"], c["spot"], c["payg"], c["balk"]])
    return buf.getvalue() if fh is None else ""
