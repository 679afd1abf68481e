"""
Forecast-driven greedy scheduling over a simulated server fleet.

A plan assigns forecast demand to servers in descending order of forecast
headroom (capacity minus forecast background workload), never beyond that
headroom. Evaluation routes the actual demand over the plan's allocations
and prices what happens:

- demand beyond the total allocation is unplaced: R per unit plus one SLA
  event (P) for the interval
- a server whose routed demand plus actual workload exceeds its capacity
  records one SLA event (P) plus R per unit of excess
- allocation beyond actual demand is idle provisioning: C per unit
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from hrs.data import Series, SynthConfig, synth_generate
from hrs.errors import ConfigError, DataError, ShapeError
from hrs.loss import SalParams

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScenarioConfig:
    servers: int = 10
    intervals: int = 720
    warmup: int = 168
    interval: int = 3600
    start: str = "2023-07-01"
    demand_base: float = 200.0
    workload_base: float = 50.0
    capacity_low: float = 1.0
    capacity_high: float = 2.0
    seed: int = 7

    def __post_init__(self):
        if self.servers < 1:
            raise ConfigError(f"SIM_SERVERS must be >= 1, got {self.servers}")
        if self.intervals < 1 or self.warmup < 0:
            raise ConfigError("SIM_INTERVALS must be >= 1 and SIM_WARMUP >= 0")
        if self.demand_base < 0 or self.workload_base < 0:
            raise ConfigError("SIM_DEMAND_BASE and SIM_WORKLOAD_BASE must be >= 0")
        if not 0 < self.capacity_low <= self.capacity_high:
            raise ConfigError(
                "need 0 < SIM_CAPACITY_LOW <= SIM_CAPACITY_HIGH, got "
                f"{self.capacity_low}, {self.capacity_high}"
            )


@dataclass(frozen=True)
class Server:
    id: str
    capacity: float
    workload: np.ndarray

    def __post_init__(self):
        workload = np.asarray(self.workload, dtype=np.float64)
        if not self.capacity > 0:
            raise DataError(
                f"server {self.id}: capacity must be > 0, got {self.capacity}"
            )
        if (workload < 0).any():
            raise DataError(f"server {self.id}: workload must be >= 0")
        object.__setattr__(self, "workload", workload)


@dataclass
class Fleet:
    """Servers with the full demand and workload series, simulated from `warmup` on."""

    servers: List[Server]
    demand: Series
    workloads: List[Series]
    warmup: int

    @property
    def intervals(self) -> int:
        return len(self.demand) - self.warmup

    @property
    def actual_demand(self) -> np.ndarray:
        return self.demand.values[self.warmup :]

    @property
    def actual_workloads(self) -> np.ndarray:
        return np.stack([s.workload for s in self.servers])

    @property
    def times(self) -> np.ndarray:
        return self.demand.times[self.warmup :]


@dataclass
class AllocationPlan:
    servers: List[Server]
    allocations: np.ndarray
    unplaced: np.ndarray
    order: np.ndarray
    clamped: int = 0

    @property
    def intervals(self) -> int:
        return self.allocations.shape[0]

    def assignments(self, t: int) -> Dict[str, float]:
        return {
            self.servers[s].id: float(self.allocations[t, s])
            for s in self.order[t]
            if self.allocations[t, s] > 0
        }


@dataclass
class ScheduleOutcome:
    allocations: np.ndarray
    routed: np.ndarray
    demand: np.ndarray
    served: np.ndarray
    unserved: np.ndarray
    sla_events: np.ndarray
    under_losses: np.ndarray
    over_losses: np.ndarray

    @property
    def under_loss(self) -> float:
        return float(self.under_losses.sum())

    @property
    def over_loss(self) -> float:
        return float(self.over_losses.sum())

    @property
    def total_loss(self) -> float:
        return self.under_loss + self.over_loss

    @property
    def sla_event_count(self) -> int:
        return int(self.sla_events.sum())

    def summary(self, **labels) -> dict:
        return {
            **labels,
            "intervals": int(self.demand.shape[0]),
            "demand": float(self.demand.sum()),
            "served": float(self.served.sum()),
            "unserved": float(self.unserved.sum()),
            "sla_events": self.sla_event_count,
            "under_loss": self.under_loss,
            "over_loss": self.over_loss,
            "total_loss": self.total_loss,
        }


def _clamp(values: np.ndarray, what: str) -> Tuple[np.ndarray, int]:
    negative = int(np.count_nonzero(values < 0))
    if negative:
        logger.warning(f"Clamped {negative} negative {what} forecasts to 0")
    return np.maximum(values, 0.0), negative


def greedy_schedule(
    demand_forecast, workload_forecasts, servers: Sequence[Server]
) -> AllocationPlan:
    if not servers:
        raise DataError("scheduling needs at least one server")
    demand = np.asarray(demand_forecast, dtype=np.float64).reshape(-1)
    workloads = np.asarray(workload_forecasts, dtype=np.float64)
    if workloads.shape != (len(servers), demand.shape[0]):
        raise ShapeError(
            f"workload forecasts have shape {workloads.shape}, expected "
            f"{(len(servers), demand.shape[0])}"
        )
    demand, clamped_demand = _clamp(demand, "demand")
    workloads, clamped_workload = _clamp(workloads, "workload")

    capacity = np.array([s.capacity for s in servers])
    headroom = np.maximum(capacity[None, :] - workloads.T, 0.0)
    order = np.argsort(-headroom, axis=1, kind="stable")
    allocations = np.zeros_like(headroom)
    unplaced = np.zeros(demand.shape[0])
    for t in range(demand.shape[0]):
        remaining = demand[t]
        for s in order[t]:
            if remaining <= 0:
                break
            take = min(headroom[t, s], remaining)
            allocations[t, s] = take
            remaining -= take
        unplaced[t] = max(remaining, 0.0)
    clamped = clamped_demand + clamped_workload
    return AllocationPlan(list(servers), allocations, unplaced, order, clamped)


def evaluate_plan(
    plan: AllocationPlan, actual_demand, actual_workloads, sp: SalParams
) -> ScheduleOutcome:
    demand = np.asarray(actual_demand, dtype=np.float64).reshape(-1)
    workloads = np.asarray(actual_workloads, dtype=np.float64)
    if demand.shape[0] != plan.intervals:
        raise DataError(
            f"plan covers {plan.intervals} intervals, actual demand {demand.shape[0]}"
        )
    if workloads.shape != plan.allocations.shape[::-1]:
        raise DataError(
            f"actual workloads have shape {workloads.shape}, expected "
            f"{plan.allocations.shape[::-1]}"
        )

    capacity = np.array([s.capacity for s in plan.servers])
    n_t = plan.intervals
    routed = np.zeros_like(plan.allocations)
    served, unserved = np.zeros(n_t), np.zeros(n_t)
    events = np.zeros(n_t, dtype=np.int64)
    under, over = np.zeros(n_t), np.zeros(n_t)

    for t in range(n_t):
        remaining = demand[t]
        for s in plan.order[t]:
            take = min(plan.allocations[t, s], remaining)
            routed[t, s] = take
            remaining -= take
        unplaced = max(remaining, 0.0)
        if unplaced > 0:
            events[t] += 1
            under[t] += sp.revenue * unplaced + sp.penalty
        idle = (plan.allocations[t] - routed[t]).sum()
        if idle > 0:
            over[t] += sp.cost * idle

        spare = capacity - workloads[:, t]
        excess = np.clip(routed[t] - spare, 0.0, routed[t])
        breached = int(np.count_nonzero(excess > 0))
        events[t] += breached
        under[t] += breached * sp.penalty + sp.revenue * excess.sum()
        unserved[t] = unplaced + excess.sum()
        served[t] = demand[t] - unserved[t]

    return ScheduleOutcome(
        plan.allocations, routed, demand, served, unserved, events, under, over
    )


def synth_fleet_workloads(scenario: ScenarioConfig) -> Tuple[Series, List[Series]]:
    """Seeded demand series plus one background workload series per server."""
    length = scenario.warmup + scenario.intervals

    def shaped(base: float, seed: int, name: str) -> Series:
        cfg = SynthConfig(
            length=length,
            interval=scenario.interval,
            start=scenario.start,
            base=base,
            daily_amplitude=0.4 * base,
            weekly_amplitude=0.15 * base,
            burst_scale=0.6 * base,
            noise_std=0.05 * base,
            seed=seed,
        )
        return synth_generate(cfg, name)

    demand = shaped(scenario.demand_base, scenario.seed, "demand")
    workloads = [
        shaped(scenario.workload_base, scenario.seed + 1 + i, f"server_{i}")
        for i in range(scenario.servers)
    ]
    return demand, workloads


def build_fleet(
    scenario: ScenarioConfig, rng: Optional[np.random.Generator] = None
) -> Fleet:
    """
    Capacities are drawn once: each server covers its own peak workload plus
    a uniform share in [capacity_low, capacity_high] of peak demand / servers,
    so perfect forecasts always fit.
    """
    rng = rng if rng is not None else np.random.default_rng(scenario.seed)
    demand, workloads = synth_fleet_workloads(scenario)
    span = slice(scenario.warmup, None)
    share = demand.values[span].max() / scenario.servers
    factors = rng.uniform(
        scenario.capacity_low, scenario.capacity_high, size=scenario.servers
    )
    servers = [
        Server(
            id=w.name,
            capacity=float(w.values[span].max() + factor * share) or 1.0,
            workload=w.values[span],
        )
        for w, factor in zip(workloads, factors)
    ]
    logger.info(
        f"Built fleet of {len(servers)} servers over {scenario.intervals} intervals, "
        f"total capacity {sum(s.capacity for s in servers):.1f}"
    )
    return Fleet(servers, demand, workloads, scenario.warmup)


def simulate(
    fleet: Fleet, demand_forecast, workload_forecasts, sp: SalParams
) -> ScheduleOutcome:
    plan = greedy_schedule(demand_forecast, workload_forecasts, fleet.servers)
    return evaluate_plan(plan, fleet.actual_demand, fleet.actual_workloads, sp)


def outcome_records(
    outcome: ScheduleOutcome, servers: Sequence[Server], times=None, **labels
) -> List[dict]:
    records = []
    for t in range(outcome.demand.shape[0]):
        record = {
            **labels,
            "interval": t,
            "demand": float(outcome.demand[t]),
            "allocated": float(outcome.allocations[t].sum()),
            "served": float(outcome.served[t]),
            "unserved": float(outcome.unserved[t]),
            "sla_events": int(outcome.sla_events[t]),
            "under_loss": float(outcome.under_losses[t]),
            "over_loss": float(outcome.over_losses[t]),
            "allocations": {
                s.id: float(outcome.allocations[t, i]) for i, s in enumerate(servers)
            },
        }
        if times is not None:
            record["timestamp"] = int(times[t])
        records.append(record)
    return records

