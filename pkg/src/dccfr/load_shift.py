"""Flexible-workload queue: split, defer, execute under a capacity cap.

Amounts are tracked internally as integer multiples of 2^-30 utilization-
steps so that the conservation identity (cumulative arrived == cumulative
executed + queued) holds exactly, not just to float precision, under any
action sequence. Public accessors return floats; the quantization error on
any single arrival is below 1e-9.
"""

from collections import deque
from dataclasses import dataclass
from enum import IntEnum

from .errors import BadUtilization, ConfigInvalid

_SCALE = 1 << 30


def _to_units(amount: float) -> int:
    return int(round(amount * _SCALE))


def _to_float(units: int) -> float:
    return units / _SCALE


@dataclass(frozen=True)
class LsParams:
    flex_fraction: float = 0.10   # share of arriving work that is deferrable
    u_max: float = 0.95           # per-step utilization cap
    deadline_hours: float = 24.0  # latest completion after arrival
    w_pen: float = 0.1            # penalty weight per queued utilization-step

    def __post_init__(self):
        if not 0.0 <= self.flex_fraction < 1.0:
            raise ConfigInvalid("flex_fraction must be in [0, 1)")
        if not 0.0 < self.u_max <= 1.0:
            raise ConfigInvalid("u_max must be in (0, 1]")
        if self.deadline_hours <= 0:
            raise ConfigInvalid("deadline_hours must be positive")
        if self.w_pen < 0:
            raise ConfigInvalid("w_pen must be non-negative")


class LsAction(IntEnum):
    ASSIGN = 0
    IDLE = 1


@dataclass
class _Entry:
    units: int
    arrival_step: int
    deadline_step: int


class FlexQueue:
    """FIFO queue of outstanding flexible work with lifetime accounting."""

    def __init__(self):
        self._entries = deque()
        self._arrived_units = 0
        self._executed_units = 0

    @property
    def cum_arrived(self) -> float:
        return _to_float(self._arrived_units)

    @property
    def cum_executed(self) -> float:
        return _to_float(self._executed_units)

    @property
    def total_queued(self) -> float:
        return _to_float(self._queued_units())

    def _queued_units(self) -> int:
        return sum(e.units for e in self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self):
        """(amount, arrival_step, deadline_step) tuples in FIFO order."""
        return [(_to_float(e.units), e.arrival_step, e.deadline_step)
                for e in self._entries]

    def conservation_gap_units(self) -> int:
        """arrived - executed - queued in integer units; zero when exact."""
        return self._arrived_units - self._executed_units - self._queued_units()


def split_arrivals(u_raw: float, p: LsParams):
    """Split raw utilization into a base part and a deferrable arrival."""
    if not 0.0 <= u_raw <= 1.0:
        raise BadUtilization(f"utilization must be in [0, 1], got {u_raw}")
    return (1.0 - p.flex_fraction) * u_raw, p.flex_fraction * u_raw


def _drain(q: FlexQueue, budget_units: int, only_overdue: bool, now: int) -> int:
    executed = 0
    while q._entries and budget_units > 0:
        head = q._entries[0]
        if only_overdue and head.deadline_step > now:
            break
        take = min(head.units, budget_units)
        head.units -= take
        budget_units -= take
        executed += take
        if head.units == 0:
            q._entries.popleft()
    q._executed_units += executed
    return executed


def queue_step(q: FlexQueue, a: LsAction, base_u: float, flex_arrival: float,
               now: int, p: LsParams):
    """Advance the queue one step; mutates q and returns it.

    New arrivals are enqueued with a deadline `deadline_hours` ahead (at
    four steps per hour). Assign drains oldest-first up to the headroom
    u_max - base_u; Idle executes nothing except overdue entries, which are
    force-run up to the headroom regardless of the action. Returns
    (q, u_exec, penalty) with penalty = w_pen * remaining queued amount.
    """
    if flex_arrival < 0:
        raise BadUtilization("flex_arrival must be non-negative")
    if base_u < 0 or base_u > p.u_max + 1e-12:
        raise BadUtilization(f"base_u {base_u} exceeds the cap {p.u_max}")
    arrival_units = _to_units(flex_arrival)
    if arrival_units > 0:
        deadline = now + int(round(p.deadline_hours * 4))
        q._entries.append(_Entry(arrival_units, now, deadline))
        q._arrived_units += arrival_units
    headroom_units = max(0, _to_units(p.u_max - base_u))
    executed = _drain(q, headroom_units, only_overdue=(a != LsAction.ASSIGN), now=now)
    u_exec = base_u + _to_float(executed)
    penalty = p.w_pen * q.total_queued
    return q, u_exec, penalty


def overdue_amount(q: FlexQueue, now: int) -> float:
    """Total queued work whose deadline is at or before `now`."""
    return _to_float(sum(e.units for e in q._entries if e.deadline_step <= now))
