"""Discrete-event core: clocked event queue, staff FIFO pool, and the three
event handlers (arrival routing, service completion, abandonment).

Conventions baked in here:
  - a staff member's queue length counts the client in service plus the FIFO,
    so length 0 means idle and ``max_queue_len`` means full;
  - abandonment timers are cancelled lazily (a stale timer is detected when
    popped, the heap is never edited in place);
  - arrivals are never scheduled at or past the episode horizon, while
    departures and abandonments may run past it (overtime drain);
  - idle time is charged only inside [0, episode_length], waiting time is
    charged through the drain.
"""

from __future__ import annotations

import math
from collections import deque
from heapq import heappop, heappush
from typing import NamedTuple, Optional

from .config import SimConfig
from .errors import InvalidActionError, SchedulingError
from .rng import RngStream

# event kinds
ARRIVAL, DEPARTURE, ABANDONMENT = 0, 1, 2
KIND_NAMES = ("arrival", "departure", "abandonment")

# client statuses
WAITING, IN_SERVICE, SERVED, ABANDONED, REJECTED = range(5)
STATUS_NAMES = ("waiting", "in_service", "served", "abandoned", "rejected")


class Event(NamedTuple):
    """Heap entry ordered by (time, seq); ``seq`` makes equal-time pops follow
    insertion order. ``who`` is an inquiry type for arrivals, a staff id for
    departures, and a client id for abandonments."""

    time: float
    seq: int
    kind: int
    who: int


class EventQueue:
    """Min-priority event collection that owns the simulation clock."""

    def __init__(self):
        self._heap: list[Event] = []
        self._seq = 0
        self.now = 0.0

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, time: float, kind: int, who: int) -> Event:
        if time < self.now:
            raise SchedulingError(
                f"cannot schedule {KIND_NAMES[kind]} at t={time} before clock t={self.now}"
            )
        event = Event(time, self._seq, kind, who)
        self._seq += 1
        heappush(self._heap, event)
        return event

    def pop(self) -> Optional[Event]:
        """Remove and return the earliest event, advancing the clock to it;
        None once the queue has drained."""
        if not self._heap:
            return None
        event = heappop(self._heap)
        self.now = event.time
        return event


class Client:
    __slots__ = ("id", "inquiry", "arrival_time", "assigned", "status",
                 "service_start", "departure_time", "abandon_time")

    def __init__(self, cid: int, inquiry: int, arrival_time: float):
        self.id = cid
        self.inquiry = inquiry
        self.arrival_time = arrival_time
        self.assigned = -1
        self.status = WAITING
        self.service_start: float | None = None
        self.departure_time: float | None = None
        self.abandon_time: float | None = None


class StaffState:
    """One staff member: current service slot, FIFO of waiting clients, and
    idle bookkeeping. ``idle_since`` is set exactly while no client is in
    service; ``idle_accum`` holds closed idle intervals clipped to the day."""

    __slots__ = ("in_service", "fifo", "idle_since", "idle_accum")

    def __init__(self):
        self.in_service: Client | None = None
        self.fifo: deque[Client] = deque()
        self.idle_since: float | None = 0.0
        self.idle_accum = 0.0

    def queue_len(self) -> int:
        return (0 if self.in_service is None else 1) + len(self.fifo)


class CallCentreEngine:
    """Single-episode simulation state; strictly single-threaded.

    Driving loop: :meth:`start`, then alternate :meth:`advance` (returns the
    next client to route, or None once drained) with :meth:`handle_arrival`
    (routes the pending client per the chosen action).
    """

    def __init__(self, cfg: SimConfig, rng: RngStream, collect_trace: bool = False):
        self.cfg = cfg
        self.rng = rng
        self.queue = EventQueue()
        self.staff = [StaffState() for _ in range(cfg.n_staff)]
        self.horizon = cfg.episode_length
        self.clients: list[Client] = []
        self.pending: Client | None = None
        self._pending_event: Event | None = None
        self.arrivals = 0
        self.served = 0
        self.abandoned = 0
        self.rejected = 0
        self.wait_sum = 0.0        # served clients: service_start - arrival
        self.wait_count = 0
        self.abandoned_wait_sum = 0.0
        self._wait_closed = 0.0    # waiting seconds of clients no longer queued
        self.drained = False
        self.trace: list[tuple] | None = [] if collect_trace else None

    # ------------------------------------------------------------------ setup

    def start(self) -> None:
        """Schedule the first arrival of each inquiry type (type 0 sampled
        first). Arrivals landing at or past the horizon are dropped."""
        for inquiry, mean in enumerate(self.cfg.inter_arrival_mean):
            t = self.rng.exponential(mean)
            if t < self.horizon:
                self.queue.schedule(t, ARRIVAL, inquiry)

    # ------------------------------------------------------------- event loop

    def advance(self) -> Optional[Client]:
        """Process events until the next arrival pops (returned as the pending
        client awaiting a routing decision) or the queue drains (None)."""
        queue = self.queue
        while True:
            event = queue.pop()
            if event is None:
                self._finalize()
                return None
            kind = event.kind
            if kind == ARRIVAL:
                client = Client(len(self.clients), event.who, event.time)
                self.clients.append(client)
                self.arrivals += 1
                self.pending = client
                self._pending_event = event
                return client
            if kind == DEPARTURE:
                departed = self.handle_departure(event.who)
                if self.trace is not None:
                    self._trace_row(event, departed.id, event.who)
            else:
                self.handle_abandonment(event.who)
                if self.trace is not None:
                    self._trace_row(event, event.who, self.clients[event.who].assigned)

    def handle_arrival(self, action: int) -> bool:
        """Route the pending client to ``action``'s queue. Returns True when
        the client was dropped because that queue was full.

        Sampling order is fixed (next same-type arrival, then service time or
        patience) so a seeded episode is bit-reproducible.
        """
        client = self.pending
        if client is None:
            raise SchedulingError("no pending arrival to route")
        if not 0 <= action < self.cfg.n_staff:
            raise InvalidActionError(
                f"action {action} does not index a staff member (n_staff={self.cfg.n_staff})"
            )
        now = self.queue.now
        nxt = now + self.rng.exponential(self.cfg.inter_arrival_mean[client.inquiry])
        if nxt < self.horizon:  # no new calls past closing time
            self.queue.schedule(nxt, ARRIVAL, client.inquiry)

        client.assigned = action
        staff = self.staff[action]
        rejected = False
        if staff.in_service is None:
            self._begin_service(action, client)
        elif staff.queue_len() < self.cfg.max_queue_len:
            staff.fifo.append(client)
            patience = self.cfg.abandonment_mean[client.inquiry]
            if math.isfinite(patience):
                self.queue.schedule(now + self.rng.exponential(patience),
                                    ABANDONMENT, client.id)
        else:
            client.status = REJECTED
            self.rejected += 1
            rejected = True

        self.pending = None
        if self.trace is not None:
            self._trace_row(self._pending_event, client.id, action)
        self._pending_event = None
        return rejected

    def handle_departure(self, staff_id: int) -> Client:
        """Finish the current service; pull the FIFO head into service or go idle."""
        staff = self.staff[staff_id]
        client = staff.in_service
        if client is None:
            raise SchedulingError(f"departure event for idle staff {staff_id}")
        now = self.queue.now
        client.status = SERVED
        client.departure_time = now
        self.served += 1
        staff.in_service = None
        if staff.fifo:
            self._begin_service(staff_id, staff.fifo.popleft())
        else:
            staff.idle_since = now
        return client

    def handle_abandonment(self, client_id: int) -> None:
        """Waiting client gives up; stale timers (client already in service or
        served) are no-ops."""
        client = self.clients[client_id]
        if client.status != WAITING:
            return
        now = self.queue.now
        self.staff[client.assigned].fifo.remove(client)
        client.status = ABANDONED
        client.abandon_time = now
        waited = now - client.arrival_time
        self._wait_closed += waited
        self.abandoned_wait_sum += waited
        self.abandoned += 1

    def _begin_service(self, staff_id: int, client: Client) -> None:
        staff = self.staff[staff_id]
        now = self.queue.now
        if staff.idle_since is not None:
            staff.idle_accum += max(0.0, min(now, self.horizon) - min(staff.idle_since, self.horizon))
            staff.idle_since = None
        client.status = IN_SERVICE
        client.service_start = now
        staff.in_service = client
        waited = now - client.arrival_time
        self.wait_sum += waited
        self.wait_count += 1
        self._wait_closed += waited
        service = self.rng.exponential(self.cfg.service_mean[staff_id][client.inquiry])
        self.queue.schedule(now + service, DEPARTURE, staff_id)

    def _finalize(self) -> None:
        """Close open idle intervals at the horizon once the queue drains."""
        if self.drained:
            return
        for staff in self.staff:
            if staff.idle_since is not None:
                staff.idle_accum += max(0.0, self.horizon - min(staff.idle_since, self.horizon))
                staff.idle_since = self.horizon
        self.drained = True

    # ------------------------------------------------------------ accounting

    def charged_idle(self, at: float | None = None) -> float:
        """Total staff idle seconds charged up to ``at`` (clock time by
        default), clipped to the working day."""
        t = self.queue.now if at is None else at
        horizon = self.horizon
        total = 0.0
        for staff in self.staff:
            total += staff.idle_accum
            if staff.idle_since is not None:
                total += max(0.0, min(t, horizon) - min(staff.idle_since, horizon))
        return total

    def charged_wait(self, at: float | None = None) -> float:
        """Total client waiting seconds charged up to ``at``, including clients
        still in a queue (uncapped: queued clients keep costing after closing)."""
        t = self.queue.now if at is None else at
        total = self._wait_closed
        for staff in self.staff:
            for client in staff.fifo:
                total += t - client.arrival_time
        return total

    def queue_lengths(self) -> tuple[int, ...]:
        return tuple(staff.queue_len() for staff in self.staff)

    def _trace_row(self, event: Event, client_id: int, staff_id: int) -> None:
        self.trace.append((event.time, event.seq, KIND_NAMES[event.kind],
                           client_id, staff_id, *self.queue_lengths()))
