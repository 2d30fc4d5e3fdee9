"""Continuous-time simulation of the joint flow/packet dynamics.

Flow arrivals and packet generations are driven by exponential timers; the
packet-generation timer of a flow type is redrawn whenever its rate changes.
Transmission slots happen at the positive integers and move one packet per
scheduled nonempty queue. The state at time 0 is the initial state.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import InvalidHorizon, OutOfHorizon, SeedRequired
from core.network import Network
from core.policy import ControlPolicy, MWUMPolicy, PolicyParams
from utils.config import RECORD_EVENTS, REPRODUCIBLE
from utils.validators import validate_state_vector

logger = logging.getLogger(__name__)

FLOW_ARRIVAL = "flow_arrival"
PACKET = "packet"
SLOT = "slot"

# RNG stream classes per flow type
ARRIVAL_STREAM = 0
PACKET_STREAM = 1
DEPARTURE_STREAM = 2

INTEGER_COMPONENTS = ("N", "Q", "Z", "S", "A", "Aflow", "D")


@dataclass(frozen=True, eq=False)
class SystemState:
    """Integer stochastic state plus the cumulative allocated rate."""
    t: float
    N: np.ndarray
    Q: np.ndarray
    Z: np.ndarray
    S: np.ndarray
    A: np.ndarray
    Aflow: np.ndarray
    D: np.ndarray
    Xbar: np.ndarray

    def component(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"t": float(self.t)}
        for name in INTEGER_COMPONENTS:
            data[name] = [int(v) for v in getattr(self, name)]
        data["Xbar"] = [float(v) for v in self.Xbar]
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SystemState":
        arrays = {name: np.array(data[name], dtype=np.int64) for name in INTEGER_COMPONENTS}
        return cls(t=float(data["t"]), Xbar=np.array(data["Xbar"], dtype=float), **arrays)


@dataclass(frozen=True)
class Event:
    """One state change: (component, index, amount) deltas and the rates after it."""
    t: float
    kind: str
    entity: int
    delta: Tuple[Tuple[str, int, int], ...]
    rates: Tuple[float, ...]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Immutable record of a simulation run."""
    network: Network
    policy: str
    params: PolicyParams
    seed: Optional[int]
    horizon: float
    initial: SystemState
    final: SystemState
    snapshots: Dict[str, np.ndarray]
    snapshot_rates: np.ndarray
    snapshot_event_index: np.ndarray
    events: Tuple[Event, ...] = field(default=())
    events_recorded: bool = True

    @property
    def last_slot(self) -> int:
        return self.snapshot_rates.shape[0] - 1

    def snapshot(self, tau: int) -> SystemState:
        """State right after the slot at integer time tau (tau = 0: initial state)."""
        if tau < 0 or tau > self.last_slot:
            raise OutOfHorizon(f"no snapshot at {tau}; last slot is {self.last_slot}")
        arrays = {name: self.snapshots[name][tau].copy() for name in INTEGER_COMPONENTS}
        return SystemState(t=float(tau), Xbar=self.snapshots["Xbar"][tau].copy(), **arrays)

    def schedule_sequence(self) -> np.ndarray:
        """Schedule index used at each slot 1..last_slot."""
        counts = self.snapshots["S"]
        return np.argmax(np.diff(counts, axis=0), axis=1)


@dataclass(frozen=True, eq=False)
class ScaledState:
    """Scaled descriptor: counters at time r*t divided by r."""
    r: float
    t: float
    n: np.ndarray
    q: np.ndarray
    z: np.ndarray
    s: np.ndarray
    xbar: np.ndarray
    a_flow: np.ndarray
    d: np.ndarray
    a: np.ndarray

    def flows_and_queues(self) -> np.ndarray:
        return np.concatenate([self.n, self.q])


@dataclass(frozen=True)
class Violation:
    time: float
    check: str
    detail: str


@dataclass(frozen=True)
class ConservationReport:
    passed: bool
    checked_times: int
    events_replayed: int
    idle_total: int
    first_violation: Optional[Violation] = None

    def to_dict(self) -> Dict[str, Any]:
        violation = None
        if self.first_violation is not None:
            violation = {"time": self.first_violation.time,
                         "check": self.first_violation.check,
                         "detail": self.first_violation.detail}
        return {"passed": self.passed, "checked_times": self.checked_times,
                "events_replayed": self.events_replayed, "idle_total": self.idle_total,
                "first_violation": violation}


def _check_horizon(horizon: float) -> float:
    if (not isinstance(horizon, (int, float, np.integer, np.floating))
            or isinstance(horizon, bool)):
        raise InvalidHorizon(f"horizon must be a number, got {horizon!r}")
    horizon = float(horizon)
    if not math.isfinite(horizon) or horizon <= 0:
        raise InvalidHorizon(f"horizon must be positive and finite, got {horizon}")
    return horizon


def _streams(entropy: int, num_flows: int) -> List[List[np.random.Generator]]:
    """Independent generators keyed by (flow type, event class)."""
    return [[np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=(f, k)))
             for k in (ARRIVAL_STREAM, PACKET_STREAM, DEPARTURE_STREAM)]
            for f in range(num_flows)]


def _draw(rng: np.random.Generator, now: float, rate: float) -> float:
    return now + rng.exponential(1.0 / rate) if rate > 0 else math.inf


def simulate(net: Network, params: PolicyParams, horizon: float, seed: Optional[int] = None,
             initial_n: Optional[Sequence[int]] = None, initial_q: Optional[Sequence[int]] = None,
             policy: Optional[ControlPolicy] = None, reproducible: bool = REPRODUCIBLE,
             record_events: bool = RECORD_EVENTS) -> Trajectory:
    """Simulate the network under a policy (MWUM-alpha by default) up to the horizon."""
    horizon = _check_horizon(horizon)
    if seed is None:
        if reproducible:
            raise SeedRequired("a seed is required in reproducible mode")
        seed = int(np.random.SeedSequence().entropy)
    elif isinstance(seed, bool) or int(seed) != seed or seed < 0:
        raise SeedRequired(f"seed must be a nonnegative integer, got {seed!r}")
    seed = int(seed)
    policy = policy or MWUMPolicy(net, params)

    F, E, num_schedules = net.num_flows, net.num_queues, net.num_schedules
    N = [int(v) for v in validate_state_vector(initial_n, F, "initial_n", integral=True)]
    Q = [int(v) for v in validate_state_vector(initial_q, E, "initial_q", integral=True)]
    Z, S = [0] * E, [0] * num_schedules
    A, Aflow, D = [0] * F, [0] * F, [0] * F
    Xbar = [0.0] * F

    nu = [float(v) for v in net.nu]
    mu = [float(v) for v in net.mu]
    ingress = [int(v) for v in net.ingress_index]
    next_hop = [int(v) for v in net.next_hop]
    schedules = net.schedules.elements

    streams = _streams(seed, F)
    t = 0.0
    rates = [float(v) for v in policy.rates(N, Q)]
    next_arrival = [_draw(streams[f][ARRIVAL_STREAM], t, nu[f]) for f in range(F)]
    next_packet = [_draw(streams[f][PACKET_STREAM], t, rates[f]) for f in range(F)]

    last_slot = int(math.floor(horizon))
    snapshots = {name: np.zeros((last_slot + 1, size), dtype=np.int64)
                 for name, size in (("N", F), ("Q", E), ("Z", E), ("S", num_schedules),
                                    ("A", F), ("Aflow", F), ("D", F))}
    snapshots["Xbar"] = np.zeros((last_slot + 1, F), dtype=float)
    snapshot_rates = np.zeros((last_slot + 1, F), dtype=float)
    snapshot_event_index = np.zeros(last_slot + 1, dtype=np.int64)
    events: List[Event] = []

    def take_snapshot(tau: int):
        for name, values in (("N", N), ("Q", Q), ("Z", Z), ("S", S), ("A", A),
                             ("Aflow", Aflow), ("D", D), ("Xbar", Xbar)):
            snapshots[name][tau] = values
        snapshot_rates[tau] = rates
        snapshot_event_index[tau] = len(events)

    def advance(until: float):
        elapsed = until - t
        if elapsed > 0:
            for f in range(F):
                Xbar[f] += rates[f] * elapsed

    def refresh_rates(now: float, fired: int = -1) -> List[float]:
        updated = [float(v) for v in policy.rates(N, Q)]
        for f in range(F):
            if f == fired or updated[f] != rates[f]:
                next_packet[f] = _draw(streams[f][PACKET_STREAM], now, updated[f])
        return updated

    initial = _state(0.0, N, Q, Z, S, A, Aflow, D, Xbar)
    take_snapshot(0)
    tau = 1
    while True:
        f_arrival = min(range(F), key=next_arrival.__getitem__)
        f_packet = min(range(F), key=next_packet.__getitem__)
        t_arrival, t_packet = next_arrival[f_arrival], next_packet[f_packet]
        t_event = min(t_arrival, t_packet)

        if tau <= last_slot and tau <= t_event:
            advance(float(tau))
            t = float(tau)
            k = policy.schedule(Q, tau)
            pi = schedules[k]
            delta: List[Tuple[str, int, int]] = [("S", k, 1)]
            served = [e for e in range(E) if pi[e] and Q[e] > 0]
            for e in range(E):
                if pi[e] and Q[e] == 0:
                    Z[e] += 1
                    delta.append(("Z", e, 1))
            for e in served:
                Q[e] -= 1
                delta.append(("Q", e, -1))
                if next_hop[e] >= 0:
                    Q[next_hop[e]] += 1
                    delta.append(("Q", next_hop[e], 1))
            S[k] += 1
            rates = refresh_rates(t)
            if record_events:
                events.append(Event(t, SLOT, k, tuple(delta), tuple(rates)))
            take_snapshot(tau)
            tau += 1
        elif t_event <= horizon:
            advance(t_event)
            t = t_event
            if t_arrival <= t_packet:
                f = f_arrival
                N[f] += 1
                Aflow[f] += 1
                delta = [("N", f, 1), ("Aflow", f, 1)]
                next_arrival[f] = _draw(streams[f][ARRIVAL_STREAM], t, nu[f])
                rates = refresh_rates(t)
                kind = FLOW_ARRIVAL
            else:
                f = f_packet
                A[f] += 1
                Q[ingress[f]] += 1
                delta = [("A", f, 1), ("Q", ingress[f], 1)]
                if streams[f][DEPARTURE_STREAM].random() < mu[f]:
                    N[f] -= 1
                    D[f] += 1
                    delta.extend([("N", f, -1), ("D", f, 1)])
                rates = refresh_rates(t, fired=f)
                kind = PACKET
            if record_events:
                events.append(Event(t, kind, f, tuple(delta), tuple(rates)))
        else:
            break

    advance(horizon)
    t = horizon
    final = _state(horizon, N, Q, Z, S, A, Aflow, D, Xbar)

    for array in list(snapshots.values()) + [snapshot_rates, snapshot_event_index]:
        array.flags.writeable = False
    if sum(Z) > 0 and policy.is_non_idling():
        logger.warning("Non-idling policy %s recorded idleness %d", policy.get_name(), sum(Z))
    logger.info("Simulated %s under %s: seed=%d horizon=%g slots=%d events=%d",
                net.name, policy.get_name(), seed, horizon, last_slot, len(events))

    return Trajectory(network=net, policy=policy.get_name(), params=params, seed=seed,
                      horizon=horizon, initial=initial, final=final, snapshots=snapshots,
                      snapshot_rates=snapshot_rates, snapshot_event_index=snapshot_event_index,
                      events=tuple(events), events_recorded=record_events)


def _state(t: float, N, Q, Z, S, A, Aflow, D, Xbar) -> SystemState:
    return SystemState(t=float(t), N=np.array(N, dtype=np.int64), Q=np.array(Q, dtype=np.int64),
                       Z=np.array(Z, dtype=np.int64), S=np.array(S, dtype=np.int64),
                       A=np.array(A, dtype=np.int64), Aflow=np.array(Aflow, dtype=np.int64),
                       D=np.array(D, dtype=np.int64), Xbar=np.array(Xbar, dtype=float))


def state_at(traj: Trajectory, u: float) -> SystemState:
    """Right-continuous state at time u (Z and S as of the last slot <= u)."""
    if u < 0 or u > traj.horizon:
        raise OutOfHorizon(f"time {u} outside [0, {traj.horizon}]")
    k = min(int(math.floor(u)), traj.last_slot)
    base = traj.snapshot(k)
    if u == k:
        return base
    if not traj.events_recorded:
        raise ValueError("event log was not recorded; only integer times are available")

    values = {name: base.component(name).copy() for name in INTEGER_COMPONENTS}
    xbar = base.Xbar.copy()
    rates = traj.snapshot_rates[k].copy()
    current = float(k)
    for event in traj.events[int(traj.snapshot_event_index[k]):]:
        if event.t > u:
            break
        xbar += rates * (event.t - current)
        current = event.t
        for name, index, amount in event.delta:
            values[name][index] += amount
        rates = np.array(event.rates, dtype=float)
    xbar += rates * (u - current)
    return SystemState(t=float(u), Xbar=xbar, **values)


def scaled_state(traj: Trajectory, r: float, t: float) -> ScaledState:
    """Counters at time r*t divided by r; Z and S interpolated between slots."""
    if r < 1:
        raise ValueError(f"scaling r must be >= 1, got {r}")
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    u = r * t
    if u > traj.horizon:
        raise OutOfHorizon(f"r*t = {u} exceeds horizon {traj.horizon}")
    state = state_at(traj, u)

    lower, upper = int(math.floor(u)), int(math.ceil(u))
    if lower == upper:
        z = traj.snapshots["Z"][lower].astype(float)
        s = traj.snapshots["S"][lower].astype(float)
    else:
        if upper > traj.last_slot:
            raise OutOfHorizon(f"interpolation needs slot {upper} beyond {traj.last_slot}")
        w_up, w_low = u - lower, upper - u
        z = w_up * traj.snapshots["Z"][upper] + w_low * traj.snapshots["Z"][lower]
        s = w_up * traj.snapshots["S"][upper] + w_low * traj.snapshots["S"][lower]

    return ScaledState(r=float(r), t=float(t), n=state.N / r, q=state.Q / r, z=z / r, s=s / r,
                       xbar=state.Xbar / r, a_flow=state.Aflow / r, d=state.D / r, a=state.A / r)


def verify_conservation(traj: Trajectory) -> ConservationReport:
    """Check flow and queue conservation at every slot and replay the event log."""
    net = traj.network
    snaps = traj.snapshots
    initial = traj.initial
    violations: List[Violation] = []

    expected_n = initial.N + snaps["Aflow"] - snaps["D"]
    M = net.I_minus_Rt
    expected_q = (initial.Q - (M @ net.Pi @ snaps["S"].T).T + (M @ snaps["Z"].T).T
                  + (net.ingress @ snaps["A"].T).T)
    for check, bad in (("flow_conservation", np.any(expected_n != snaps["N"], axis=1)),
                       ("queue_conservation", np.any(expected_q != snaps["Q"], axis=1))):
        where = np.flatnonzero(bad)
        if where.size:
            tau = int(where[0])
            violations.append(Violation(float(tau), check, f"identity fails at slot {tau}"))

    for name in INTEGER_COMPONENTS:
        where = np.flatnonzero(np.any(snaps[name] < 0, axis=1))
        if where.size:
            violations.append(Violation(float(where[0]), "nonnegativity",
                                        f"{name} negative at slot {int(where[0])}"))
    for name in ("Z", "S", "A", "Aflow", "D"):
        where = np.flatnonzero(np.any(np.diff(snaps[name], axis=0) < 0, axis=1))
        if where.size:
            violations.append(Violation(float(where[0] + 1), "monotonicity",
                                        f"{name} decreases at slot {int(where[0]) + 1}"))

    replayed = 0
    if traj.events_recorded:
        replay_violation, replayed = _replay(traj)
        if replay_violation is not None:
            violations.append(replay_violation)

    first = min(violations, key=lambda v: v.time) if violations else None
    report = ConservationReport(passed=first is None, checked_times=traj.last_slot + 1,
                                events_replayed=replayed, idle_total=int(traj.final.Z.sum()),
                                first_violation=first)
    if first is not None:
        logger.warning("Conservation check failed at t=%g (%s): %s",
                       first.time, first.check, first.detail)
    return report


def _replay(traj: Trajectory) -> Tuple[Optional[Violation], int]:
    values = {name: [int(v) for v in traj.initial.component(name)] for name in INTEGER_COMPONENTS}
    previous = 0.0
    slots_seen = 0
    for count, event in enumerate(traj.events, start=1):
        if event.t < previous:
            return Violation(event.t, "ordering", "event times decrease"), count
        previous = event.t
        for name, index, amount in event.delta:
            values[name][index] += amount
        for name in ("N", "Q"):
            if min(values[name], default=0) < 0:
                return Violation(event.t, "nonnegativity", f"{name} negative after replay"), count
        if event.kind == SLOT:
            slots_seen += 1
            tau = int(round(event.t))
            if tau != slots_seen:
                return Violation(event.t, "replay", f"slot {tau} out of sequence"), count
            mismatch = _first_mismatch(values, traj, tau)
            if mismatch:
                return Violation(event.t, "replay", f"{mismatch} differs from snapshot {tau}"), count
    if slots_seen != traj.last_slot:
        return Violation(float(slots_seen), "replay", "missing slot events"), len(traj.events)
    for name in INTEGER_COMPONENTS:
        if values[name] != [int(v) for v in traj.final.component(name)]:
            return Violation(traj.horizon, "replay", f"{name} differs from final state"), len(traj.events)
    return None, len(traj.events)


def _first_mismatch(values: Dict[str, List[int]], traj: Trajectory, tau: int) -> Optional[str]:
    for name in INTEGER_COMPONENTS:
        if values[name] != traj.snapshots[name][tau].tolist():
            return name
    return None


def stability_statistics(traj: Trajectory) -> Dict[str, float]:
    """Time averages of ||(N, Q)||_1 over the second quarter and the last half."""
    totals = traj.snapshots["N"].sum(axis=1) + traj.snapshots["Q"].sum(axis=1)
    last = traj.last_slot
    quarter = totals[last // 4: last // 2]
    half = totals[last // 2: last + 1]
    if quarter.size == 0 or half.size == 0:
        raise OutOfHorizon("run too short for stability statistics")
    second_quarter = float(quarter.mean())
    last_half = float(half.mean())
    ratio = last_half / second_quarter if second_quarter > 0 else math.inf
    return {"second_quarter": second_quarter, "last_half": last_half, "ratio": ratio}
