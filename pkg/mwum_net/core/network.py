"""Static network structure: queues, routing, ingress and the schedule set.

A network is described by a JSON document::

    {
      "name": "t2",                                   (optional)
      "C": 2.0,
      "queues": [{"link": "l1", "dest": "v"}, {"link": "l2", "dest": "v"}],
      "routes": [["l1:v", "l2:v"]],
      "flows": [{"source_link": "l1", "dest": "v", "nu": 0.2, "mu": 0.5}],
      "schedule_generators": [["l1:v"], ["l2:v"]]
    }

Queue ids are ``"<link>:<dest>"``. Flows may carry an optional ``name``.
Unknown keys are rejected at every level.
"""

import os
import json
import math
import logging
import dataclasses
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import (
    CyclicRouting,
    LoadAssumptionViolated,
    MalformedConfig,
    ScheduleSetTooLarge,
    UnservedQueue,
)
from utils.config import MAX_SCHEDULES

logger = logging.getLogger(__name__)

TOPOLOGY_KEYS = {"name", "C", "queues", "routes", "flows", "schedule_generators"}
REQUIRED_TOPOLOGY_KEYS = TOPOLOGY_KEYS - {"name"}
QUEUE_KEYS = {"link", "dest"}
FLOW_KEYS = {"source_link", "dest", "nu", "mu", "name"}
REQUIRED_FLOW_KEYS = FLOW_KEYS - {"name"}


@dataclass(frozen=True, order=True)
class Queue:
    """Per-link, per-destination buffer."""
    link: str
    dest: str

    @property
    def id(self) -> str:
        return f"{self.link}:{self.dest}"


@dataclass(frozen=True)
class FlowSpec:
    """A flow type: Poisson arrivals at rate nu, geometric packet count with mean 1/mu."""
    source_link: str
    dest: str
    nu: float
    mu: float
    name: str = ""

    @property
    def rho(self) -> float:
        return self.nu / self.mu

    @property
    def ingress_id(self) -> str:
        return f"{self.source_link}:{self.dest}"


@dataclass(frozen=True)
class ScheduleSet:
    """Monotone family of schedules, stored as 0/1 tuples in lexicographic order."""
    elements: Tuple[Tuple[int, ...], ...]
    _index: Dict[Tuple[int, ...], int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {pi: k for k, pi in enumerate(self.elements)})

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self) -> Iterator[Tuple[int, ...]]:
        return iter(self.elements)

    def __getitem__(self, k: int) -> Tuple[int, ...]:
        return self.elements[k]

    def __contains__(self, pi) -> bool:
        return tuple(int(v) for v in pi) in self._index

    def index_of(self, pi: Sequence[int]) -> int:
        """Canonical index of a schedule, KeyError if absent."""
        return self._index[tuple(int(v) for v in pi)]

    def get_index(self, pi: Tuple[int, ...]) -> Optional[int]:
        return self._index.get(pi)

    @property
    def num_queues(self) -> int:
        return len(self.elements[0]) if self.elements else 0

    def matrix(self) -> np.ndarray:
        """Pi: E x |S| integer matrix whose columns are the schedules."""
        return np.array(self.elements, dtype=np.int64).T.reshape(self.num_queues, len(self))

    def maximal_indices(self) -> List[int]:
        """Schedules not strictly dominated by another member."""
        result = []
        for k, pi in enumerate(self.elements):
            grown = False
            for e, bit in enumerate(pi):
                if bit == 0:
                    candidate = pi[:e] + (1,) + pi[e + 1:]
                    if candidate in self._index:
                        grown = True
                        break
            if not grown:
                result.append(k)
        return result


def monotone_closure(generators: Sequence[Sequence[int]],
                     max_size: int = MAX_SCHEDULES) -> ScheduleSet:
    """Smallest monotone set containing the generators and the zero schedule."""
    if not generators:
        raise MalformedConfig("schedule generators must be nonempty")
    size = len(generators[0])
    if size == 0:
        raise MalformedConfig("schedules must cover at least one queue")

    masks = set()
    for generator in generators:
        if len(generator) != size:
            raise MalformedConfig("schedule generators have inconsistent lengths")
        mask = 0
        for e, bit in enumerate(generator):
            if bit not in (0, 1) or isinstance(bit, bool):
                raise MalformedConfig(f"schedule entries must be 0 or 1, got {bit!r}")
            if bit:
                mask |= 1 << e
        if 1 << bin(mask).count("1") > max_size:
            raise ScheduleSetTooLarge(f"generator with {bin(mask).count('1')} queues exceeds cap {max_size}")
        # all submasks of mask, including 0
        sub = mask
        while True:
            masks.add(sub)
            if sub == 0:
                break
            sub = (sub - 1) & mask
        if len(masks) > max_size:
            raise ScheduleSetTooLarge(f"schedule set exceeds cap {max_size}")

    elements = sorted(tuple((m >> e) & 1 for e in range(size)) for m in masks)
    return ScheduleSet(tuple(elements))


def compute_xi(routing: np.ndarray) -> np.ndarray:
    """Xi = (I - R^T)^{-1} as the finite Neumann series, in integers."""
    R = np.asarray(routing, dtype=np.int64)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise MalformedConfig("routing matrix must be square")
    size = R.shape[0]
    Rt = R.T
    xi = np.eye(size, dtype=np.int64)
    power = np.eye(size, dtype=np.int64)
    for _ in range(size):
        power = power @ Rt
        if not power.any():
            break
        xi = xi + power
    else:
        if size > 0 and power.any():
            raise CyclicRouting("routing matrix is not nilpotent")
    identity = np.eye(size, dtype=np.int64)
    if not np.array_equal(xi @ (identity - Rt), identity):
        raise CyclicRouting("Neumann series does not invert I - R^T")
    return xi


@dataclass(frozen=True, eq=False)
class Network:
    """Immutable network description with derived matrices."""
    queues: Tuple[Queue, ...]
    flows: Tuple[FlowSpec, ...]
    routing: np.ndarray
    ingress: np.ndarray
    xi: np.ndarray
    schedules: ScheduleSet
    C: float
    name: str = "network"

    def __post_init__(self):
        for array in (self.routing, self.ingress, self.xi):
            array.flags.writeable = False

    @property
    def num_queues(self) -> int:
        return len(self.queues)

    @property
    def num_flows(self) -> int:
        return len(self.flows)

    @property
    def num_schedules(self) -> int:
        return len(self.schedules)

    @cached_property
    def queue_ids(self) -> Tuple[str, ...]:
        return tuple(queue.id for queue in self.queues)

    @cached_property
    def flow_names(self) -> Tuple[str, ...]:
        return tuple(flow.name for flow in self.flows)

    @cached_property
    def nu(self) -> np.ndarray:
        return _frozen(np.array([flow.nu for flow in self.flows], dtype=float))

    @cached_property
    def mu(self) -> np.ndarray:
        return _frozen(np.array([flow.mu for flow in self.flows], dtype=float))

    @cached_property
    def rho(self) -> np.ndarray:
        return _frozen(self.nu / self.mu)

    @cached_property
    def ingress_index(self) -> np.ndarray:
        """iota(f): index of each flow's ingress queue."""
        return _frozen(np.argmax(self.ingress, axis=0).astype(np.int64))

    @cached_property
    def next_hop(self) -> np.ndarray:
        """Index of each queue's next hop, -1 when packets leave the network."""
        hops = np.full(self.num_queues, -1, dtype=np.int64)
        for e, row in enumerate(self.routing):
            targets = np.flatnonzero(row)
            if targets.size:
                hops[e] = int(targets[0])
        return _frozen(hops)

    @cached_property
    def I_minus_Rt(self) -> np.ndarray:
        return _frozen(np.eye(self.num_queues, dtype=np.int64) - self.routing.T)

    @cached_property
    def Pi(self) -> np.ndarray:
        return _frozen(self.schedules.matrix())

    @cached_property
    def weight_matrix(self) -> np.ndarray:
        """Rows pi^T (I - R): schedule weights are weight_matrix @ q**alpha."""
        identity = np.eye(self.num_queues, dtype=np.int64)
        return _frozen(self.Pi.T @ (identity - self.routing))

    @cached_property
    def topological_order(self) -> Tuple[int, ...]:
        """Queues ordered upstream first."""
        upstream = self.xi.sum(axis=1)
        return tuple(sorted(range(self.num_queues), key=lambda e: (int(upstream[e]), e)))

    @cached_property
    def maximal_schedules(self) -> Tuple[int, ...]:
        return tuple(self.schedules.maximal_indices())

    def queue_index(self, queue_id: str) -> int:
        try:
            return self.queue_ids.index(queue_id)
        except ValueError:
            raise KeyError(f"unknown queue {queue_id!r}")

    def with_load_scale(self, kappa: float, validate: bool = True) -> "Network":
        """Copy with every arrival rate nu multiplied by kappa."""
        flows = tuple(dataclasses.replace(flow, nu=flow.nu * float(kappa)) for flow in self.flows)
        scaled = dataclasses.replace(self, flows=flows)
        if validate:
            check_load_assumptions(scaled)
        return scaled

    def with_capacity(self, C: float, validate: bool = True) -> "Network":
        """Copy with a different maximal per-flow rate C."""
        if not _is_number(C) or not math.isfinite(C) or C <= 0:
            raise MalformedConfig(f"C must be a positive number, got {C!r}")
        updated = dataclasses.replace(self, C=float(C))
        if validate:
            check_load_assumptions(updated)
        return updated

    def describe(self) -> Dict[str, Any]:
        """Plain summary used in reports and manifests."""
        return {
            "name": self.name,
            "queues": list(self.queue_ids),
            "flows": list(self.flow_names),
            "num_schedules": self.num_schedules,
            "C": self.C,
            "rho": [float(v) for v in self.rho],
        }


def implied_load(net: Network) -> np.ndarray:
    """lambda = Xi Gamma rho, the per-queue packet load."""
    return net.xi @ (net.ingress @ net.rho)


def check_load_assumptions(net: Network) -> None:
    """Standing assumptions 0 < rho < C and Xi Gamma rho > 0."""
    rho = net.rho
    if np.any(rho <= 0):
        raise LoadAssumptionViolated(f"offered load must be positive, got rho={rho.tolist()}")
    if np.any(rho >= net.C):
        raise LoadAssumptionViolated(f"offered load must stay below C={net.C}, got rho={rho.tolist()}")
    lam = implied_load(net)
    if np.any(lam <= 0):
        idle = [net.queue_ids[e] for e in np.flatnonzero(lam <= 0)]
        raise LoadAssumptionViolated(f"queues receive no load: {idle}")


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _check_keys(obj: Any, allowed: set, required: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise MalformedConfig(f"{where} must be an object")
    unknown = set(obj) - allowed
    if unknown:
        raise MalformedConfig(f"unknown fields in {where}: {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise MalformedConfig(f"missing fields in {where}: {sorted(missing)}")


def _parse_queues(raw: Any) -> Tuple[Queue, ...]:
    if not isinstance(raw, list) or not raw:
        raise MalformedConfig("queues must be a nonempty list")
    queues = []
    for item in raw:
        _check_keys(item, QUEUE_KEYS, QUEUE_KEYS, "queue")
        if not all(isinstance(item[k], str) and item[k] for k in QUEUE_KEYS):
            raise MalformedConfig("queue link and dest must be nonempty strings")
        queues.append(Queue(item["link"], item["dest"]))
    if len(set(queues)) != len(queues):
        raise MalformedConfig("duplicate queues")
    return tuple(sorted(queues))


def _parse_flows(raw: Any, queue_ids: Sequence[str]) -> Tuple[FlowSpec, ...]:
    if not isinstance(raw, list) or not raw:
        raise MalformedConfig("flows must be a nonempty list")
    flows = []
    for item in raw:
        _check_keys(item, FLOW_KEYS, REQUIRED_FLOW_KEYS, "flow")
        for key in ("nu", "mu"):
            if not _is_number(item[key]) or not math.isfinite(item[key]):
                raise MalformedConfig(f"flow {key} must be a finite number")
        if not 0 < item["mu"] < 1:
            raise MalformedConfig(f"flow mu must lie in (0, 1), got {item['mu']}")
        if not all(isinstance(item[k], str) and item[k] for k in ("source_link", "dest")):
            raise MalformedConfig("flow source_link and dest must be nonempty strings")
        name = item.get("name", "")
        if not isinstance(name, str):
            raise MalformedConfig("flow name must be a string")
        flow = FlowSpec(item["source_link"], item["dest"],
                        float(item["nu"]), float(item["mu"]), name)
        if flow.ingress_id not in queue_ids:
            raise MalformedConfig(f"flow ingress queue {flow.ingress_id!r} is not declared")
        flows.append(flow)

    flows.sort(key=lambda f: (f.source_link, f.dest, f.name, f.nu, f.mu))
    named = []
    seen: Dict[str, int] = {}
    for flow in flows:
        base = flow.name or flow.ingress_id
        count = seen.get(base, 0)
        seen[base] = count + 1
        named.append(dataclasses.replace(flow, name=base if count == 0 else f"{base}#{count}"))
    if len(set(f.name for f in named)) != len(named):
        raise MalformedConfig("flow names must be unique")
    return tuple(named)


def build_network(config: Dict[str, Any], name: Optional[str] = None) -> Network:
    """Validate a topology document and build the Network."""
    _check_keys(config, TOPOLOGY_KEYS, REQUIRED_TOPOLOGY_KEYS, "topology")

    queues = _parse_queues(config["queues"])
    queue_ids = [queue.id for queue in queues]
    position = {qid: e for e, qid in enumerate(queue_ids)}
    size = len(queues)

    routing = np.zeros((size, size), dtype=np.int64)
    routes = config["routes"]
    if not isinstance(routes, list):
        raise MalformedConfig("routes must be a list")
    for route in routes:
        if not isinstance(route, list) or len(route) != 2:
            raise MalformedConfig("each route must be a [from_queue, to_queue] pair")
        source, target = route
        if source not in position or target not in position:
            raise MalformedConfig(f"route references unknown queue: {route}")
        if source == target:
            raise CyclicRouting(f"queue {source!r} routes to itself")
        if routing[position[source]].any():
            raise MalformedConfig(f"queue {source!r} has more than one next hop")
        routing[position[source], position[target]] = 1

    flows = _parse_flows(config["flows"], queue_ids)
    ingress = np.zeros((size, len(flows)), dtype=np.int64)
    for f, flow in enumerate(flows):
        ingress[position[flow.ingress_id], f] = 1

    capacity = config["C"]
    if not _is_number(capacity) or not math.isfinite(capacity) or capacity <= 0:
        raise MalformedConfig(f"C must be a positive number, got {capacity!r}")

    generators_raw = config["schedule_generators"]
    if not isinstance(generators_raw, list) or not generators_raw:
        raise MalformedConfig("schedule_generators must be a nonempty list")
    generators = []
    for members in generators_raw:
        if not isinstance(members, list):
            raise MalformedConfig("each schedule generator must be a list of queue ids")
        vector = [0] * size
        for qid in members:
            if qid not in position:
                raise MalformedConfig(f"schedule generator references unknown queue {qid!r}")
            vector[position[qid]] = 1
        generators.append(vector)
    schedules = monotone_closure(generators)

    xi = compute_xi(routing)

    covered = schedules.matrix().sum(axis=1)
    if np.any(covered == 0):
        missing = [queue_ids[e] for e in np.flatnonzero(covered == 0)]
        raise UnservedQueue(f"no schedule serves queues {missing}")

    label = config.get("name", name or "network")
    if not isinstance(label, str):
        raise MalformedConfig("topology name must be a string")

    net = Network(queues=queues, flows=flows, routing=routing, ingress=ingress, xi=xi,
                  schedules=schedules, C=float(capacity), name=label)
    check_load_assumptions(net)
    logger.info("Built network %s: |E|=%d |F|=%d |S|=%d", net.name,
                net.num_queues, net.num_flows, net.num_schedules)
    return net


def load_topology(path: str) -> Network:
    """Read a topology JSON file and build the Network."""
    if not os.path.isfile(path):
        raise MalformedConfig(f"topology file not found: {path}")
    try:
        with open(path, "r") as f:
            config = json.load(f)
    except (OSError, ValueError) as e:
        raise MalformedConfig(f"cannot read topology {path}: {e}")
    default_name = os.path.splitext(os.path.basename(path))[0]
    return build_network(config, name=default_name)
