import math
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.exceptions import MalformedConfig
from core.network import Network
from utils.config import DEFAULT_ALPHA, TIE_BREAK, TOL_TIE, WEIGHT_ABS_TOL

logger = logging.getLogger(__name__)

TIE_BREAK_RULES = ("lexicographic",)


@dataclass(frozen=True)
class PolicyParams:
    """MWUM-alpha parameters.

    alpha = 1 is read as the logarithmic (proportional-fair) member of the
    alpha-fair family; the rate maximizer is the same closed form.
    """
    alpha: float
    C: float
    tie_break: str = TIE_BREAK
    tol_tie: float = TOL_TIE

    def __post_init__(self):
        if not _finite_number(self.alpha) or self.alpha <= 0:
            raise MalformedConfig(f"alpha must be positive, got {self.alpha!r}")
        if not _finite_number(self.C) or self.C <= 0:
            raise MalformedConfig(f"C must be positive, got {self.C!r}")
        if self.tie_break not in TIE_BREAK_RULES:
            raise MalformedConfig(f"unknown tie_break {self.tie_break!r}")
        if not _finite_number(self.tol_tie) or self.tol_tie < 0:
            raise MalformedConfig(f"tol_tie must be nonnegative, got {self.tol_tie!r}")

    @classmethod
    def for_network(cls, net: Network, alpha: Optional[float] = None, **kwargs) -> "PolicyParams":
        """Parameters with C taken from the network."""
        return cls(alpha=DEFAULT_ALPHA if alpha is None else float(alpha), C=net.C, **kwargs)


def _finite_number(value: Any) -> bool:
    return (isinstance(value, (int, float, np.integer, np.floating))
            and not isinstance(value, bool) and math.isfinite(float(value)))


def rate_allocation(n: float, q: float, params: PolicyParams) -> float:
    """Per-flow rate maximizing the alpha-fair objective against price q^alpha."""
    if n <= 0:
        return 0.0
    if q <= 0 or n >= params.C * q:
        return float(params.C)
    return n / q


def rate_objective(x, n: float, q: float, alpha: float):
    """x^(1-a) n^a / (1-a) - q^a x; at a = 1 the log form n log x - q x."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if alpha == 1:
            utility = np.where(x > 0, n * np.log(np.where(x > 0, x, 1.0)),
                               -np.inf if n > 0 else 0.0)
        else:
            utility = np.power(x, 1.0 - alpha) * (n ** alpha) / (1.0 - alpha)
            if n == 0:
                utility = np.zeros_like(x)
            elif alpha > 1:
                utility = np.where(x > 0, utility, -np.inf)
        return utility - (q ** alpha) * x


def queue_powers(q: Sequence[float], alpha: float) -> Union[List[int], np.ndarray]:
    """q^alpha; exact Python integers when q is integral and alpha is an integer."""
    array = np.asarray(q)
    if np.issubdtype(array.dtype, np.integer) and float(alpha).is_integer():
        power = int(alpha)
        return [int(v) ** power for v in array]
    return np.power(array.astype(float), alpha)


def schedule_weight(pi: Sequence[int], q: Sequence[float], alpha: float, R: np.ndarray):
    """pi^T (I - R) q^alpha."""
    powers = queue_powers(q, alpha)
    size = len(pi)
    total = 0
    for e in range(size):
        if pi[e]:
            contribution = powers[e]
            for target in np.flatnonzero(R[e]):
                contribution = contribution - powers[int(target)]
            total = total + contribution
    return total if isinstance(total, int) else float(total)


def schedule_weights(q: Sequence[float], alpha: float, net: Network):
    """Weights of every schedule in canonical order, plus whether they are exact."""
    powers = queue_powers(q, alpha)
    if isinstance(powers, list):
        matrix = net.weight_matrix
        weights = [sum(int(c) * powers[e] for e, c in enumerate(row) if c) for row in matrix]
        return weights, True
    return net.weight_matrix @ powers, False


def select_schedule_index(q: Sequence[float], params: PolicyParams, net: Network) -> int:
    """Canonical index of the max-weight schedule supported on nonempty queues."""
    weights, exact = schedule_weights(q, params.alpha, net)
    best = max(weights)
    tol = 0 if exact else WEIGHT_ABS_TOL
    nonempty = tuple(1 if v > 0 else 0 for v in q)
    schedules = net.schedules
    chosen = None
    for k, pi in enumerate(schedules.elements):
        if weights[k] < best - tol:
            continue
        shrunk = tuple(a & b for a, b in zip(pi, nonempty))
        j = schedules.get_index(shrunk)
        if j is None or weights[j] < best - tol:
            continue
        if chosen is None or j < chosen:
            chosen = j
    if chosen is None:
        # unreachable for monotone schedule sets
        chosen = int(np.argmax(weights))
    return chosen


def select_schedule(q: Sequence[float], params: PolicyParams, net: Network) -> Tuple[int, ...]:
    """Max-weight-alpha schedule with empty-queue shrink and lexicographic tie-break."""
    return net.schedules[select_schedule_index(q, params, net)]


class ControlPolicy(ABC):
    """Abstract base class for packet-level control policies."""

    def __init__(self, net: Network, params: PolicyParams):
        self.net = net
        self.params = params

    @abstractmethod
    def get_name(self) -> str:
        """Return the policy name."""
        pass

    @abstractmethod
    def rates(self, N: np.ndarray, Q: np.ndarray) -> np.ndarray:
        """Packet generation rate X_f for every flow type."""
        pass

    @abstractmethod
    def schedule(self, Q: np.ndarray, slot: int) -> int:
        """Canonical index of the schedule used in the given slot."""
        pass

    def is_non_idling(self) -> bool:
        return True

    def get_default_parameters(self) -> Dict[str, Any]:
        return {"alpha": self.params.alpha, "C": self.params.C,
                "tie_break": self.params.tie_break}


class MWUMPolicy(ControlPolicy):
    """alpha-fair rates plus max-weight-alpha back-pressure scheduling."""

    def get_name(self) -> str:
        return "mwum"

    def rates(self, N: np.ndarray, Q: np.ndarray) -> np.ndarray:
        ingress = self.net.ingress_index
        return np.array([rate_allocation(N[f], Q[ingress[f]], self.params)
                         for f in range(self.net.num_flows)], dtype=float)

    def schedule(self, Q: np.ndarray, slot: int) -> int:
        return select_schedule_index(Q, self.params, self.net)


class RoundRobinPolicy(ControlPolicy):
    """Cycles through maximal schedules; flows send at their offered load."""

    def get_name(self) -> str:
        return "round_robin"

    def rates(self, N: np.ndarray, Q: np.ndarray) -> np.ndarray:
        return np.where(np.asarray(N) > 0, self.net.rho, 0.0).astype(float)

    def schedule(self, Q: np.ndarray, slot: int) -> int:
        maximal = self.net.maximal_schedules
        pi = self.net.schedules[maximal[slot % len(maximal)]]
        shrunk = tuple(bit if Q[e] > 0 else 0 for e, bit in enumerate(pi))
        return self.net.schedules.index_of(shrunk)


class IdlingTestPolicy(MWUMPolicy):
    """MWUM rates, but always the largest maximal schedule, even on empty queues."""

    def get_name(self) -> str:
        return "idling"

    def is_non_idling(self) -> bool:
        return False

    def schedule(self, Q: np.ndarray, slot: int) -> int:
        maximal = self.net.maximal_schedules
        sizes = [sum(self.net.schedules[k]) for k in maximal]
        return maximal[int(np.argmax(sizes))]


class PolicyFactory:
    """Factory class for creating control policy instances."""

    _POLICIES = {
        "mwum": MWUMPolicy,
        "round_robin": RoundRobinPolicy,
        "idling": IdlingTestPolicy,
    }

    @staticmethod
    def create_policy(policy_type: str, net: Network, params: PolicyParams) -> ControlPolicy:
        """Create a policy instance by name."""
        key = policy_type.lower()
        if key not in PolicyFactory._POLICIES:
            raise MalformedConfig(f"Unsupported policy: {policy_type}")
        return PolicyFactory._POLICIES[key](net, params)

    @staticmethod
    def get_available_policies() -> List[str]:
        return sorted(PolicyFactory._POLICIES)

    @staticmethod
    def get_policy_info(policy_type: str) -> Dict[str, str]:
        descriptions = {
            "mwum": "alpha-fair rate allocation with max-weight-alpha scheduling",
            "round_robin": "offered-load rates with cyclic maximal schedules",
            "idling": "test policy that schedules empty queues",
        }
        key = policy_type.lower()
        if key not in descriptions:
            raise MalformedConfig(f"Unsupported policy: {policy_type}")
        return {"name": key, "description": descriptions[key]}
