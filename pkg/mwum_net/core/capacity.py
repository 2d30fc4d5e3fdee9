"""Scheduling capacity: PRIMAL/DUAL programs, effective load and critical resources.

PRIMAL(lam) = min 1^T s  s.t.  Pi s >= lam, s >= 0
DUAL(lam)   = max lam^T z  s.t.  Pi^T z <= 1, z >= 0
"""

import math
import logging
import itertools
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import EnumerationLimitExceeded, NotCritical
from core.lp_solver import GE, LE, LinearProgram, solve_lp
from core.network import Network
from utils.config import LP_TOL, MAX_BASES

logger = logging.getLogger(__name__)


class Admissibility(str, Enum):
    STRICT = "strict"
    CRITICAL = "critical"
    INADMISSIBLE = "inadmissible"


@dataclass(frozen=True, eq=False)
class VirtualResource:
    """Extreme point zeta of the dual feasible polytope; v = Xi^T zeta."""
    zeta: np.ndarray
    is_critical: bool
    v: np.ndarray

    def to_dict(self) -> dict:
        return {"zeta": [float(z) for z in self.zeta], "is_critical": self.is_critical,
                "v": [float(x) for x in self.v]}

    def label(self) -> str:
        return "(" + ",".join(f"{z:g}" for z in self.zeta) + ")"


def packet_load(rho: Sequence[float], net: Network) -> np.ndarray:
    """Xi Gamma rho for an arbitrary load vector."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (net.num_flows,):
        raise ValueError(f"rho must have {net.num_flows} entries, got shape {rho.shape}")
    return net.xi @ (net.ingress @ rho)


def primal_lp(lam: Sequence[float], net: Network) -> LinearProgram:
    lam = np.asarray(lam, dtype=float)
    Pi = net.Pi.astype(float)
    return LinearProgram(objective=np.ones(net.num_schedules), A=Pi,
                         senses=(GE,) * net.num_queues, b=lam)


def dual_lp(lam: Sequence[float], net: Network) -> LinearProgram:
    lam = np.asarray(lam, dtype=float)
    Pi = net.Pi.astype(float)
    return LinearProgram(objective=lam, A=Pi.T, senses=(LE,) * net.num_schedules,
                         b=np.ones(net.num_schedules), maximize=True)


def primal_value(lam: Sequence[float], net: Network) -> float:
    return solve_lp(primal_lp(lam, net)).value


def dual_value(lam: Sequence[float], net: Network) -> float:
    return solve_lp(dual_lp(lam, net)).value


def classify(leff: float, tol: float = LP_TOL) -> Admissibility:
    if leff < 1.0 - tol:
        return Admissibility.STRICT
    if leff <= 1.0 + tol:
        return Admissibility.CRITICAL
    return Admissibility.INADMISSIBLE


def effective_load(rho: Sequence[float], net: Network) -> Tuple[float, Admissibility]:
    """Leff = PRIMAL(Xi Gamma rho) and its admissibility class."""
    leff = primal_value(packet_load(rho, net), net)
    if abs(leff - 1.0) <= LP_TOL:
        leff = 1.0
    status = classify(leff)
    logger.info("Effective load of %s: %.12g (%s)", net.name, leff, status.value)
    return leff, status


def _dual_vertices(rows: np.ndarray, max_bases: int) -> List[np.ndarray]:
    """Vertices of {z >= 0 : rows z <= 1} by exhaustive basis enumeration."""
    m, E = rows.shape
    constraints = np.vstack([rows, -np.eye(E)])
    rhs = np.concatenate([np.ones(m), np.zeros(E)])
    total = math.comb(m + E, E)
    if total > max_bases:
        raise EnumerationLimitExceeded(f"{total} candidate bases exceed the cap of {max_bases}")
    logger.debug("Enumerating %d candidate bases", total)

    vertices: List[np.ndarray] = []
    for active in itertools.combinations(range(m + E), E):
        block = constraints[list(active)]
        if abs(np.linalg.det(block)) <= LP_TOL:
            continue
        point = np.linalg.solve(block, rhs[list(active)])
        if np.all(constraints @ point <= rhs + LP_TOL):
            point[np.abs(point) <= LP_TOL] = 0.0
            if not any(np.allclose(point, seen, atol=LP_TOL, rtol=0) for seen in vertices):
                vertices.append(point)
    return vertices


def critical_resources(rho: Sequence[float], net: Network,
                       max_bases: Optional[int] = None) -> List[VirtualResource]:
    """CR*(rho): extreme points of the dual optimal face at critical load."""
    leff, status = effective_load(rho, net)
    if status is not Admissibility.CRITICAL:
        raise NotCritical(f"critical resources need Leff = 1, got {leff:.12g}")
    lam = packet_load(rho, net)
    rows = net.Pi[:, list(net.maximal_schedules)].T.astype(float)
    vertices = _dual_vertices(rows, MAX_BASES if max_bases is None else max_bases)

    critical = [z for z in vertices if abs(float(lam @ z) - 1.0) <= LP_TOL]
    critical.sort(key=lambda z: tuple(z.tolist()))
    resources = []
    for zeta in critical:
        zeta.flags.writeable = False
        v = net.xi.T @ zeta
        v.flags.writeable = False
        resources.append(VirtualResource(zeta=zeta, is_critical=True, v=v))
    logger.info("Found %d critical resources among %d dual vertices", len(resources), len(vertices))
    return resources


def is_dual_feasible(zeta: Sequence[float], net: Network, tol: float = LP_TOL) -> bool:
    zeta = np.asarray(zeta, dtype=float)
    return bool(np.all(zeta >= -tol) and np.all(net.Pi.T @ zeta <= 1.0 + tol))
