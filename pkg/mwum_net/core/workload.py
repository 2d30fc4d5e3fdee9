"""Cost, Lyapunov and workload functionals for critically loaded networks.

Workloads are linear: w_zeta(n, q) = coef_n . n + coef_q . q with
coef_q = Xi^T zeta and coef_n[f] = coef_q[iota(f)] / mu_f.  The lifting map
minimizes L_alpha subject to not losing workload on any critical resource;
L_alpha is separable, so its dual has a closed-form inner minimizer.
"""

import math
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.capacity import VirtualResource, primal_value
from core.exceptions import NoConvergence, NotCritical
from core.lp_solver import EQ, GE, LinearProgram, solve_lp
from core.network import Network
from core.policy import schedule_weights
from utils.config import (DUAL_GRAD_TOL, INVARIANT_TOL, LIFT_MAX_ITERS,
                          PRIMAL_FEAS_TOL)

logger = logging.getLogger(__name__)

ZetaLike = Union[VirtualResource, Sequence[float], np.ndarray]

ARMIJO = 1e-4
BB_MIN, BB_MAX = 1e-10, 1e10


def _zeta(zeta: ZetaLike) -> np.ndarray:
    if isinstance(zeta, VirtualResource):
        return zeta.zeta
    return np.asarray(zeta, dtype=float)


def _state(n, q, net: Network) -> Tuple[np.ndarray, np.ndarray]:
    n = np.asarray(n, dtype=float).reshape(-1)
    q = np.asarray(q, dtype=float).reshape(-1)
    if n.size != net.num_flows or q.size != net.num_queues:
        raise ValueError(f"state must have {net.num_flows} flow counts and "
                         f"{net.num_queues} queue lengths")
    if np.any(n < 0) or np.any(q < 0) or not (np.all(np.isfinite(n)) and np.all(np.isfinite(q))):
        raise ValueError("state must be finite and nonnegative")
    return n, q


def lyapunov_weights(net: Network, alpha: float) -> np.ndarray:
    """Per-coordinate weights of L_alpha over (n, q)."""
    flow_weights = 1.0 / (net.mu * np.power(net.rho, alpha))
    return np.concatenate([flow_weights, np.ones(net.num_queues)])


def cost_weights(net: Network) -> np.ndarray:
    return np.concatenate([1.0 / net.mu, np.ones(net.num_queues)])


def lyapunov(n, q, net: Network, alpha: float) -> Tuple[float, float]:
    """L_alpha(n, q) and the normed version L^(1/(1+alpha))."""
    n, q = _state(n, q, net)
    y = np.concatenate([n, q])
    value = float(lyapunov_weights(net, alpha) @ np.power(y, 1.0 + alpha))
    return value, value ** (1.0 / (1.0 + alpha))


def cost(n, q, net: Network) -> float:
    """c(n, q) = sum n_f / mu_f + sum q_e."""
    n, q = _state(n, q, net)
    return float(cost_weights(net) @ np.concatenate([n, q]))


def workload_coefficients(zeta: ZetaLike, net: Network) -> np.ndarray:
    """Coefficients of w_zeta over the stacked state (n, q)."""
    v = net.xi.T @ _zeta(zeta)
    return np.concatenate([v[net.ingress_index] / net.mu, v])


def workload(zeta: ZetaLike, n, q, net: Network) -> float:
    """w_zeta = zeta^T Xi [q + Gamma diag(mu)^-1 n]."""
    n, q = _state(n, q, net)
    return float(workload_coefficients(zeta, net) @ np.concatenate([n, q]))


def workload_matrix(crstar: Sequence[ZetaLike], net: Network) -> np.ndarray:
    if not crstar:
        raise NotCritical("no critical resources supplied")
    return np.vstack([workload_coefficients(z, net) for z in crstar])


def effective_cost(n, q, net: Network, crstar: Sequence[ZetaLike]) -> float:
    """c*(n, q): cheapest state keeping every critical workload."""
    n, q = _state(n, q, net)
    W = workload_matrix(crstar, net)
    target = W @ np.concatenate([n, q])
    if not np.any(target > 0):
        return 0.0
    lp = LinearProgram(objective=cost_weights(net), A=W, senses=(GE,) * W.shape[0], b=target)
    return max(solve_lp(lp).value, 0.0)


def balance_factor(net: Network, rho: Sequence[float], crstar: Sequence[ZetaLike]) -> float:
    """gamma(rho): worst ratio c*(x)/c(x) over states x, as one LP over (x, x')."""
    W = workload_matrix(crstar, net)
    c = cost_weights(net)
    k, d = W.shape
    # variables: x (d), x' (d)
    dominance = np.hstack([-W, W])
    normalization = np.concatenate([c, np.zeros(d)])
    lp = LinearProgram(objective=np.concatenate([np.zeros(d), c]),
                       A=np.vstack([dominance, normalization]),
                       senses=(GE,) * k + (EQ,), b=np.concatenate([np.zeros(k), [1.0]]))
    gamma = solve_lp(lp).value
    gamma = min(max(gamma, 0.0), 1.0)
    logger.info("Balance factor of %s at rho=%s: %.12g", net.name,
                np.asarray(rho, dtype=float).tolist(), gamma)
    return gamma


@dataclass(frozen=True, eq=False)
class LiftResult:
    n: np.ndarray
    q: np.ndarray
    theta: np.ndarray
    iterations: int
    gradient_norm: float


def _inner_minimizer(theta: np.ndarray, W: np.ndarray, weights: np.ndarray,
                     alpha: float) -> np.ndarray:
    g = W.T @ theta
    y = np.zeros_like(g)
    positive = g > 0
    y[positive] = np.power(g[positive] / ((1.0 + alpha) * weights[positive]), 1.0 / alpha)
    return y


def _dual_value(theta, y, W, weights, alpha, target) -> float:
    return float(weights @ np.power(y, 1.0 + alpha) - theta @ (W @ y - target))


def _projected_gradient(theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
    return np.where(theta > 0, grad, np.maximum(grad, 0.0))


def lifting_map_detailed(n, q, net: Network, alpha: float, crstar: Sequence[ZetaLike],
                         theta0: Optional[Sequence[float]] = None,
                         max_iters: int = LIFT_MAX_ITERS,
                         tol: float = DUAL_GRAD_TOL) -> LiftResult:
    """Lifting map by spectral projected gradient ascent on the dual.

    The state is normalized to unit l1 norm first; the map is positively
    homogeneous, so the minimizer and multipliers are rescaled at the end.
    """
    n, q = _state(n, q, net)
    W = workload_matrix(crstar, net)
    weights = lyapunov_weights(net, alpha)
    y0 = np.concatenate([n, q])
    scale = float(y0.sum())
    F = net.num_flows
    if scale == 0.0:
        zeros = np.zeros(W.shape[0])
        return LiftResult(n=np.zeros(F), q=np.zeros(net.num_queues), theta=zeros,
                          iterations=0, gradient_norm=0.0)
    target = W @ (y0 / scale)

    if theta0 is not None:
        theta = np.maximum(np.asarray(theta0, dtype=float) / scale ** alpha, 0.0)
    else:
        theta = np.ones(W.shape[0])
    y = _inner_minimizer(theta, W, weights, alpha)
    grad = target - W @ y
    value = _dual_value(theta, y, W, weights, alpha, target)
    step = 1.0

    for iteration in range(1, max_iters + 1):
        pg = _projected_gradient(theta, grad)
        norm = float(np.linalg.norm(pg))
        if norm <= tol and np.min(W @ y - target) >= -PRIMAL_FEAS_TOL:
            logger.info("Lifting map converged in %d iterations (gradient %.3e)", iteration - 1, norm)
            return LiftResult(n=y[:F] * scale, q=y[F:] * scale, theta=theta * scale ** alpha,
                              iterations=iteration - 1, gradient_norm=norm)

        trial_step = step
        while True:
            candidate = np.maximum(theta + trial_step * grad, 0.0)
            y_new = _inner_minimizer(candidate, W, weights, alpha)
            value_new = _dual_value(candidate, y_new, W, weights, alpha, target)
            if value_new >= value + ARMIJO * grad @ (candidate - theta) or trial_step <= BB_MIN:
                break
            trial_step *= 0.5

        grad_new = target - W @ y_new
        s, g_diff = candidate - theta, grad_new - grad
        curvature = -float(s @ g_diff)
        step = float(s @ s) / curvature if curvature > 0 else BB_MAX
        step = min(max(step, BB_MIN), BB_MAX)
        theta, y, grad, value = candidate, y_new, grad_new, value_new

    raise NoConvergence(f"lifting map did not converge in {max_iters} iterations "
                        f"(projected gradient {np.linalg.norm(_projected_gradient(theta, grad)):.3e})")


def lifting_map(n, q, net: Network, alpha: float,
                crstar: Sequence[ZetaLike]) -> Tuple[np.ndarray, np.ndarray]:
    """Delta(n, q): the L_alpha-minimal state with at least the same critical workloads."""
    result = lifting_map_detailed(n, q, net, alpha, crstar)
    return result.n, result.q


def is_invariant(n, q, net: Network, alpha: float, tol: float = INVARIANT_TOL) -> bool:
    """Fixed-point test: Gamma rho priced at q^alpha attains the max schedule weight
    and every flow count equals rho_f times its ingress queue."""
    n, q = _state(n, q, net)
    powers = np.power(q, alpha)
    offered = float((net.ingress @ net.rho) @ powers)
    weights, _ = schedule_weights(q, alpha, net)
    best = float(max(weights))
    if abs(offered - best) > tol * (1.0 + max(abs(offered), abs(best))):
        return False
    expected = net.rho * q[net.ingress_index]
    return bool(np.all(np.abs(expected - n) <= tol * (1.0 + np.abs(n))))


def lift_distance(n, q, net: Network, alpha: float, crstar: Sequence[ZetaLike],
                  theta0: Optional[np.ndarray] = None) -> Tuple[float, np.ndarray]:
    """l1 distance to the lifted state, plus multipliers for warm starts."""
    result = lifting_map_detailed(n, q, net, alpha, crstar, theta0=theta0)
    n, q = _state(n, q, net)
    distance = float(np.abs(result.n - n).sum() + np.abs(result.q - q).sum())
    return distance, result.theta


def hitting_time(ftraj, eps: float, net: Network, alpha: float,
                 crstar: Sequence[ZetaLike]) -> Optional[float]:
    """First grid time after which the trajectory stays within eps of its lift."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    times = ftraj.times
    if math.isinf(eps):
        return float(times[0])
    first_inside = None
    theta = None
    for k in range(len(times) - 1, -1, -1):
        distance, theta = lift_distance(ftraj.n[k], ftraj.q[k], net, alpha, crstar, theta)
        if distance >= eps:
            break
        first_inside = k
    return None if first_inside is None else float(times[first_inside])


def beta_hat(alpha: float, net: Network) -> float:
    """Explicit upper bound on the cost inflation factor minus one; tends to 0 as alpha -> 0."""
    a = alpha / (1.0 + alpha)
    d = net.num_queues + net.num_flows
    ratios = np.concatenate([np.power(net.mu ** 2 / net.nu, a), [1.0]])
    return float(d ** a * ratios.max() / ratios.min() - 1.0)


def attractiveness(n, q, net: Network, alpha: float, crstar: Sequence[ZetaLike]) -> float:
    """L_alpha(x) - L_alpha(Delta(x)); zero exactly on invariant states."""
    lifted_n, lifted_q = lifting_map(n, q, net, alpha, crstar)
    before, _ = lyapunov(n, q, net, alpha)
    after, _ = lyapunov(lifted_n, lifted_q, net, alpha)
    return max(before - after, 0.0)


def algp_is_feasible(n, q, n_new, q_new, t: float, x, sigma, net: Network,
                     tol: float = 1e-7) -> bool:
    """Is (n', q', t, x, sigma) feasible for the reachable-state program from (n, q)?"""
    n, q = _state(n, q, net)
    n_new = np.asarray(n_new, dtype=float)
    q_new = np.asarray(q_new, dtype=float)
    x = np.asarray(x, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if t < 0 or np.any(n_new < -tol) or np.any(q_new < -tol):
        return False
    if np.any(x < -tol) or np.any(x > net.C + tol) or np.any(sigma < -tol):
        return False
    expected_n = n + t * (net.nu - net.mu * x)
    expected_q = q + t * (net.ingress @ x - net.I_minus_Rt @ sigma)
    scale = 1.0 + t
    if np.any(np.abs(expected_n - n_new) > tol * scale) or np.any(np.abs(expected_q - q_new) > tol * scale):
        return False
    return primal_value(np.maximum(sigma, 0.0), net) <= 1.0 + tol


def algp_witness(n, q, n_new, q_new, t: float, net: Network) -> Tuple[np.ndarray, np.ndarray]:
    """Rates x and service sigma that reach (n', q') from (n, q) in time t."""
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    n, q = _state(n, q, net)
    n_new, q_new = _state(n_new, q_new, net)
    x = (net.nu - (n_new - n) / t) / net.mu
    sigma = net.xi @ (net.ingress @ x - (q_new - q) / t)
    return x, sigma


def algd_is_feasible(n, q, n_new, q_new, net: Network, crstar: Sequence[ZetaLike],
                     tol: float = 1e-7) -> bool:
    """Workload dominance on every critical resource."""
    n, q = _state(n, q, net)
    n_new, q_new = _state(n_new, q_new, net)
    W = workload_matrix(crstar, net)
    before = W @ np.concatenate([n, q])
    after = W @ np.concatenate([n_new, q_new])
    return bool(np.all(after >= before - tol * (1.0 + np.abs(before))))


@dataclass(frozen=True)
class CostReport:
    L_alpha: float
    ell: float
    c: float
    c_star: float
    workloads: Dict[str, float]

    def to_dict(self) -> dict:
        return {"L_alpha": self.L_alpha, "ell": self.ell, "c": self.c,
                "c_star": self.c_star, "workloads": dict(self.workloads)}


def cost_report(n, q, net: Network, alpha: float, crstar: List[VirtualResource]) -> CostReport:
    L, ell = lyapunov(n, q, net, alpha)
    workloads = {}
    for resource in crstar:
        workloads[_label(resource)] = workload(resource, n, q, net)
    return CostReport(L_alpha=L, ell=ell, c=cost(n, q, net),
                      c_star=effective_cost(n, q, net, crstar), workloads=workloads)


def _label(zeta: ZetaLike) -> str:
    values = _zeta(zeta)
    return "(" + ",".join(f"{z:g}" for z in values) + ")"
