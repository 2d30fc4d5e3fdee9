"""Fluid model of the network under MWUM-alpha (or a round-robin comparator).

The integrator is explicit Euler with event location: inside a step it stops
at the first time a positive queue or flow count reaches zero and re-evaluates
the controls there.  Empty queues are served at exactly their inflow by
shifting schedule mass from pi to pi + {e}, which leaves every schedule weight
unchanged because e and its next hop are empty.
"""

import csv
import math
import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import InvalidHorizon, MalformedConfig, MwumNetError, StepTooLarge
from core.network import Network
from core.policy import PolicyParams, rate_allocation
from core.workload import lyapunov, workload
from utils.config import (CLIP_BUDGET, FLUID_SELECTION, H_MAX_NUMERATOR, MAX_SUBSTEPS, Q_FLOOR,
                          TRAJECTORY_SLACK_FACTOR)
from utils.helpers import format_row
from utils.validators import validate_state_vector

logger = logging.getLogger(__name__)

FLUID_POLICIES = ("mwum", "round_robin")
RESIDUAL_KEYS = ("F2", "F3", "F4", "F5", "F6", "F7", "F8")
DRIFT_BOUND_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class FluidState:
    """Fluid descriptor: levels n, q plus cumulative z, s, xbar, arrivals and departures.

    a_flow is the cumulative flow arrival (nu t), d the cumulative flow
    departure (mu xbar) and a the cumulative packet arrival (xbar).
    """
    t: float
    n: np.ndarray
    q: np.ndarray
    z: np.ndarray
    s: np.ndarray
    xbar: np.ndarray
    a_flow: np.ndarray
    d: np.ndarray
    a: np.ndarray

    @classmethod
    def initial(cls, n, q, net: Network) -> "FluidState":
        F, E, S = net.num_flows, net.num_queues, net.num_schedules
        return cls(t=0.0, n=validate_state_vector(n, F, "n").astype(float),
                   q=validate_state_vector(q, E, "q").astype(float),
                   z=np.zeros(E), s=np.zeros(S), xbar=np.zeros(F),
                   a_flow=np.zeros(F), d=np.zeros(F), a=np.zeros(F))


@dataclass(frozen=True)
class ProjectionEvent:
    t: float
    component: str
    index: int
    amount: float


@dataclass(frozen=True, eq=False)
class FluidTrajectory:
    times: np.ndarray
    n: np.ndarray
    q: np.ndarray
    z: np.ndarray
    s: np.ndarray
    xbar: np.ndarray
    a_flow: np.ndarray
    d: np.ndarray
    a: np.ndarray
    residuals: Dict[str, np.ndarray]
    projection_events: Tuple[ProjectionEvent, ...]
    h: float
    policy: str
    params: PolicyParams
    substeps: int = 0

    def __len__(self) -> int:
        return self.times.size

    def state(self, k: int) -> FluidState:
        return FluidState(t=float(self.times[k]), n=self.n[k], q=self.q[k], z=self.z[k],
                          s=self.s[k], xbar=self.xbar[k], a_flow=self.a_flow[k],
                          d=self.d[k], a=self.a[k])

    @property
    def final(self) -> FluidState:
        return self.state(len(self) - 1)

    def max_residual(self) -> float:
        return max(float(np.max(self.residuals[key], initial=0.0)) for key in RESIDUAL_KEYS[:-1])


@dataclass(frozen=True)
class Controls:
    x: np.ndarray          # per-flow rate
    mix: np.ndarray        # schedule time fractions, sums to 1
    idle: np.ndarray       # idleness rate per queue
    served: np.ndarray     # effective service per queue

    def n_dot(self, net: Network) -> np.ndarray:
        return net.nu - net.mu * self.x

    def q_dot(self, net: Network) -> np.ndarray:
        return net.ingress @ self.x - net.I_minus_Rt @ self.served


def h_max(net: Network) -> float:
    return H_MAX_NUMERATOR / (1.0 + net.C * net.num_flows + net.num_schedules)


def _check_policy(policy: str) -> str:
    if policy not in FLUID_POLICIES:
        raise MalformedConfig(f"unknown fluid policy {policy!r}; choose from {FLUID_POLICIES}")
    return policy


def _fluid_rates(n: np.ndarray, q: np.ndarray, net: Network, params: PolicyParams,
                 q_floor: float) -> np.ndarray:
    x = np.zeros(net.num_flows)
    for f in range(net.num_flows):
        qi = q[net.ingress_index[f]]
        if n[f] >= q_floor:
            x[f] = rate_allocation(n[f], qi, params)
        elif qi < q_floor:
            x[f] = net.rho[f]
    return x


def _argmax_mix(q_eff: np.ndarray, net: Network, params: PolicyParams) -> np.ndarray:
    """Uniform mass over the distinct shrunk schedules of the eps-argmax set."""
    weights = net.weight_matrix @ np.power(q_eff, params.alpha)
    best = float(weights.max())
    band = params.tol_tie * (1.0 + abs(best))
    nonempty = tuple(1 if v > 0 else 0 for v in q_eff)
    chosen = set()
    for k in np.flatnonzero(weights >= best - band):
        pi = net.schedules[int(k)]
        shrunk = tuple(a & b for a, b in zip(pi, nonempty))
        chosen.add(net.schedules.index_of(shrunk))
    mix = np.zeros(net.num_schedules)
    mix[sorted(chosen)] = 1.0 / len(chosen)
    return mix


def _upstream_served(e: int, served: np.ndarray, net: Network) -> float:
    return float(sum(served[j] for j in range(net.num_queues) if net.next_hop[j] == e))


def _boundary_service(mix: np.ndarray, x: np.ndarray, empty: np.ndarray, net: Network) -> np.ndarray:
    """Serve empty queues at their inflow by moving mass from pi to pi + {e}."""
    mix = mix.copy()
    exit_or_empty = [net.next_hop[e] < 0 or empty[net.next_hop[e]] for e in range(net.num_queues)]
    arrivals = net.ingress @ x
    for e in net.topological_order:
        if not empty[e] or not exit_or_empty[e]:
            continue
        served = net.Pi @ mix
        need = arrivals[e] + _upstream_served(e, served, net) - served[e]
        if need <= 0:
            continue
        donors = []
        for k in np.flatnonzero(mix > 0):
            pi = net.schedules[int(k)]
            if pi[e]:
                continue
            target = net.schedules.get_index(pi[:e] + (1,) + pi[e + 1:])
            if target is not None:
                donors.append((int(k), target))
        available = sum(mix[k] for k, _ in donors)
        if available <= 0:
            continue
        fraction = min(1.0, need / available)
        for k, target in donors:
            moved = fraction * mix[k]
            mix[k] -= moved
            mix[target] += moved
    return mix


def _controls(state: FluidState, net: Network, params: PolicyParams, policy: str,
              q_floor: float, selection: str) -> Controls:
    empty = state.q < q_floor
    if policy == "mwum":
        if selection != "uniform":
            raise MalformedConfig(f"unknown fluid selection rule {selection!r}")
        x = _fluid_rates(state.n, state.q, net, params, q_floor)
        q_eff = np.where(empty, 0.0, state.q)
        mix = _boundary_service(_argmax_mix(q_eff, net, params), x, empty, net)
        return Controls(x=x, mix=mix, idle=np.zeros(net.num_queues), served=net.Pi @ mix)

    x = np.array(net.rho, dtype=float)
    mix = np.zeros(net.num_schedules)
    maximal = list(net.maximal_schedules)
    mix[maximal] = 1.0 / len(maximal)
    offered = net.Pi @ mix
    served = offered.copy()
    arrivals = net.ingress @ x
    for e in net.topological_order:
        if empty[e]:
            served[e] = min(offered[e], arrivals[e] + _upstream_served(e, served, net))
    return Controls(x=x, mix=mix, idle=offered - served, served=served)


def _advance(state: FluidState, tau: float, controls: Controls, net: Network) -> FluidState:
    return FluidState(
        t=state.t + tau,
        n=state.n + tau * controls.n_dot(net),
        q=state.q + tau * controls.q_dot(net),
        z=state.z + tau * controls.idle,
        s=state.s + tau * controls.mix,
        xbar=state.xbar + tau * controls.x,
        a_flow=state.a_flow + tau * net.nu,
        d=state.d + tau * net.mu * controls.x,
        a=state.a + tau * controls.x,
    )


def _time_to_zero(levels: np.ndarray, rates: np.ndarray) -> Tuple[float, int]:
    best, index = math.inf, -1
    for i in np.flatnonzero((levels > 0) & (rates < 0)):
        when = levels[i] / -rates[i]
        if when < best:
            best, index = float(when), int(i)
    return best, index


def _step(state: FluidState, h: float, net: Network, params: PolicyParams, policy: str,
          q_floor: float, clip_budget: float, max_substeps: int,
          selection: str) -> Tuple[FluidState, List[ProjectionEvent], int]:
    remaining = h
    substeps = 0
    while remaining > 0:
        controls = _controls(state, net, params, policy, q_floor, selection)
        n_dot, q_dot = controls.n_dot(net), controls.q_dot(net)
        if substeps >= max_substeps:
            return _project(state, remaining, controls, net, clip_budget) + (substeps,)
        tn, fn = _time_to_zero(state.n, n_dot)
        tq, eq = _time_to_zero(state.q, q_dot)
        hit = min(tn, tq)
        if hit >= remaining:
            return _advance(state, remaining, controls, net), [], substeps
        state = _advance(state, hit, controls, net)
        if tq <= tn:
            q = state.q.copy()
            q[eq] = 0.0
            state = replace(state, q=q)
        else:
            n = state.n.copy()
            n[fn] = 0.0
            state = replace(state, n=n)
        logger.debug("Event located at t=%.12g", state.t)
        remaining -= hit
        substeps += 1
    return state, [], substeps


def _project(state: FluidState, tau: float, controls: Controls, net: Network,
             clip_budget: float) -> Tuple[FluidState, List[ProjectionEvent]]:
    """Euler step with projection onto n, q >= 0 and a clip budget per coordinate."""
    moved = _advance(state, tau, controls, net)
    events: List[ProjectionEvent] = []
    levels = {"n": moved.n.copy(), "q": moved.q.copy()}
    steps = {"n": np.abs(tau * controls.n_dot(net)), "q": np.abs(tau * controls.q_dot(net))}
    for name, values in levels.items():
        for i in np.flatnonzero(values < 0):
            clip = -float(values[i])
            if clip > clip_budget * steps[name][i]:
                raise StepTooLarge(f"projection of {name}[{i}] by {clip:.3e} exceeds "
                                   f"{clip_budget:.0%} of the step at t={moved.t:.6g}")
            values[i] = 0.0
            events.append(ProjectionEvent(moved.t, name, int(i), clip))
            logger.warning("Projection clip %s[%d] by %.3e at t=%.6g", name, i, clip, moved.t)
    return replace(moved, n=levels["n"], q=levels["q"]), events


def fluid_step(state: FluidState, h: float, net: Network, params: PolicyParams,
               policy: str = "mwum", q_floor: float = Q_FLOOR,
               clip_budget: float = CLIP_BUDGET, max_substeps: int = MAX_SUBSTEPS,
               selection: str = FLUID_SELECTION) -> FluidState:
    """One fluid step of length h."""
    if not h > 0 or not math.isfinite(h):
        raise StepTooLarge(f"step must be positive and finite, got {h}")
    if h > h_max(net) * (1.0 + 1e-12):
        raise StepTooLarge(f"step {h} exceeds h_max={h_max(net):.6g}")
    new_state, _, _ = _step(state, h, net, params, _check_policy(policy), q_floor,
                            clip_budget, max_substeps, selection)
    return new_state


def drift_L(state: FluidState, net: Network, params: PolicyParams, policy: str = "mwum",
            q_floor: float = Q_FLOOR, selection: str = FLUID_SELECTION) -> float:
    """d/dt L_alpha at the state, with the controls fluid_step would use."""
    controls = _controls(state, net, params, _check_policy(policy), q_floor, selection)
    alpha = params.alpha
    flow_terms = np.power(state.n, alpha) * controls.n_dot(net) / (net.mu * np.power(net.rho, alpha))
    queue_terms = np.power(state.q, alpha) * controls.q_dot(net)
    return float((1.0 + alpha) * (flow_terms.sum() + queue_terms.sum()))


def drift_bound(q, net: Network, alpha: float, leff: float) -> float:
    """Upper bound on d/dt L_alpha under MWUM when Leff <= 1:
    -(1 + alpha)(1 - Leff) * sum_e q_e^alpha / |E|^2."""
    if leff > 1.0:
        raise ValueError(f"the drift bound needs Leff <= 1, got {leff}")
    q = validate_state_vector(q, net.num_queues, "q").astype(float)
    return float(-(1.0 + alpha) * (1.0 - leff) * np.power(q, alpha).sum() / net.num_queues ** 2)


def _residuals(state: FluidState, previous: FluidState, n0: np.ndarray, q0: np.ndarray,
               net: Network) -> Dict[str, float]:
    q_expected = (q0 - net.I_minus_Rt @ (net.Pi @ state.s) + net.I_minus_Rt @ state.z
                  + net.ingress @ state.a)
    increments = np.concatenate([state.z - previous.z, state.s - previous.s])
    return {
        "F2": float(np.abs(state.n - (n0 + state.a_flow - state.d)).max(initial=0.0)),
        "F3": float(np.abs(state.a_flow - net.nu * state.t).max(initial=0.0)),
        "F4": float(np.abs(state.d - net.mu * state.xbar).max(initial=0.0)),
        "F5": float(np.abs(state.a - state.xbar).max(initial=0.0)),
        "F6": float(np.abs(state.q - q_expected).max(initial=0.0)),
        "F7": abs(float(state.s.sum()) - state.t),
        "F8": float(increments.min(initial=0.0)),
    }


def integrate(initial: FluidState, T: float, h: float, net: Network, params: PolicyParams,
              policy: str = "mwum", sample_every: int = 1, q_floor: float = Q_FLOOR,
              clip_budget: float = CLIP_BUDGET, max_substeps: int = MAX_SUBSTEPS,
              selection: str = FLUID_SELECTION) -> FluidTrajectory:
    """Integrate on the grid 0, h, 2h, ..., T, keeping every sample_every-th point."""
    if not isinstance(T, (int, float)) or not math.isfinite(T) or T <= 0:
        raise InvalidHorizon(f"horizon must be positive and finite, got {T!r}")
    if not h > 0 or h > h_max(net) * (1.0 + 1e-12):
        raise StepTooLarge(f"step {h} must lie in (0, h_max={h_max(net):.6g}]")
    if int(sample_every) != sample_every or sample_every < 1:
        raise MalformedConfig(f"sample_every must be a positive integer, got {sample_every!r}")
    policy = _check_policy(policy)

    num_steps = max(1, int(math.ceil(T / h - 1e-9)))
    n0, q0 = initial.n.copy(), initial.q.copy()
    samples: List[FluidState] = [initial]
    residuals: Dict[str, List[float]] = {key: [0.0] for key in RESIDUAL_KEYS}
    projections: List[ProjectionEvent] = []
    state, previous = initial, initial
    total_substeps = 0

    for k in range(1, num_steps + 1):
        step = h if k < num_steps else T - (num_steps - 1) * h
        if step <= 0:
            break
        state, clipped, substeps = _step(state, step, net, params, policy, q_floor,
                                         clip_budget, max_substeps, selection)
        state = replace(state, t=min(k * h, T))
        projections.extend(clipped)
        total_substeps += substeps
        if k % sample_every == 0 or k == num_steps:
            for key, value in _residuals(state, previous, n0, q0, net).items():
                residuals[key].append(value)
            samples.append(state)
            previous = state

    logger.info("Fluid integration (%s) finished: %d steps, %d located events, %d projections",
                policy, num_steps, total_substeps, len(projections))

    def stack(name: str) -> np.ndarray:
        return np.vstack([getattr(sample, name) for sample in samples])

    return FluidTrajectory(
        times=np.array([sample.t for sample in samples]),
        n=stack("n"), q=stack("q"), z=stack("z"), s=stack("s"), xbar=stack("xbar"),
        a_flow=stack("a_flow"), d=stack("d"), a=stack("a"),
        residuals={key: np.array(values) for key, values in residuals.items()},
        projection_events=tuple(projections), h=float(h), policy=policy, params=params,
        substeps=total_substeps,
    )


def monotonicity_report(ftraj: FluidTrajectory, net: Network,
                        crstar: Optional[Sequence] = None,
                        slack_factor: float = TRAJECTORY_SLACK_FACTOR,
                        leff: Optional[float] = None,
                        drift_tol: float = DRIFT_BOUND_TOL) -> Dict[str, object]:
    """L_alpha should not increase and critical workloads should not decrease
    between samples, up to slack_factor * h.  With Leff <= 1 on an MWUM
    trajectory the sampled drift is also checked against drift_bound."""
    slack = slack_factor * ftraj.h
    alpha = ftraj.params.alpha
    lyap = np.array([lyapunov(ftraj.n[k], ftraj.q[k], net, alpha)[0] for k in range(len(ftraj))])
    increase = float(np.max(np.diff(lyap), initial=0.0))
    report: Dict[str, object] = {"slack": slack, "max_lyapunov_increase": increase,
                                 "lyapunov_nonincreasing": increase <= slack}
    if crstar:
        decrease = 0.0
        for zeta in crstar:
            values = np.array([workload(zeta, ftraj.n[k], ftraj.q[k], net)
                               for k in range(len(ftraj))])
            decrease = max(decrease, float(np.max(-np.diff(values), initial=0.0)))
        report["max_workload_decrease"] = decrease
        report["workload_nondecreasing"] = decrease <= slack
    if leff is not None and leff <= 1.0 + 1e-9 and ftraj.policy == "mwum":
        leff = min(leff, 1.0)
        excess = max((drift_L(ftraj.state(k), net, ftraj.params)
                      - drift_bound(ftraj.q[k], net, alpha, leff)) / (1.0 + lyap[k])
                     for k in range(len(ftraj)))
        report["max_drift_excess"] = float(excess)
        report["drift_bound_holds"] = bool(excess <= drift_tol)
    return report


def residual_summary(ftraj: FluidTrajectory) -> Dict[str, float]:
    summary = {key: float(np.max(ftraj.residuals[key], initial=0.0)) for key in RESIDUAL_KEYS[:-1]}
    summary["F8"] = float(np.min(ftraj.residuals["F8"], initial=0.0))
    summary["projection_events"] = len(ftraj.projection_events)
    summary["located_events"] = ftraj.substeps
    return summary


def write_fluid_csv(ftraj: FluidTrajectory, filepath: str, net: Network, alpha: float,
                    crstar: Optional[Sequence] = None) -> str:
    """CSV with t, n[...], q[...], L_alpha, drift and one workload column per resource."""
    crstar = list(crstar or [])
    params = replace(ftraj.params, alpha=alpha)
    header = (["t"] + [f"n[{name}]" for name in net.flow_names]
              + [f"q[{qid}]" for qid in net.queue_ids] + ["L_alpha", "drift"]
              + [f"w[{_zeta_label(z)}]" for z in crstar])
    try:
        with open(filepath, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for k in range(len(ftraj)):
                state = ftraj.state(k)
                L, _ = lyapunov(state.n, state.q, net, alpha)
                row = [state.t] + state.n.tolist() + state.q.tolist()
                row += [L, drift_L(state, net, params, policy=ftraj.policy)]
                row += [workload(z, state.n, state.q, net) for z in crstar]
                writer.writerow(format_row(row))
    except OSError as e:
        raise MwumNetError(f"Failed to write fluid trajectory: {e}")
    return filepath


def _zeta_label(zeta) -> str:
    values = getattr(zeta, "zeta", zeta)
    return "(" + ",".join(f"{v:g}" for v in values) + ")"


def plot_fluid_trajectory(ftraj: FluidTrajectory, filepath: str, net: Network) -> str:
    """PNG with flow counts, queue lengths and L_alpha over time."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    alpha = ftraj.params.alpha
    lyap = [lyapunov(ftraj.n[k], ftraj.q[k], net, alpha)[0] for k in range(len(ftraj))]

    fig, axes = plt.subplots(3, 1, figsize=(10, 9), sharex=True)
    fig.suptitle(f"{net.name}: {ftraj.policy} fluid trajectory (alpha={alpha:g})")
    for f, name in enumerate(net.flow_names):
        axes[0].plot(ftraj.times, ftraj.n[:, f], label=name)
    axes[0].set_ylabel("flows n")
    for e, qid in enumerate(net.queue_ids):
        axes[1].plot(ftraj.times, ftraj.q[:, e], label=qid)
    axes[1].set_ylabel("queues q")
    axes[2].plot(ftraj.times, lyap, color="black")
    axes[2].set_ylabel("L_alpha")
    axes[2].set_xlabel("t")
    for ax in axes[:2]:
        ax.legend(loc="upper right")
    for ax in axes:
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    try:
        fig.savefig(filepath, dpi=150)
    except OSError as e:
        raise MwumNetError(f"Failed to save plot: {e}")
    finally:
        plt.close(fig)
    return filepath
