"""Subcommand implementations. Each takes a RunConfig, writes its artifacts
plus a manifest into the output directory and returns the JSON report."""

import csv
import math
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from core.capacity import Admissibility, critical_resources, effective_load
from core.exceptions import MalformedConfig, MwumNetError, NotCritical
from core.experiment_manager import ExperimentManager
from core.fluid import (FluidState, h_max, integrate, monotonicity_report, plot_fluid_trajectory,
                        residual_summary, write_fluid_csv)
from core.network import Network, load_topology
from core.policy import PolicyFactory, PolicyParams
from core.run_manager import RunManager
from core.simulator import simulate, stability_statistics, verify_conservation
from core.trajectory_io import write_conservation_report, write_event_log, write_snapshot_csv
from core.workload import (attractiveness, balance_factor, beta_hat, cost, cost_report,
                           effective_cost, hitting_time, is_invariant, lift_distance,
                           lifting_map_detailed)
from utils.config import REPRODUCIBLE
from utils.helpers import format_row, validate_file_exists
from utils.validators import (validate_alpha, validate_positive, validate_scales, validate_seeds,
                              validate_state_vector)

logger = logging.getLogger(__name__)

DEFAULT_HORIZONS = {"simulate": 1000.0, "fluid": 10.0, "compare": 1.0, "balance": 50.0,
                    "stability": 10000.0}
# shared by both invariance tests on the invariant grid
GRID_MATCH_TOL = 1e-6


@dataclass
class RunConfig:
    """Validated parameters of one CLI invocation."""
    command: str
    topology: str
    out: str
    alpha: Optional[float] = None
    capacity: Optional[float] = None
    load_scale: Optional[float] = None
    horizon: Optional[float] = None
    step: Optional[float] = None
    scales: List[float] = field(default_factory=list)
    seeds: List[int] = field(default_factory=list)
    kappas: List[float] = field(default_factory=list)
    seed: Optional[int] = None
    eps: float = 0.05
    n0: Optional[List[float]] = None
    q0: Optional[List[float]] = None
    policy: str = "mwum"
    sample_every: int = 1
    events: bool = False
    plot: bool = False
    grid_points: int = 25
    reproducible: bool = REPRODUCIBLE

    def validate(self) -> "RunConfig":
        """Range-check every parameter before any work starts."""
        if not validate_file_exists(self.topology):
            raise MalformedConfig(f"topology file not found: {self.topology}")
        try:
            if self.alpha is not None:
                validate_alpha(self.alpha)
            for name in ("capacity", "load_scale", "horizon", "step"):
                value = getattr(self, name)
                if value is not None:
                    validate_positive(value, name)
            if self.scales:
                validate_scales(self.scales)
            if self.seeds:
                validate_seeds(self.seeds)
            for kappa in self.kappas:
                validate_positive(kappa, "kappa")
            if self.seed is not None and self.seed < 0:
                raise ValueError("seed must be a nonnegative integer")
            if not self.eps > 0:
                raise ValueError(f"eps must be positive, got {self.eps}")
            if self.sample_every < 1 or self.grid_points < 1:
                raise ValueError("sample-every and grid-points must be >= 1")
        except ValueError as e:
            raise MalformedConfig(str(e))
        return self

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.pop("out")
        if math.isinf(self.eps):
            data["eps"] = "inf"
        return data

    def horizon_or_default(self) -> float:
        return self.horizon if self.horizon is not None else DEFAULT_HORIZONS.get(self.command, 10.0)


def load_network(config: RunConfig) -> Network:
    net = load_topology(config.topology)
    if config.capacity is not None:
        net = net.with_capacity(config.capacity)
    if config.load_scale is not None:
        net = net.with_load_scale(config.load_scale)
    return net


def policy_params(config: RunConfig, net: Network) -> PolicyParams:
    return PolicyParams.for_network(net, config.alpha)


def initial_state(config: RunConfig, net: Network):
    try:
        n0 = validate_state_vector(config.n0, net.num_flows, "n0")
        q0 = validate_state_vector(config.q0, net.num_queues, "q0")
    except ValueError as e:
        raise MalformedConfig(str(e))
    return n0.astype(float), q0.astype(float)


def fluid_step_size(config: RunConfig, net: Network) -> float:
    return config.step if config.step is not None else h_max(net)


def _start(config: RunConfig) -> RunManager:
    runner = RunManager(config.out, config.command, config.to_dict(), config.topology)
    runner.create_run_directory()
    return runner


def _finish(runner: RunManager, report: Dict[str, Any]) -> Dict[str, Any]:
    runner.summary = report
    runner.write_manifest()
    stale = sorted(name for name, intact in runner.verify_artifacts().items() if not intact)
    if stale:
        raise MwumNetError(f"Failed to verify artifacts: {', '.join(stale)}")
    return report


def _write_csv(runner: RunManager, filename: str, header: List[str], rows: List[List[Any]]) -> str:
    path = runner.artifact_path(filename)
    try:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for row in rows:
                writer.writerow(format_row(row))
    except OSError as e:
        raise MwumNetError(f"Failed to write {filename}: {e}")
    return runner.register_artifact(path)


def _critical_or_none(net: Network):
    leff, status = effective_load(net.rho, net)
    if status is Admissibility.CRITICAL:
        return leff, status, critical_resources(net.rho, net)
    return leff, status, []


def _require_critical(net: Network):
    leff, status, crstar = _critical_or_none(net)
    if not crstar:
        raise NotCritical(f"{net.name} is {status.value} (Leff={leff:.12g}); a critical load is required")
    return crstar


def cmd_capacity(config: RunConfig) -> Dict[str, Any]:
    net = load_network(config)
    runner = _start(config)
    leff, status, crstar = _critical_or_none(net)
    report: Dict[str, Any] = {"Leff": leff, "class": status.value}
    if crstar:
        report["CRstar"] = [[float(z) for z in r.zeta] for r in crstar]
        report["gamma"] = balance_factor(net, net.rho, crstar)
    runner.write_json("capacity.json", report)
    return _finish(runner, report)


def cmd_simulate(config: RunConfig) -> Dict[str, Any]:
    net = load_network(config)
    params = policy_params(config, net)
    n0, q0 = initial_state(config, net)
    try:
        n0 = validate_state_vector(n0, net.num_flows, "n0", integral=True)
        q0 = validate_state_vector(q0, net.num_queues, "q0", integral=True)
    except ValueError as e:
        raise MalformedConfig(str(e))
    policy = PolicyFactory.create_policy(config.policy, net, params)
    traj = simulate(net, params, config.horizon_or_default(), seed=config.seed,
                    initial_n=n0, initial_q=q0, policy=policy,
                    reproducible=config.reproducible, record_events=True)
    runner = _start(config)
    runner.add_seeds([traj.seed])
    runner.register_artifact(write_snapshot_csv(traj, runner.artifact_path("snapshots.csv")))
    if config.events:
        runner.register_artifact(write_event_log(traj, runner.artifact_path("events.jsonl")))
    conservation = verify_conservation(traj)
    runner.register_artifact(write_conservation_report(conservation,
                                                      runner.artifact_path("conservation.json")))
    report = {
        "seed": traj.seed,
        "policy": traj.policy,
        "policy_info": PolicyFactory.get_policy_info(config.policy),
        "horizon": traj.horizon,
        "slots": traj.last_slot,
        "events": len(traj.events),
        "final_N": traj.final.N.tolist(),
        "final_Q": traj.final.Q.tolist(),
        "idle_total": conservation.idle_total,
        "conservation_passed": conservation.passed,
    }
    if traj.last_slot >= 4:
        report["stability"] = stability_statistics(traj)
    return _finish(runner, report)


def cmd_fluid(config: RunConfig) -> Dict[str, Any]:
    net = load_network(config)
    params = policy_params(config, net)
    n0, q0 = initial_state(config, net)
    if config.policy not in ("mwum", "round_robin"):
        raise MalformedConfig(f"fluid policy must be mwum or round_robin, got {config.policy!r}")
    ftraj = integrate(FluidState.initial(n0, q0, net), config.horizon_or_default(),
                      fluid_step_size(config, net), net, params, policy=config.policy,
                      sample_every=config.sample_every)
    leff, _, crstar = _critical_or_none(net)
    runner = _start(config)
    runner.register_artifact(write_fluid_csv(ftraj, runner.artifact_path("fluid.csv"), net,
                                             params.alpha, crstar))
    residuals = residual_summary(ftraj)
    runner.write_json("residuals.json", residuals)
    if config.plot:
        runner.register_artifact(plot_fluid_trajectory(ftraj, runner.artifact_path("fluid.png"), net))
    final = ftraj.final
    report = {"policy": ftraj.policy, "h": ftraj.h, "samples": len(ftraj),
              "final_n": final.n.tolist(), "final_q": final.q.tolist(),
              "final_cost": cost(final.n, final.q, net), "residuals": residuals,
              "monotonicity": monotonicity_report(ftraj, net, crstar, leff=leff)}
    return _finish(runner, report)


def cmd_compare(config: RunConfig) -> Dict[str, Any]:
    if len(config.scales) < 2:
        raise MalformedConfig("compare needs at least two --scales values")
    if not config.seeds:
        raise MalformedConfig("compare needs --seeds; fluid-only mode is not supported")
    net = load_network(config)
    params = policy_params(config, net)
    n0, q0 = initial_state(config, net)
    ftraj = integrate(FluidState.initial(n0, q0, net), config.horizon_or_default(),
                      fluid_step_size(config, net), net, params, sample_every=config.sample_every)
    runs, summary = ExperimentManager().compare(net, params, n0, q0, ftraj,
                                                config.scales, config.seeds)
    runner = _start(config)
    runner.add_seeds(config.seeds)
    _write_csv(runner, "compare_runs.csv", ["r", "seed", "distance", "events", "conserved"],
               [[row["r"], row["seed"], row["distance"], row["events"], row["conserved"]]
                for row in runs])
    _write_csv(runner, "compare.csv", ["r", "runs", "mean_distance", "max_distance"],
               [[row["r"], row["runs"], row["mean_distance"], row["max_distance"]]
                for row in summary])
    return _finish(runner, {"summary": summary, "fluid_samples": len(ftraj)})


def _grid_states(net: Network, alpha: float, crstar, count: int, seed: int):
    """Pairs of (raw state, its lift): raw states are generally not invariant, lifts are."""
    rng = np.random.default_rng(seed)
    for k in range(count):
        n = rng.uniform(0.0, 1.0, net.num_flows)
        q = rng.uniform(0.0, 1.0, net.num_queues)
        lifted = lifting_map_detailed(n, q, net, alpha, crstar)
        yield k, "raw", n, q
        yield k, "lifted", lifted.n, lifted.q


def cmd_invariant(config: RunConfig) -> Dict[str, Any]:
    net = load_network(config)
    params = policy_params(config, net)
    crstar = _require_critical(net)
    rows = []
    agree = 0
    for k, kind, n, q in _grid_states(net, params.alpha, crstar, config.grid_points,
                                      config.seed or 0):
        invariant = is_invariant(n, q, net, params.alpha, tol=GRID_MATCH_TOL)
        distance, _ = lift_distance(n, q, net, params.alpha, crstar)
        agree += int(invariant == (distance < GRID_MATCH_TOL * (1.0 + float(np.sum(n) + np.sum(q)))))
        rows.append([k, kind] + list(n) + list(q) + [invariant, distance])
    runner = _start(config)
    header = (["index", "kind"] + [f"n[{name}]" for name in net.flow_names]
              + [f"q[{qid}]" for qid in net.queue_ids] + ["is_invariant", "lift_distance"])
    _write_csv(runner, "invariant.csv", header, rows)
    return _finish(runner, {"states": len(rows), "agreement": agree,
                            "invariant": sum(1 for row in rows if row[-2])})


def cmd_balance(config: RunConfig) -> Dict[str, Any]:
    net = load_network(config)
    params = policy_params(config, net)
    crstar = _require_critical(net)
    gamma = balance_factor(net, net.rho, crstar)
    beta = beta_hat(params.alpha, net)
    report: Dict[str, Any] = {"gamma": gamma, "beta_hat": beta,
                              "CRstar": [[float(z) for z in r.zeta] for r in crstar]}

    if config.n0 is not None or config.q0 is not None:
        n0, q0 = initial_state(config, net)
        h, T = fluid_step_size(config, net), config.horizon_or_default()
        start = FluidState.initial(n0, q0, net)
        mwum = integrate(start, T, h, net, params, sample_every=config.sample_every)
        baseline = integrate(start, T, h, net, params, policy="round_robin",
                             sample_every=config.sample_every)
        c0 = cost(n0, q0, net)
        c_star0 = effective_cost(n0, q0, net, crstar)
        c_mwum = np.array([cost(mwum.n[k], mwum.q[k], net) for k in range(len(mwum))])
        c_base = np.array([cost(baseline.n[k], baseline.q[k], net) for k in range(len(baseline))])
        slack = 1e-6
        report.update({
            "initial": cost_report(n0, q0, net, params.alpha, crstar).to_dict(),
            "comparator": baseline.policy,
            "horizon": float(mwum.times[-1]),
            "max_cost_mwum": float(c_mwum.max()),
            "min_cost_mwum": float(c_mwum.min()),
            "effective_cost_lower_bound_holds": bool(c_mwum.min() >= c_star0 - slack),
            "upper_bound_holds": bool(c_mwum.max() <= (1.0 + beta) * c0 + slack),
            "balance_bound_holds": bool(np.all(c_mwum <= (1.0 + beta) / gamma * c_base + slack)),
            "hitting_time": hitting_time(mwum, config.eps, net, params.alpha, crstar),
        })
    runner = _start(config)
    runner.write_json("balance.json", report)
    return _finish(runner, report)


def cmd_lift(config: RunConfig) -> Dict[str, Any]:
    net = load_network(config)
    params = policy_params(config, net)
    crstar = _require_critical(net)
    n0, q0 = initial_state(config, net)
    result = lifting_map_detailed(n0, q0, net, params.alpha, crstar)
    report = {
        "n": n0.tolist(), "q": q0.tolist(),
        "lifted_n": result.n.tolist(), "lifted_q": result.q.tolist(),
        "theta": result.theta.tolist(), "iterations": result.iterations,
        "gradient_norm": result.gradient_norm,
        "distance": float(np.abs(result.n - n0).sum() + np.abs(result.q - q0).sum()),
        "is_invariant": is_invariant(n0, q0, net, params.alpha),
        "attractiveness": attractiveness(n0, q0, net, params.alpha, crstar),
        "before": cost_report(n0, q0, net, params.alpha, crstar).to_dict(),
        "after": cost_report(result.n, result.q, net, params.alpha, crstar).to_dict(),
    }
    runner = _start(config)
    runner.write_json("lift.json", report)
    return _finish(runner, report)


def cmd_stability(config: RunConfig) -> Dict[str, Any]:
    if not config.seeds:
        raise MalformedConfig("stability needs --seeds")
    net = load_network(config)
    params = policy_params(config, net)
    kappas = config.kappas or [1.0]
    leff, _ = effective_load(net.rho, net)
    rows = ExperimentManager().stability(net, params, config.horizon_or_default(), config.seeds,
                                         kappas, policy=config.policy)
    runner = _start(config)
    runner.add_seeds(config.seeds)
    _write_csv(runner, "stability_runs.csv",
               ["kappa", "seed", "second_quarter", "last_half", "ratio"],
               [[row["kappa"], row["seed"], row["second_quarter"], row["last_half"], row["ratio"]]
                for row in rows])
    summary = []
    for kappa in sorted({row["kappa"] for row in rows}):
        group = [row for row in rows if row["kappa"] == kappa]
        summary.append({
            "kappa": kappa,
            "Leff": leff * kappa,
            "runs": len(group),
            "second_quarter": float(np.mean([row["second_quarter"] for row in group])),
            "last_half": float(np.mean([row["last_half"] for row in group])),
            "max_ratio": float(max(row["ratio"] for row in group)),
        })
    return _finish(runner, {"policy": config.policy, "summary": summary})


COMMANDS = {
    "capacity": cmd_capacity,
    "simulate": cmd_simulate,
    "fluid": cmd_fluid,
    "compare": cmd_compare,
    "invariant": cmd_invariant,
    "balance": cmd_balance,
    "lift": cmd_lift,
    "stability": cmd_stability,
}
