import math
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import MalformedConfig, MwumNetError
from core.fluid import FluidTrajectory
from core.network import Network
from core.policy import PolicyFactory, PolicyParams
from core.simulator import scaled_state, simulate, stability_statistics, verify_conservation
from utils.config import thread_limit

logger = logging.getLogger(__name__)


def _compare_task(task: Dict[str, Any]) -> Dict[str, Any]:
    """One scaled simulation measured against a fluid trajectory."""
    net, params, r, seed = task["net"], task["params"], task["r"], task["seed"]
    times, fluid_n, fluid_q = task["times"], task["fluid_n"], task["fluid_q"]
    n0 = np.floor(r * np.asarray(task["n0"], dtype=float)).astype(np.int64)
    q0 = np.floor(r * np.asarray(task["q0"], dtype=float)).astype(np.int64)
    traj = simulate(net, params, horizon=math.ceil(r * float(times[-1])), seed=seed,
                    initial_n=n0, initial_q=q0)
    distance = 0.0
    for k, t in enumerate(times):
        scaled = scaled_state(traj, r, float(t))
        gap = np.abs(scaled.n - fluid_n[k]).sum() + np.abs(scaled.q - fluid_q[k]).sum()
        distance = max(distance, float(gap))
    return {"r": float(r), "seed": int(seed), "distance": distance,
            "events": len(traj.events), "conserved": verify_conservation(traj).passed}


def _stability_task(task: Dict[str, Any]) -> Dict[str, Any]:
    net, params, seed = task["net"], task["params"], task["seed"]
    policy = PolicyFactory.create_policy(task["policy"], net, params)
    traj = simulate(net, params, horizon=task["horizon"], seed=seed, policy=policy,
                    record_events=False)
    stats = stability_statistics(traj)
    stats.update({"seed": int(seed), "kappa": float(task["kappa"])})
    return stats


class ExperimentManager:
    """Runs independent simulations, in worker processes when allowed."""

    def __init__(self, max_workers: Optional[int] = None):
        self.max_workers = max_workers if max_workers is not None else thread_limit()
        if self.max_workers < 1:
            raise MalformedConfig(f"worker count must be >= 1, got {self.max_workers}")

    def _map(self, func: Callable[[Dict[str, Any]], Dict[str, Any]],
             tasks: List[Dict[str, Any]]) -> List[Dict[str, Any]]:
        if self.max_workers == 1 or len(tasks) <= 1:
            return [func(task) for task in tasks]
        workers = min(self.max_workers, len(tasks))
        logger.info("Running %d tasks on %d worker processes", len(tasks), workers)
        try:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(func, tasks))
        except MwumNetError:
            raise
        except (OSError, RuntimeError) as e:
            raise MwumNetError(f"Failed to run worker processes: {e}")

    def compare(self, net: Network, params: PolicyParams, n0: Sequence[float],
                q0: Sequence[float], ftraj: FluidTrajectory, scales: Sequence[float],
                seeds: Sequence[int]) -> Tuple[List[Dict[str, Any]], List[Dict[str, Any]]]:
        """Per-run sup-distances and their per-r mean/max, both sorted by (r, seed)."""
        if not seeds:
            raise MalformedConfig("compare needs at least one seed")
        tasks = [{"net": net, "params": params, "r": float(r), "seed": int(seed),
                  "n0": list(n0), "q0": list(q0), "times": ftraj.times,
                  "fluid_n": ftraj.n, "fluid_q": ftraj.q}
                 for r in scales for seed in seeds]
        runs = sorted(self._map(_compare_task, tasks), key=lambda row: (row["r"], row["seed"]))

        summary = []
        for r in sorted({row["r"] for row in runs}):
            distances = [row["distance"] for row in runs if row["r"] == r]
            summary.append({"r": r, "runs": len(distances),
                            "mean_distance": float(np.mean(distances)),
                            "max_distance": float(np.max(distances))})
            logger.info("r=%g: mean sup distance %.6g over %d seeds", r, summary[-1]["mean_distance"],
                        len(distances))
        return runs, summary

    def stability(self, net: Network, params: PolicyParams, horizon: float,
                  seeds: Sequence[int], kappas: Sequence[float] = (1.0,),
                  policy: str = "mwum") -> List[Dict[str, Any]]:
        """Second-quarter vs last-half averages of ||(N, Q)||_1 per load scale and seed."""
        tasks = []
        for kappa in kappas:
            scaled = net if math.isclose(kappa, 1.0) else net.with_load_scale(kappa)
            tasks.extend({"net": scaled, "params": params, "seed": int(seed), "horizon": horizon,
                          "policy": policy, "kappa": float(kappa)} for seed in seeds)
        return sorted(self._map(_stability_task, tasks), key=lambda row: (row["kappa"], row["seed"]))
