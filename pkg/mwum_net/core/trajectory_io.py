import os
import csv
import json
import logging
from typing import Any, Dict, List, Tuple

from core.exceptions import MalformedConfig, MwumNetError
from core.simulator import ConservationReport, Event, SystemState, Trajectory
from utils.helpers import format_row

logger = logging.getLogger(__name__)

INITIAL = "initial"


def snapshot_header(traj: Trajectory) -> List[str]:
    net = traj.network
    return (["t", "kind", "entity"] + [f"N[{name}]" for name in net.flow_names]
            + [f"Q[{qid}]" for qid in net.queue_ids])


def write_snapshot_csv(traj: Trajectory, filepath: str) -> str:
    """Write N and Q at every integer time; entity is the schedule index of the slot."""
    try:
        schedules = traj.schedule_sequence()
        with open(filepath, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(snapshot_header(traj))
            for tau in range(traj.last_slot + 1):
                kind, entity = (INITIAL, "") if tau == 0 else ("slot", int(schedules[tau - 1]))
                row = [tau, kind, entity]
                row += traj.snapshots["N"][tau].tolist() + traj.snapshots["Q"][tau].tolist()
                writer.writerow(format_row(row))
    except OSError as e:
        raise MwumNetError(f"Failed to write snapshots: {e}")
    logger.info("Wrote %d snapshots to %s", traj.last_slot + 1, filepath)
    return filepath


def event_to_dict(event: Event) -> Dict[str, Any]:
    return {"t": event.t, "kind": event.kind, "entity": event.entity,
            "delta": [list(d) for d in event.delta], "rates": list(event.rates)}


def event_from_dict(data: Dict[str, Any]) -> Event:
    return Event(t=float(data["t"]), kind=str(data["kind"]), entity=int(data["entity"]),
                 delta=tuple((str(c), int(i), int(a)) for c, i, a in data["delta"]),
                 rates=tuple(float(r) for r in data["rates"]))


def write_event_log(traj: Trajectory, filepath: str) -> str:
    """JSON-lines log; the first line carries the initial state."""
    if not traj.events_recorded:
        raise MwumNetError("Failed to write event log: events were not recorded")
    try:
        with open(filepath, "w") as f:
            header = {"t": 0.0, "kind": INITIAL, "entity": -1, "delta": [],
                      "rates": traj.snapshot_rates[0].tolist(),
                      "state": traj.initial.to_dict(), "seed": traj.seed,
                      "policy": traj.policy}
            f.write(json.dumps(header, sort_keys=True) + "\n")
            for event in traj.events:
                f.write(json.dumps(event_to_dict(event), sort_keys=True) + "\n")
    except OSError as e:
        raise MwumNetError(f"Failed to write event log: {e}")
    logger.info("Wrote %d events to %s", len(traj.events), filepath)
    return filepath


def read_event_log(filepath: str) -> Tuple[SystemState, List[Event]]:
    """Load a JSON-lines event log written by write_event_log."""
    if not os.path.isfile(filepath):
        raise MalformedConfig(f"event log not found: {filepath}")
    initial = None
    events: List[Event] = []
    try:
        with open(filepath, "r") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                data = json.loads(line)
                if data.get("kind") == INITIAL:
                    initial = SystemState.from_dict(data["state"])
                else:
                    events.append(event_from_dict(data))
    except (ValueError, KeyError, TypeError) as e:
        raise MalformedConfig(f"Failed to read event log {filepath}: {e}")
    if initial is None:
        raise MalformedConfig(f"event log {filepath} has no initial state line")
    return initial, events


def replay_events(initial: SystemState, events: List[Event]) -> Dict[str, List[int]]:
    """Integer counters after applying every event to the initial state."""
    values = {name: [int(v) for v in initial.component(name)]
              for name in ("N", "Q", "Z", "S", "A", "Aflow", "D")}
    for event in events:
        for name, index, amount in event.delta:
            values[name][index] += amount
    return values


def write_conservation_report(report: ConservationReport, filepath: str) -> str:
    try:
        with open(filepath, "w") as f:
            json.dump(report.to_dict(), f, indent=4, sort_keys=True)
    except OSError as e:
        raise MwumNetError(f"Failed to write conservation report: {e}")
    return filepath
