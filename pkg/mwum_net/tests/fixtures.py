"""Shared topology builders for the test suites."""

import os
import sys
import json
from typing import Any, Dict

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.network import Network, build_network

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
TOPOLOGY_DIR = os.path.join(PROJECT_ROOT, "topologies")
SLOW_TESTS = os.environ.get("MWUM_NET_SLOW_TESTS") == "1"


def sq1_config(rho: float = 0.7, C: float = 10.0, mu: float = 0.5) -> Dict[str, Any]:
    return {
        "name": "sq1",
        "C": C,
        "queues": [{"link": "l1", "dest": "v"}],
        "routes": [],
        "flows": [{"source_link": "l1", "dest": "v", "nu": rho * mu, "mu": mu}],
        "schedule_generators": [["l1:v"]],
    }


def t2_config(rho: float = 0.5, C: float = 2.0, mu: float = 0.5) -> Dict[str, Any]:
    return {
        "name": "t2",
        "C": C,
        "queues": [{"link": "l1", "dest": "v"}, {"link": "l2", "dest": "v"}],
        "routes": [["l1:v", "l2:v"]],
        "flows": [{"source_link": "l1", "dest": "v", "nu": rho * mu, "mu": mu}],
        "schedule_generators": [["l1:v"], ["l2:v"]],
    }


def switch_config(rho: float = 0.2) -> Dict[str, Any]:
    pairs = [("i1", "o1"), ("i1", "o2"), ("i2", "o1"), ("i2", "o2")]
    return {
        "name": "switch2x2",
        "C": 1.0,
        "queues": [{"link": i, "dest": o} for i, o in pairs],
        "routes": [],
        "flows": [{"source_link": i, "dest": o, "nu": rho * 0.5, "mu": 0.5} for i, o in pairs],
        "schedule_generators": [["i1:o1", "i2:o2"], ["i1:o2", "i2:o1"]],
    }


def chain3_config() -> Dict[str, Any]:
    with open(os.path.join(TOPOLOGY_DIR, "chain3.json")) as f:
        return json.load(f)


def sq1(rho: float = 0.7, C: float = 10.0) -> Network:
    return build_network(sq1_config(rho, C))


def t2(rho: float = 0.5, C: float = 2.0) -> Network:
    return build_network(t2_config(rho, C))


def switch(rho: float = 0.2) -> Network:
    return build_network(switch_config(rho))


def chain3() -> Network:
    return build_network(chain3_config())


def write_topology(directory: str, config: Dict[str, Any], filename: str = "net.json") -> str:
    path = os.path.join(directory, filename)
    with open(path, "w") as f:
        json.dump(config, f)
    return path
