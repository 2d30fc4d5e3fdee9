import unittest
import os
import shutil
import tempfile
import sys

import numpy as np

# Add the project root to Python path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.exceptions import (CyclicRouting, LoadAssumptionViolated, MalformedConfig,
                             ScheduleSetTooLarge, UnservedQueue)
from core.network import build_network, compute_xi, implied_load, load_topology, monotone_closure
from tests.fixtures import TOPOLOGY_DIR, chain3, sq1_config, switch, t2, t2_config, write_topology


class TestComputeXi(unittest.TestCase):
    """Test cases for the routing closure Xi."""

    def test_single_queue(self):
        xi = compute_xi(np.zeros((1, 1), dtype=np.int64))
        np.testing.assert_array_equal(xi, [[1]])

    def test_tandem(self):
        xi = compute_xi(np.array([[0, 1], [0, 0]]))
        np.testing.assert_array_equal(xi, [[1, 0], [1, 1]])

    def test_chain_of_three(self):
        xi = compute_xi(np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]]))
        np.testing.assert_array_equal(xi, [[1, 0, 0], [1, 1, 0], [1, 1, 1]])

    def test_inverse_identity(self):
        routing = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]])
        xi = compute_xi(routing)
        np.testing.assert_array_equal(xi @ (np.eye(3, dtype=np.int64) - routing.T), np.eye(3))

    def test_cycle_rejected(self):
        with self.assertRaises(CyclicRouting):
            compute_xi(np.array([[0, 1], [1, 0]]))


class TestMonotoneClosure(unittest.TestCase):
    """Test cases for schedule set closure."""

    def test_closure_of_pair(self):
        schedules = monotone_closure([[1, 1, 0]])
        self.assertEqual(list(schedules), [(0, 0, 0), (0, 1, 0), (1, 0, 0), (1, 1, 0)])

    def test_contains_empty_schedule(self):
        schedules = monotone_closure([[0, 1], [1, 0]])
        self.assertIn((0, 0), schedules)
        self.assertEqual(len(schedules), 3)

    def test_maximal_indices(self):
        schedules = monotone_closure([[0, 1], [1, 0]])
        self.assertEqual([schedules[k] for k in schedules.maximal_indices()], [(0, 1), (1, 0)])

    def test_matrix_columns_are_schedules(self):
        schedules = monotone_closure([[1, 1, 0], [0, 0, 1]])
        matrix = schedules.matrix()
        self.assertEqual(matrix.shape, (3, len(schedules)))
        for k, pi in enumerate(schedules):
            self.assertEqual(tuple(matrix[:, k]), pi)

    def test_cap(self):
        with self.assertRaises(ScheduleSetTooLarge):
            monotone_closure([[1, 1, 1, 1]], max_size=8)

    def test_empty_generators(self):
        with self.assertRaises(MalformedConfig):
            monotone_closure([])


class TestBuildNetwork(unittest.TestCase):
    """Test cases for topology validation and derived views."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_t2_structure(self):
        net = t2()
        self.assertEqual(net.queue_ids, ("l1:v", "l2:v"))
        np.testing.assert_array_equal(net.xi, [[1, 0], [1, 1]])
        self.assertEqual(list(net.schedules), [(0, 0), (0, 1), (1, 0)])
        self.assertEqual(net.maximal_schedules, (1, 2))
        np.testing.assert_array_equal(net.next_hop, [1, -1])
        np.testing.assert_allclose(net.rho, [0.5])
        self.assertEqual(net.topological_order, (0, 1))

    def test_implied_load(self):
        np.testing.assert_allclose(implied_load(t2(0.4)), [0.4, 0.4])
        np.testing.assert_allclose(implied_load(chain3()), [0.2, 0.4, 0.4])

    def test_canonical_queue_order(self):
        config = t2_config()
        config["queues"].reverse()
        net = build_network(config)
        self.assertEqual(net.queue_ids, ("l1:v", "l2:v"))

    def test_switch_has_two_matchings(self):
        net = switch()
        self.assertEqual(net.num_schedules, 7)
        self.assertEqual(len(net.maximal_schedules), 2)

    def test_unknown_key_rejected(self):
        config = t2_config()
        config["extra"] = 1
        with self.assertRaises(MalformedConfig):
            build_network(config)

    def test_missing_key_rejected(self):
        config = t2_config()
        del config["routes"]
        with self.assertRaises(MalformedConfig):
            build_network(config)

    def test_mu_must_be_below_one(self):
        config = sq1_config()
        config["flows"][0]["mu"] = 1.0
        with self.assertRaises(MalformedConfig):
            build_network(config)

    def test_flow_endpoints_must_be_strings(self):
        for key, value in (("source_link", 1), ("dest", ["v"]), ("dest", "")):
            config = sq1_config()
            config["flows"][0][key] = value
            with self.assertRaises(MalformedConfig):
                build_network(config)

    def test_self_route_is_cyclic(self):
        config = t2_config()
        config["routes"] = [["l1:v", "l1:v"]]
        with self.assertRaises(CyclicRouting):
            build_network(config)

    def test_two_cycle(self):
        config = t2_config()
        config["routes"] = [["l1:v", "l2:v"], ["l2:v", "l1:v"]]
        with self.assertRaises(CyclicRouting):
            build_network(config)

    def test_two_next_hops_rejected(self):
        config = t2_config()
        config["queues"].append({"link": "l3", "dest": "v"})
        config["schedule_generators"].append(["l3:v"])
        config["routes"] = [["l1:v", "l2:v"], ["l1:v", "l3:v"]]
        with self.assertRaises(MalformedConfig):
            build_network(config)

    def test_unserved_queue(self):
        config = t2_config()
        config["schedule_generators"] = [["l1:v"]]
        with self.assertRaises(UnservedQueue):
            build_network(config)

    def test_load_above_capacity(self):
        with self.assertRaises(LoadAssumptionViolated):
            build_network(sq1_config(rho=0.7, C=0.5))

    def test_duplicate_flow_names(self):
        config = sq1_config()
        config["flows"].append(dict(config["flows"][0]))
        net = build_network(config)
        self.assertEqual(net.flow_names, ("l1:v", "l1:v#1"))

    def test_load_scale_and_capacity(self):
        net = t2().with_load_scale(0.8)
        np.testing.assert_allclose(net.rho, [0.4])
        self.assertEqual(net.with_capacity(3.0).C, 3.0)
        with self.assertRaises(LoadAssumptionViolated):
            net.with_capacity(0.3)

    def test_load_topology_file(self):
        net = load_topology(os.path.join(TOPOLOGY_DIR, "t2.json"))
        self.assertEqual(net.name, "t2")
        self.assertEqual(net.C, 2.0)

    def test_load_topology_default_name(self):
        config = t2_config()
        del config["name"]
        path = write_topology(self.temp_dir, config, "tandem.json")
        self.assertEqual(load_topology(path).name, "tandem")

    def test_load_topology_missing(self):
        with self.assertRaises(MalformedConfig):
            load_topology(os.path.join(self.temp_dir, "nope.json"))

    def test_load_topology_invalid_json(self):
        path = os.path.join(self.temp_dir, "bad.json")
        with open(path, "w") as f:
            f.write("{not json")
        with self.assertRaises(MalformedConfig):
            load_topology(path)

    def test_arrays_are_read_only(self):
        net = t2()
        with self.assertRaises(ValueError):
            net.xi[0, 0] = 5


if __name__ == '__main__':
    unittest.main()
