import unittest
import os
import sys

import numpy as np

# Add the project root to Python path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.exceptions import MalformedConfig
from core.network import build_network
from core.policy import (IdlingTestPolicy, MWUMPolicy, PolicyFactory, PolicyParams,
                         RoundRobinPolicy, rate_allocation, rate_objective, schedule_weight,
                         select_schedule, select_schedule_index)
from tests.fixtures import SLOW_TESTS, t2


def random_network(rng: np.random.Generator, size: int):
    """Random acyclic network with one flow per queue and random conflict sets."""
    queues = [{"link": f"l{e}", "dest": "v"} for e in range(size)]
    ids = [f"l{e}:v" for e in range(size)]
    routes = []
    for e in range(size - 1):
        if rng.random() < 0.5:
            routes.append([ids[e], ids[int(rng.integers(e + 1, size))]])
    generators = [[qid] for qid in ids]
    for _ in range(int(rng.integers(1, 4))):
        members = [qid for qid in ids if rng.random() < 0.5]
        if members:
            generators.append(members)
    flows = [{"source_link": f"l{e}", "dest": "v", "nu": 0.01, "mu": 0.5} for e in range(size)]
    return build_network({"C": 1.0, "queues": queues, "routes": routes, "flows": flows,
                          "schedule_generators": generators})


def brute_force_weights(q, alpha, net):
    powers = [int(v) ** alpha for v in q]
    weights = []
    for pi in net.schedules:
        total = 0
        for e, bit in enumerate(pi):
            if bit:
                total += powers[e]
                if net.next_hop[e] >= 0:
                    total -= powers[int(net.next_hop[e])]
        weights.append(total)
    return weights


class TestPolicyParams(unittest.TestCase):
    """Test cases for parameter validation."""

    def test_valid(self):
        params = PolicyParams(alpha=2.0, C=1.0)
        self.assertEqual(params.tie_break, "lexicographic")

    def test_alpha_one_accepted(self):
        self.assertEqual(PolicyParams(alpha=1.0, C=1.0).alpha, 1.0)

    def test_invalid_values(self):
        for kwargs in ({"alpha": 0.0, "C": 1.0}, {"alpha": -1.0, "C": 1.0},
                       {"alpha": 2.0, "C": 0.0}, {"alpha": float("nan"), "C": 1.0},
                       {"alpha": 2.0, "C": 1.0, "tie_break": "random"},
                       {"alpha": 2.0, "C": 1.0, "tol_tie": -1.0}):
            with self.assertRaises(MalformedConfig):
                PolicyParams(**kwargs)

    def test_for_network(self):
        params = PolicyParams.for_network(t2(), alpha=0.5)
        self.assertEqual(params.C, 2.0)
        self.assertEqual(params.alpha, 0.5)


class TestRateAllocation(unittest.TestCase):
    """Test cases for the alpha-fair rate allocation."""

    def test_no_flows(self):
        self.assertEqual(rate_allocation(0, 7, PolicyParams(2.0, 10.0)), 0.0)

    def test_empty_queue(self):
        self.assertEqual(rate_allocation(5, 0, PolicyParams(2.0, 10.0)), 10.0)

    def test_interior(self):
        for alpha in (0.5, 2.0):
            self.assertAlmostEqual(rate_allocation(1, 4, PolicyParams(alpha, 10.0)), 0.25)

    def test_capped(self):
        self.assertEqual(rate_allocation(50, 4, PolicyParams(2.0, 10.0)), 10.0)

    def test_homogeneous_degree_zero(self):
        params = PolicyParams(2.0, 10.0)
        self.assertAlmostEqual(rate_allocation(3, 7, params), rate_allocation(30, 70, params))

    def test_matches_grid_argmax(self):
        rng = np.random.default_rng(7)
        C = 2.0
        grid = np.linspace(0.0, C, 20001)
        samples = 1000 if SLOW_TESTS else 200
        for alpha in (0.25, 0.5, 2.0, 4.0):
            params = PolicyParams(alpha, C)
            for _ in range(samples // 4):
                n, q = rng.uniform(0.01, 5.0, 2)
                values = rate_objective(grid, n, q, alpha)
                best = grid[int(np.argmax(values))]
                self.assertLessEqual(abs(rate_allocation(n, q, params) - best), 1e-4 * C + 1e-12)

    def test_log_objective_at_alpha_one(self):
        x = np.array([0.5, 1.0])
        np.testing.assert_allclose(rate_objective(x, 2.0, 3.0, 1.0), 2.0 * np.log(x) - 3.0 * x)


class TestScheduleSelection(unittest.TestCase):
    """Test cases for max-weight-alpha scheduling."""

    def setUp(self):
        self.net = t2()
        self.params = PolicyParams(1.0, 2.0)

    def test_schedule_weight(self):
        R = self.net.routing
        self.assertEqual(schedule_weight((1, 0), [3, 1], 1.0, R), 2)
        self.assertEqual(schedule_weight((0, 1), [3, 1], 1.0, R), 1)
        self.assertEqual(schedule_weight((1, 0), [0, 0], 1.0, R), 0)

    def test_t2_examples(self):
        self.assertEqual(select_schedule([3, 1], self.params, self.net), (1, 0))
        self.assertEqual(select_schedule([1, 3], self.params, self.net), (0, 1))
        self.assertEqual(select_schedule([0, 0], self.params, self.net), (0, 0))

    def test_tie_prefers_smallest_index(self):
        # weights: {e1}: 2 - 1 = 1, {e2}: 1
        self.assertEqual(select_schedule([2, 1], self.params, self.net), (0, 1))

    def test_empty_queue_is_never_scheduled(self):
        self.assertEqual(select_schedule([0, 5], self.params, self.net), (0, 1))
        self.assertEqual(select_schedule([5, 5], self.params, self.net), (0, 1))

    def test_matches_enumeration(self):
        rng = np.random.default_rng(11)
        cases = 1000 if SLOW_TESTS else 150
        for case in range(cases):
            net = random_network(rng, int(rng.integers(2, 7)))
            alpha = int(rng.integers(1, 3))
            params = PolicyParams(float(alpha), net.C)
            q = rng.integers(0, 5, net.num_queues)
            weights = brute_force_weights(q, alpha, net)
            k = select_schedule_index(q, params, net)
            self.assertEqual(weights[k], max(weights))
            pi = net.schedules[k]
            self.assertTrue(all(q[e] > 0 for e in range(net.num_queues) if pi[e]))
            qualifying = [j for j, p in enumerate(net.schedules)
                          if weights[j] == max(weights)
                          and all(q[e] > 0 for e in range(net.num_queues) if p[e])]
            self.assertEqual(k, min(qualifying))

    def test_non_integer_alpha(self):
        params = PolicyParams(0.5, 2.0)
        self.assertEqual(select_schedule([9, 1], params, self.net), (1, 0))
        self.assertEqual(select_schedule([1.0, 4.0], params, self.net), (0, 1))


class TestControlPolicies(unittest.TestCase):
    """Test cases for the policy classes and factory."""

    def setUp(self):
        self.net = t2()
        self.params = PolicyParams(1.0, 2.0)

    def test_factory(self):
        self.assertEqual(PolicyFactory.get_available_policies(), ["idling", "mwum", "round_robin"])
        self.assertIsInstance(PolicyFactory.create_policy("MWUM", self.net, self.params), MWUMPolicy)
        with self.assertRaises(MalformedConfig):
            PolicyFactory.create_policy("fifo", self.net, self.params)
        self.assertEqual(PolicyFactory.get_policy_info("round_robin")["name"], "round_robin")

    def test_mwum_rates(self):
        policy = MWUMPolicy(self.net, self.params)
        np.testing.assert_allclose(policy.rates([1], [2, 0]), [0.5])
        np.testing.assert_allclose(policy.rates([0], [2, 0]), [0.0])

    def test_round_robin_cycles(self):
        policy = RoundRobinPolicy(self.net, self.params)
        chosen = [self.net.schedules[policy.schedule([3, 3], slot)] for slot in range(4)]
        self.assertEqual(chosen, [(0, 1), (1, 0), (0, 1), (1, 0)])
        self.assertEqual(self.net.schedules[policy.schedule([0, 3], 1)], (0, 0))
        np.testing.assert_allclose(policy.rates([2], [0, 0]), [0.5])

    def test_idling_policy(self):
        policy = IdlingTestPolicy(self.net, self.params)
        self.assertFalse(policy.is_non_idling())
        self.assertEqual(self.net.schedules[policy.schedule([0, 0], 1)], (0, 1))


if __name__ == '__main__':
    unittest.main()
