import unittest
import os
import sys

import numpy as np

# Add the project root to Python path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.exceptions import EnumerationLimitExceeded, NotCritical
from core.capacity import (Admissibility, classify, critical_resources, dual_value,
                           effective_load, is_dual_feasible, packet_load, primal_value)
from tests.fixtures import chain3, sq1, switch, t2


class TestEffectiveLoad(unittest.TestCase):
    """Test cases for the effective load and its classification."""

    def test_tandem_classes(self):
        for rho, expected, status in ((0.4, 0.8, Admissibility.STRICT),
                                      (0.5, 1.0, Admissibility.CRITICAL),
                                      (0.6, 1.2, Admissibility.INADMISSIBLE)):
            net = t2(rho)
            leff, got = effective_load(net.rho, net)
            self.assertAlmostEqual(leff, expected, places=9)
            self.assertEqual(got, status)

    def test_single_queue(self):
        net = sq1(0.7)
        leff, status = effective_load(net.rho, net)
        self.assertAlmostEqual(leff, 0.7, places=9)
        self.assertEqual(status, Admissibility.STRICT)

    def test_chain_and_switch(self):
        self.assertAlmostEqual(effective_load(chain3().rho, chain3())[0], 0.8, places=9)
        self.assertAlmostEqual(effective_load(switch().rho, switch())[0], 0.4, places=9)

    def test_critical_value_is_snapped(self):
        net = t2(0.5)
        self.assertEqual(effective_load(net.rho, net)[0], 1.0)

    def test_homogeneous(self):
        net = chain3()
        base, _ = effective_load(net.rho, net)
        for kappa in (0.5, 1.1, 3.0):
            scaled, _ = effective_load(kappa * net.rho, net)
            self.assertAlmostEqual(scaled, kappa * base, places=9)

    def test_primal_equals_dual(self):
        for net in (t2(0.45), chain3(), switch(0.3)):
            lam = packet_load(net.rho, net)
            self.assertAlmostEqual(primal_value(lam, net), dual_value(lam, net), places=9)

    def test_packet_load(self):
        np.testing.assert_allclose(packet_load([0.5], t2()), [0.5, 0.5])
        with self.assertRaises(ValueError):
            packet_load([0.5, 0.5], t2())

    def test_classify(self):
        self.assertEqual(classify(1.0 + 1e-12), Admissibility.CRITICAL)
        self.assertEqual(classify(0.99), Admissibility.STRICT)
        self.assertEqual(Admissibility.CRITICAL.value, "critical")


class TestCriticalResources(unittest.TestCase):
    """Test cases for the critical virtual resources."""

    def test_tandem(self):
        net = t2(0.5)
        resources = critical_resources(net.rho, net)
        self.assertEqual(len(resources), 1)
        np.testing.assert_allclose(resources[0].zeta, [1.0, 1.0])
        np.testing.assert_allclose(resources[0].v, [2.0, 1.0])
        self.assertTrue(resources[0].is_critical)
        self.assertEqual(resources[0].label(), "(1,1)")

    def test_single_queue_at_load_one(self):
        net = sq1(1.0)
        resources = critical_resources(net.rho, net)
        self.assertEqual([r.zeta.tolist() for r in resources], [[1.0]])

    def test_switch_matchings(self):
        net = switch(0.5)
        resources = critical_resources(net.rho, net)
        self.assertEqual([r.zeta.tolist() for r in resources],
                         [[0.0, 0.0, 1.0, 1.0], [0.0, 1.0, 0.0, 1.0],
                          [1.0, 0.0, 1.0, 0.0], [1.0, 1.0, 0.0, 0.0]])
        for resource in resources:
            self.assertTrue(is_dual_feasible(resource.zeta, net))
            self.assertAlmostEqual(float(packet_load(net.rho, net) @ resource.zeta), 1.0)

    def test_not_critical(self):
        net = t2(0.4)
        with self.assertRaises(NotCritical):
            critical_resources(net.rho, net)

    def test_enumeration_cap(self):
        net = t2(0.5)
        with self.assertRaises(EnumerationLimitExceeded):
            critical_resources(net.rho, net, max_bases=1)

    def test_to_dict(self):
        net = t2(0.5)
        data = critical_resources(net.rho, net)[0].to_dict()
        self.assertEqual(data, {"zeta": [1.0, 1.0], "is_critical": True, "v": [2.0, 1.0]})

    def test_dual_feasibility(self):
        net = t2()
        self.assertTrue(is_dual_feasible([1.0, 1.0], net))
        self.assertFalse(is_dual_feasible([1.5, 0.0], net))
        self.assertFalse(is_dual_feasible([-0.5, 0.0], net))


if __name__ == '__main__':
    unittest.main()
