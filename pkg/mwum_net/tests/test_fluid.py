import unittest
import os
import csv
import shutil
import tempfile
import importlib.util
import sys

import numpy as np

# Add the project root to Python path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.capacity import critical_resources, effective_load
from core.exceptions import InvalidHorizon, MalformedConfig, StepTooLarge
from core.fluid import (FluidState, drift_bound, drift_L, fluid_step, h_max, integrate,
                        monotonicity_report, plot_fluid_trajectory, residual_summary,
                        write_fluid_csv)
from core.policy import PolicyParams
from core.workload import lyapunov, workload
from tests.fixtures import chain3, sq1, switch, t2

HAS_MATPLOTLIB = importlib.util.find_spec("matplotlib") is not None


class TestFluidStep(unittest.TestCase):
    """Test cases for single fluid steps."""

    def setUp(self):
        self.net = t2()
        self.params = PolicyParams(1.0, self.net.C)
        self.h = h_max(self.net)

    def test_h_max(self):
        # 0.01 / (1 + C |F| + |S|) with C = 2, one flow, three schedules
        self.assertAlmostEqual(self.h, 0.01 / 6.0)

    def test_zero_state_stays_at_zero(self):
        state = FluidState.initial([0.0], [0.0, 0.0], self.net)
        for _ in range(20):
            state = fluid_step(state, self.h, self.net, self.params)
        np.testing.assert_allclose(state.n, [0.0], atol=1e-12)
        np.testing.assert_allclose(state.q, [0.0, 0.0], atol=1e-12)
        self.assertAlmostEqual(float(state.s.sum()), 20 * self.h)

    def test_invariant_state_is_stationary(self):
        state = FluidState.initial([1.0], [2.0, 1.0], self.net)
        moved = fluid_step(state, self.h, self.net, self.params)
        displacement = np.abs(moved.n - state.n).sum() + np.abs(moved.q - state.q).sum()
        self.assertLessEqual(displacement, 10 * self.h ** 2)

    def test_step_too_large(self):
        state = FluidState.initial([1.0], [2.0, 1.0], self.net)
        with self.assertRaises(StepTooLarge):
            fluid_step(state, 2 * self.h, self.net, self.params)
        with self.assertRaises(StepTooLarge):
            fluid_step(state, 0.0, self.net, self.params)

    def test_unknown_policy(self):
        state = FluidState.initial([1.0], [2.0, 1.0], self.net)
        with self.assertRaises(MalformedConfig):
            fluid_step(state, self.h, self.net, self.params, policy="fifo")

    def test_queue_hits_zero_exactly(self):
        # a small first queue drains inside the step and is clamped at zero
        state = FluidState.initial([0.0], [1e-4, 0.0], self.net)
        moved = fluid_step(state, self.h, self.net, self.params)
        self.assertTrue(np.all(moved.q >= 0.0))
        self.assertTrue(np.all(moved.n >= 0.0))


class TestIntegrate(unittest.TestCase):
    """Test cases for fluid trajectories."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_lyapunov_decreases_from_random_starts(self):
        rng = np.random.default_rng(8)
        for net in (sq1(0.5), t2(0.4)):
            params = PolicyParams(1.0, net.C)
            for _ in range(20):
                n, q = rng.uniform(0.0, 5.0, net.num_flows), rng.uniform(0.0, 5.0, net.num_queues)
                ftraj = integrate(FluidState.initial(n, q, net), 0.5, h_max(net), net, params,
                                  sample_every=25)
                values = [lyapunov(ftraj.n[k], ftraj.q[k], net, 1.0)[0] for k in range(len(ftraj))]
                self.assertLess(values[-1], values[0])
                self.assertTrue(all(b <= a + 10 * h_max(net) for a, b in zip(values, values[1:])))
                self.assertAlmostEqual(float(ftraj.times[-1]), 0.5)

    def test_residuals_small(self):
        net = t2()
        params = PolicyParams(1.0, net.C)
        ftraj = integrate(FluidState.initial([2.0], [3.0, 1.0], net), 0.5, h_max(net), net, params)
        self.assertLessEqual(ftraj.max_residual(), 1e-9)
        summary = residual_summary(ftraj)
        self.assertGreaterEqual(summary["F8"], -1e-12)
        self.assertEqual(summary["projection_events"], 0)

    def test_drift_nonpositive_when_underloaded(self):
        rng = np.random.default_rng(3)
        for net in (sq1(), t2(0.4), chain3(), switch()):
            leff, _ = effective_load(net.rho, net)
            for alpha in (0.5, 1.0, 2.0):
                params = PolicyParams(alpha, net.C)
                for _ in range(50):
                    n = rng.uniform(0.0, 5.0, net.num_flows)
                    q = rng.uniform(0.0, 5.0, net.num_queues)
                    state = FluidState.initial(n, q, net)
                    drift = drift_L(state, net, params)
                    self.assertLessEqual(drift, 1e-8)
                    self.assertLessEqual(drift, drift_bound(q, net, alpha, leff) + 1e-6)

    def test_drift_bound_needs_admissible_load(self):
        net = t2(0.4)
        self.assertEqual(drift_bound([0.0, 0.0], net, 1.0, 0.8), 0.0)
        # (1 + alpha)(1 - Leff) * (2 + 1) / |E|^2
        self.assertAlmostEqual(drift_bound([2.0, 1.0], net, 1.0, 0.8), -2.0 * 0.2 * 3.0 / 4.0)
        with self.assertRaises(ValueError):
            drift_bound([1.0, 1.0], net, 1.0, 1.2)

    def test_lyapunov_step_error_is_second_order(self):
        # positive per-step increments of L stay below K h^2 with K stable when h halves
        rng = np.random.default_rng(12)
        for net in (sq1(0.5), t2(0.4)):
            params = PolicyParams(1.0, net.C)
            for _ in range(3):
                start = FluidState.initial(rng.uniform(0.5, 3.0, net.num_flows),
                                           rng.uniform(0.5, 3.0, net.num_queues), net)
                constants = []
                for h in (h_max(net), h_max(net) / 2):
                    ftraj = integrate(start, 0.25, h, net, params)
                    values = np.array([lyapunov(ftraj.n[k], ftraj.q[k], net, 1.0)[0]
                                       for k in range(len(ftraj))])
                    constants.append(max(float(np.max(np.diff(values), initial=0.0)), 0.0) / h ** 2)
                self.assertLess(constants[0], 1e4)
                self.assertLessEqual(constants[1], 4.0 * constants[0] + 1.0)

    def test_critical_workload_nondecreasing(self):
        net = t2(0.5)
        params = PolicyParams(1.0, net.C)
        crstar = critical_resources(net.rho, net)
        leff, _ = effective_load(net.rho, net)
        rng = np.random.default_rng(5)
        for _ in range(20):
            start = FluidState.initial(rng.uniform(0.0, 3.0, 1), rng.uniform(0.0, 3.0, 2), net)
            ftraj = integrate(start, 0.5, h_max(net), net, params, sample_every=10)
            values = [workload(crstar[0], ftraj.n[k], ftraj.q[k], net) for k in range(len(ftraj))]
            self.assertTrue(all(b >= a - 10 * h_max(net) for a, b in zip(values, values[1:])))
            report = monotonicity_report(ftraj, net, crstar, leff=leff)
            self.assertTrue(report["lyapunov_nonincreasing"])
            self.assertTrue(report["workload_nondecreasing"])
            self.assertTrue(report["drift_bound_holds"])
            self.assertAlmostEqual(report["slack"], 10 * h_max(net))

    def test_round_robin_idles_below_capacity(self):
        net = t2(0.4)
        params = PolicyParams(1.0, net.C)
        ftraj = integrate(FluidState.initial([0.0], [0.0, 0.0], net), 0.1, h_max(net), net,
                          params, policy="round_robin")
        final = ftraj.final
        # half of the time each queue is offered 1 unit and receives 0.4
        np.testing.assert_allclose(final.z, [0.01, 0.01], rtol=1e-6)
        np.testing.assert_allclose(final.q, [0.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(final.n, [0.0], atol=1e-12)
        self.assertEqual(ftraj.policy, "round_robin")

    def test_sampling(self):
        net = t2()
        params = PolicyParams(1.0, net.C)
        ftraj = integrate(FluidState.initial([1.0], [1.0, 1.0], net), 0.05, h_max(net), net,
                          params, sample_every=10)
        self.assertEqual(len(ftraj), 4)
        self.assertEqual(ftraj.n.shape, (4, 1))

    def test_invalid_arguments(self):
        net = t2()
        params = PolicyParams(1.0, net.C)
        initial = FluidState.initial([1.0], [1.0, 1.0], net)
        with self.assertRaises(InvalidHorizon):
            integrate(initial, 0.0, h_max(net), net, params)
        with self.assertRaises(StepTooLarge):
            integrate(initial, 1.0, 1.0, net, params)
        with self.assertRaises(MalformedConfig):
            integrate(initial, 0.1, h_max(net), net, params, sample_every=0)

    def test_fluid_csv(self):
        net = t2()
        params = PolicyParams(1.0, net.C)
        ftraj = integrate(FluidState.initial([1.0], [1.0, 1.0], net), 0.02, h_max(net), net, params)
        path = write_fluid_csv(ftraj, os.path.join(self.temp_dir, "fluid.csv"), net, 1.0,
                               crstar=[[1.0, 1.0]])
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        self.assertEqual(rows[0], ["t", "n[l1:v]", "q[l1:v]", "q[l2:v]", "L_alpha", "drift",
                                   "w[(1,1)]"])
        self.assertEqual(len(rows), len(ftraj) + 1)
        # L = n^2 / (mu rho) + q1^2 + q2^2 = 4 + 1 + 1
        self.assertAlmostEqual(float(rows[1][4]), 6.0)

    @unittest.skipUnless(HAS_MATPLOTLIB, "matplotlib not installed")
    def test_plot(self):
        net = t2()
        params = PolicyParams(1.0, net.C)
        ftraj = integrate(FluidState.initial([1.0], [1.0, 1.0], net), 0.02, h_max(net), net, params)
        path = plot_fluid_trajectory(ftraj, os.path.join(self.temp_dir, "fluid.png"), net)
        self.assertGreater(os.path.getsize(path), 0)


if __name__ == '__main__':
    unittest.main()
