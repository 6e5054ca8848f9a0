#!/usr/bin/env python3
"""Radio simulator: antenna pattern, pathloss, layout and per-cell KPIs."""

import math
import os
import sys
import unittest

import numpy as np

# Add src directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from radio_sim import (
    CellKpis,
    NetworkLayout,
    SimConfig,
    TiltVector,
    build_layout,
    compute_kpis,
    measure_ues,
    pathloss,
    pattern_loss,
)
from utils import ConfigError, ContractError, DomainError


def _line_of_ues(x, y_start, y_stop, n):
    ys = np.linspace(y_start, y_stop, n)
    return np.column_stack([np.full(n, float(x)), ys])


class TestPropagation(unittest.TestCase):
    """Pathloss and antenna pattern closed forms."""

    def setUp(self):
        self.config = SimConfig()

    def test_pathloss_reference_distances(self):
        self.assertAlmostEqual(pathloss(1000.0, self.config), 128.1, places=10)
        self.assertAlmostEqual(pathloss(2000.0, self.config), 128.1 + 37.6 * math.log10(2.0), places=10)
        self.assertAlmostEqual(pathloss(2000.0, self.config), 139.4187, places=4)

    def test_pathloss_is_monotonic_and_clamped(self):
        distances = np.array([0.0, 0.5, 1.0, 10.0, 100.0, 1000.0])
        losses = pathloss(distances, self.config)
        self.assertEqual(losses[0], losses[2])
        self.assertTrue(np.all(np.diff(losses[2:]) > 0))

    def test_pattern_loss_boresight_and_beamwidth(self):
        self.assertEqual(pattern_loss(0.0, 0.0, self.config), 0.0)
        self.assertAlmostEqual(pattern_loss(10.0, 0.0, self.config), 12.0)
        self.assertAlmostEqual(pattern_loss(0.0, 65.0, self.config), 12.0)

    def test_pattern_loss_caps(self):
        # vertical side lobe 20 dB plus horizontal floor 30 dB
        self.assertAlmostEqual(pattern_loss(90.0, 180.0, self.config), 50.0)
        self.assertAlmostEqual(pattern_loss(-90.0, -180.0, self.config), 50.0)

    def test_pattern_loss_vectorised(self):
        loss = pattern_loss(np.array([0.0, 10.0]), np.array([0.0, 0.0]), self.config)
        np.testing.assert_allclose(loss, [0.0, 12.0])


class TestLayout(unittest.TestCase):
    """Hexagonal site grid and UE drop."""

    def test_default_layout_sizes(self):
        config = SimConfig()
        layout = build_layout(config)
        self.assertEqual(layout.n_cells, 21)
        self.assertEqual(layout.cell_positions.shape, (21, 2))
        self.assertEqual(layout.ue_positions.shape, (2000, 2))

    def test_sector_azimuths(self):
        layout = build_layout(SimConfig(n_ues=10))
        np.testing.assert_allclose(layout.cell_azimuths_deg[:3], [0.0, 120.0, 240.0])
        # the three sectors of a site share its position
        np.testing.assert_allclose(layout.cell_positions[0], layout.cell_positions[2])

    def test_sites_one_isd_apart(self):
        layout = build_layout(SimConfig(n_ues=10))
        sites = layout.cell_positions[::3]
        np.testing.assert_allclose(sites[0], [0.0, 0.0])
        distances = np.hypot(sites[1:, 0], sites[1:, 1])
        np.testing.assert_allclose(distances, 500.0)

    def test_layout_is_seed_deterministic(self):
        first = build_layout(SimConfig(n_ues=200, seed=5))
        second = build_layout(SimConfig(n_ues=200, seed=5))
        other = build_layout(SimConfig(n_ues=200, seed=6))
        np.testing.assert_array_equal(first.ue_positions, second.ue_positions)
        self.assertFalse(np.array_equal(first.ue_positions, other.ue_positions))

    def test_invalid_config_names_field(self):
        with self.assertRaises(ConfigError) as ctx:
            build_layout(SimConfig(n_ues=0))
        self.assertEqual(ctx.exception.field, 'n_ues')


class TestKpis(unittest.TestCase):
    """Per-cell risk KPIs over whole networks and hand-built geometries."""

    def setUp(self):
        self.config = SimConfig(n_ues=400)
        self.layout = build_layout(self.config)

    def test_kpis_in_unit_interval(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            tilts = TiltVector(tuple(rng.integers(1, 17, size=21)))
            kpis = compute_kpis(self.layout, tilts, self.config)
            self.assertEqual(len(kpis), 21)
            for k in kpis:
                for value in k.as_tuple():
                    self.assertGreaterEqual(value, 0.0)
                    self.assertLessEqual(value, 1.0)

    def test_kpis_are_deterministic(self):
        tilts = TiltVector(tuple([8.0] * 21))
        self.assertEqual(compute_kpis(self.layout, tilts, self.config),
                         compute_kpis(self.layout, tilts, self.config))

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(1)
        tilts = rng.integers(1, 17, size=21).astype(float)
        order = rng.permutation(21)
        base = compute_kpis(self.layout, TiltVector(tuple(tilts)), self.config)
        permuted = compute_kpis(self.layout.permuted(order), TiltVector(tuple(tilts[order])), self.config)
        for new_idx, old_idx in enumerate(order):
            np.testing.assert_allclose(permuted[new_idx].as_tuple(), base[old_idx].as_tuple())

    def test_capacity_shares_average_one_half(self):
        kpis = compute_kpis(self.layout, TiltVector(tuple([8.0] * 21)), self.config)
        caps = [k.cap for k in kpis]
        # unclamped loads sum to n_cells / 2
        if max(caps) < 1.0:
            self.assertAlmostEqual(float(np.mean(caps)), 0.5)

    def test_wrong_tilt_count_and_range(self):
        with self.assertRaises(ContractError):
            compute_kpis(self.layout, TiltVector((8.0,) * 20), self.config)
        with self.assertRaises(DomainError):
            compute_kpis(self.layout, TiltVector((8.0,) * 20 + (17.0,)), self.config)

    def test_downtilt_shrinks_single_cell_coverage(self):
        config = SimConfig(n_base_stations=1, sectors_per_station=1, n_ues=50)
        layout = NetworkLayout(np.array([[0.0, 0.0]]), np.array([0.0]), _line_of_ues(0.0, 250.0, 400.0, 50))
        low = compute_kpis(layout, TiltVector((1.0,)), config)[0]
        high = compute_kpis(layout, TiltVector((16.0,)), config)[0]
        self.assertGreaterEqual(high.cov, low.cov)
        self.assertGreater(high.cov, 0.0)

    def test_neighbour_downtilt_does_not_hurt_quality(self):
        config = SimConfig(n_base_stations=2, sectors_per_station=1, n_ues=40, sinr_quality_threshold_db=15.0)
        layout = NetworkLayout(
            np.array([[0.0, 0.0], [0.0, 600.0]]),
            np.array([0.0, 180.0]),
            _line_of_ues(0.0, 350.0, 450.0, 40),
        )
        qual_before = compute_kpis(layout, TiltVector((1.0, 8.0)), config)[1].qual
        qual_after = compute_kpis(layout, TiltVector((16.0, 8.0)), config)[1].qual
        self.assertLessEqual(qual_after, qual_before)

    def test_unattached_cell_reports_zero(self):
        config = SimConfig(n_base_stations=2, sectors_per_station=1, n_ues=10)
        # second cell faces away from every UE and sits far behind the first
        layout = NetworkLayout(
            np.array([[0.0, 0.0], [0.0, -3000.0]]),
            np.array([0.0, 180.0]),
            _line_of_ues(0.0, 50.0, 100.0, 10),
        )
        kpis = compute_kpis(layout, TiltVector((8.0, 8.0)), config)
        self.assertEqual(kpis[1], CellKpis(0.0, 0.0, 0.0))

    def test_measurements_match_kpis(self):
        tilts = TiltVector(tuple([6.0] * 21))
        measured = measure_ues(self.layout, tilts, self.config)
        kpis = compute_kpis(self.layout, tilts, self.config)
        cell = int(np.bincount(measured.serving_cell).argmax())
        attached = measured.serving_cell == cell
        expected_cov = np.mean(measured.rsrp_dbm[attached] < self.config.rsrp_coverage_threshold_dbm)
        expected_qual = np.mean(measured.sinr_db[attached] < self.config.sinr_quality_threshold_db)
        self.assertAlmostEqual(kpis[cell].cov, expected_cov)
        self.assertAlmostEqual(kpis[cell].qual, expected_qual)


if __name__ == '__main__':
    unittest.main()
