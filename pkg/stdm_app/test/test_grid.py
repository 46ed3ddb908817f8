"""
Tests for the icosahedral grid and great-circle geometry
"""

import json
import os
import tempfile
import unittest
from collections import deque

import numpy as np

from mvstdm import grid
from mvstdm.grid import GeoPoint
from mvstdm.utilities import ValidationError


class GeoPointTest(unittest.TestCase):
    """Tests for the GeoPoint value object"""

    def test_bounds(self):
        """lat outside [-pi/2, pi/2] or lon outside [-pi, pi) are rejected"""
        GeoPoint(np.pi / 2, -np.pi)
        self.assertRaises(ValidationError, GeoPoint, 2.0, 0.0)
        self.assertRaises(ValidationError, GeoPoint, 0.0, np.pi)
        self.assertRaises(ValidationError, GeoPoint, np.nan, 0.0)
        self.assertRaises(TypeError, GeoPoint, '0', 0.0)

    def test_from_degrees_wraps_longitude(self):
        """180 degrees east wraps to -180"""
        point = GeoPoint.from_degrees(45.0, 180.0)
        self.assertAlmostEqual(point.lon_deg, -180.0)
        self.assertAlmostEqual(point.lat_deg, 45.0)


class BuildGridTest(unittest.TestCase):
    """Tests for build_icosahedral_grid"""

    def test_node_counts(self):
        """K = 10 * 4**level + 2 with twelve pentagonal nodes"""
        for level, size in ((0, 12), (1, 42), (2, 162), (3, 642)):
            built = grid.build_icosahedral_grid(level)
            self.assertEqual(built.size, size)
            counts = np.array(built.neighbor_count)
            self.assertTrue(set(counts) <= {5, 6})
            self.assertEqual(int(np.sum(counts == 5)), 12)
            self.assertEqual(int(np.sum(counts == 6)), size - 12)

    def test_adjacency_symmetric_and_connected(self):
        """j is a neighbour of i exactly when i is a neighbour of j; one component"""
        for level in range(4):
            built = grid.build_icosahedral_grid(level)
            for i, neighbors in enumerate(built.adjacency):
                self.assertNotIn(i, neighbors)
                for j in neighbors:
                    self.assertIn(i, built.adjacency[j])
            seen = {0}
            queue = deque([0])
            while queue:
                for j in built.adjacency[queue.popleft()]:
                    if j not in seen:
                        seen.add(j)
                        queue.append(j)
            self.assertEqual(len(seen), built.size)

    def test_canonical_order_and_unit_sphere(self):
        """Nodes run from north to south and sit on the unit sphere without duplicates"""
        built = grid.build_icosahedral_grid(2)
        lats = built.lats
        self.assertTrue(np.all(np.diff(np.round(lats, 12)) <= 0))
        np.testing.assert_allclose(np.linalg.norm(built.xyz, axis=1), 1.0, atol=1e-12)
        self.assertEqual(len(np.unique(np.round(built.xyz, 9), axis=0)), built.size)
        self.assertAlmostEqual(lats[0], np.pi / 2)
        self.assertAlmostEqual(lats[-1], -np.pi / 2)

    def test_deterministic(self):
        """Two builds are identical"""
        first = grid.build_icosahedral_grid(2)
        second = grid.build_icosahedral_grid(2)
        self.assertEqual(first.adjacency, second.adjacency)
        self.assertEqual(first.centers, second.centers)

    def test_level_guard(self):
        """Negative levels and levels above the maximum are rejected"""
        self.assertRaises(ValidationError, grid.build_icosahedral_grid, -1)
        self.assertRaises(ValidationError, grid.build_icosahedral_grid, grid.MAX_LEVEL + 1)
        self.assertRaises(TypeError, grid.build_icosahedral_grid, 1.0)
        self.assertRaises(TypeError, grid.build_icosahedral_grid, True)


class DistanceTest(unittest.TestCase):
    """Tests for the great-circle distances"""

    def test_known_distances(self):
        """Identity, quarter circle and antipodal poles"""
        origin = GeoPoint(0.0, 0.0)
        self.assertEqual(grid.great_circle_distance(origin, origin), 0.0)
        self.assertAlmostEqual(grid.great_circle_distance(origin, GeoPoint(0.0, np.pi / 2)),
                               np.pi / 2)
        self.assertAlmostEqual(grid.great_circle_distance(GeoPoint(np.pi / 2, 0.0),
                                                          GeoPoint(-np.pi / 2, 0.0)), np.pi)

    def test_symmetry_and_triangle_inequality(self):
        """Distances are symmetric and satisfy the triangle inequality"""
        rng = np.random.default_rng(4)
        for _ in range(200):
            p, q, r = (GeoPoint(float(np.arcsin(rng.uniform(-1, 1))),
                                float(rng.uniform(-np.pi, np.pi))) for _ in range(3))
            pq = grid.great_circle_distance(p, q)
            self.assertAlmostEqual(pq, grid.great_circle_distance(q, p), places=12)
            self.assertLessEqual(pq, grid.great_circle_distance(p, r)
                                 + grid.great_circle_distance(r, q) + 1e-9)
            self.assertTrue(0.0 <= pq <= np.pi)

    def test_mesh_spacing(self):
        """Level 0 spacing is the icosahedron edge angle and it shrinks with level"""
        level0 = grid.mesh_spacing(grid.build_icosahedral_grid(0))
        self.assertAlmostEqual(level0, np.arccos(1 / np.sqrt(5)), places=10)
        self.assertLess(grid.mesh_spacing(grid.build_icosahedral_grid(1)), level0)


class ExportTest(unittest.TestCase):
    """Tests for the grid export and regular lat/lon points"""

    def test_write_grid(self):
        """The export holds K centers and the adjacency"""
        built = grid.build_icosahedral_grid(1)
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'grid.json')
            grid.write_grid(built, path)
            with open(path, encoding='utf-8') as handle:
                data = json.load(handle)
        self.assertEqual(data['level'], 1)
        self.assertEqual(len(data['centers']), 42)
        self.assertEqual(len(data['adjacency']), 42)

    def test_regular_points(self):
        """Cell centres in descending latitude, ascending longitude"""
        lats, lons = grid.regular_latlon_points(2, 4)
        np.testing.assert_allclose(lats, [45, 45, 45, 45, -45, -45, -45, -45])
        np.testing.assert_allclose(lons, [-135, -45, 45, 135] * 2)
