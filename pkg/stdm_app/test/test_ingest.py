"""
Tests for regridding, climatologies and anomaly standardization
"""

import os
import tempfile
import unittest

import numpy as np

from mvstdm import ingest
from mvstdm.simulate import monthly_labels
from mvstdm.utilities import ValidationError


def series(values, mask=None, name='T50', start='1980-01'):
    values = np.asarray(values, dtype=float)
    if mask is None:
        mask = np.ones(values.shape, bool)
    return ingest.GriddedSeries(name, monthly_labels(start, values.shape[0]), values, mask)


def band_weights(n_lat):
    return np.diff(np.sin(np.radians(ingest.lat_edges(n_lat))))


class GriddedSeriesTest(unittest.TestCase):
    """Tests for GriddedSeries validation"""

    def test_centres(self):
        """Cell centres run south to north and west to east"""
        grid = series(np.zeros((1, 2, 4)))
        np.testing.assert_allclose(grid.lat_centers, [-45.0, 45.0])
        np.testing.assert_allclose(grid.lon_centers, [-135.0, -45.0, 45.0, 135.0])
        self.assertEqual(grid.months[0], 1)

    def test_invalid(self):
        """Bad labels, decreasing times and mismatched masks are rejected"""
        values = np.zeros((2, 1, 1))
        self.assertRaises(ValidationError, ingest.GriddedSeries, 'x', ('1980-01',), values,
                          np.ones((2, 1, 1), bool))
        self.assertRaises(ValidationError, ingest.GriddedSeries, 'x', ('1980-02', '1980-01'),
                          values, np.ones((2, 1, 1), bool))
        self.assertRaises(ValidationError, ingest.GriddedSeries, 'x', ('first', 'second'),
                          values, np.ones((2, 1, 1), bool))
        self.assertRaises(ValidationError, ingest.GriddedSeries, 'x', ('1980-01', '1980-02'),
                          values, np.ones((2, 2, 1), bool))

    def test_select_period(self):
        """Inclusive YYYY-MM bounds"""
        selected = ingest.select_period(series(np.zeros((24, 1, 1))), '1980-06', '1981-01')
        self.assertEqual(selected.times[0], '1980-06')
        self.assertEqual(len(selected.times), 8)
        self.assertRaises(ValidationError, ingest.select_period, selected, '1990-01', '1990-12')


class RegridTest(unittest.TestCase):
    """Tests for regrid_average"""

    def test_constant_field(self):
        """A constant field stays constant"""
        regridded = ingest.regrid_average(series(np.full((2, 6, 12), 3.0)), 3, 4)
        np.testing.assert_allclose(regridded.values, 3.0)
        self.assertTrue(regridded.mask.all())

    def test_unweighted_block(self):
        """Four equal cells average to their plain mean"""
        source = series(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
        regridded = ingest.regrid_average(source, 1, 1, weighted=False)
        self.assertAlmostEqual(regridded.values[0, 0, 0], 2.5)

    def test_area_weighted_block(self):
        """Bands of area 0.5, 1 and 0.5 weight 1, 2 and 4 to 2.25"""
        source = series(np.array([[[1.0], [2.0], [4.0]]]))
        regridded = ingest.regrid_average(source, 1, 1)
        self.assertAlmostEqual(regridded.values[0, 0, 0], 2.25)

    def test_global_mean_preserved(self):
        """The area-weighted global mean does not change"""
        rng = np.random.default_rng(0)
        source = series(rng.standard_normal((3, 12, 24)))
        target = ingest.regrid_average(source, 4, 8)
        for t in range(3):
            before = np.average(source.values[t].mean(axis=1), weights=band_weights(12))
            after = np.average(target.values[t].mean(axis=1), weights=band_weights(4))
            self.assertAlmostEqual(before, after, places=12)

    def test_missing_cells(self):
        """Missing sources are left out and a fully missing target stays missing"""
        values = np.arange(16.0).reshape(1, 4, 4)
        mask = np.ones(values.shape, bool)
        mask[0, :2, :2] = False
        mask[0, 2, 2] = False
        regridded = ingest.regrid_average(series(values, mask), 2, 2, weighted=False)
        self.assertFalse(regridded.mask[0, 0, 0])
        self.assertEqual(regridded.values[0, 0, 0], 0.0)
        self.assertAlmostEqual(regridded.values[0, 1, 1], (11.0 + 14.0 + 15.0) / 3.0)


class ClimatologyTest(unittest.TestCase):
    """Tests for compute_climatology and the anomaly transforms"""

    def setUp(self):
        rng = np.random.default_rng(1)
        seasonal = 10.0 * np.sin(np.arange(60) * np.pi / 6.0)[:, None, None]
        self.series = series(seasonal + rng.standard_normal((60, 2, 3)))

    def test_alternating_signs(self):
        """+1 and -1 in alternate years give mean 0 and std sqrt(12 / 11)"""
        years = np.repeat((-1.0) ** np.arange(12), 12)
        clim = ingest.compute_climatology(series(years.reshape(-1, 1, 1)))
        np.testing.assert_allclose(clim.mean, 0.0, atol=1e-12)
        np.testing.assert_allclose(clim.std, np.sqrt(12.0 / 11.0))
        np.testing.assert_array_equal(clim.count, 12)

    def test_single_observation(self):
        """One observation for a month and cell raises ValidationError"""
        with self.assertRaises(ValidationError) as caught:
            ingest.compute_climatology(series(np.ones((12, 1, 1))))
        self.assertIn('only one observation', str(caught.exception))

    def test_reference_years(self):
        """Only the reference years enter the climatology"""
        clim = ingest.compute_climatology(self.series, reference_years=(1980, 1982))
        np.testing.assert_array_equal(clim.count, 3)
        expected = self.series.values[0:36:12].mean(axis=0)
        np.testing.assert_allclose(clim.mean[0], expected)

    def test_round_trip(self):
        """restore_anomalies inverts standardize_anomalies"""
        clim = ingest.compute_climatology(self.series)
        anomalies = ingest.standardize_anomalies(self.series, clim)
        january = anomalies.values[0::12]
        np.testing.assert_allclose(january.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(january.std(axis=0, ddof=1), 1.0)
        restored = ingest.restore_anomalies(anomalies, clim)
        np.testing.assert_allclose(restored.values, self.series.values, atol=1e-10)

    def test_zero_std(self):
        """A constant cell cannot be standardized"""
        constant = series(np.full((24, 1, 2), 5.0))
        clim = ingest.compute_climatology(constant)
        self.assertFalse(clim.defined.any())
        self.assertRaises(ValidationError, ingest.standardize_anomalies, constant, clim)


class TensorTest(unittest.TestCase):
    """Tests for the conversion to observation tensors"""

    def test_canonical_order(self):
        """The northern row comes first"""
        values = np.arange(6.0).reshape(1, 2, 3)
        obs = ingest.to_observation_tensor([series(values), series(values * 2, name='U50')])
        self.assertEqual(obs.shape, (1, 2, 6))
        np.testing.assert_array_equal(obs.values[0, 0, :3], [3.0, 4.0, 5.0])
        np.testing.assert_array_equal(obs.lats[:3], 45.0)
        self.assertEqual(obs.variable_names, ('T50', 'U50'))
        back = ingest.from_observation_tensor(obs, 2, 3)
        np.testing.assert_array_equal(back[1].values, values * 2)

    def test_missing_cell(self):
        """A missing cell gives exactly one unobserved entry"""
        mask = np.ones((2, 2, 3), bool)
        mask[1, 0, 2] = False
        obs = ingest.to_observation_tensor([series(np.ones((2, 2, 3)), mask)])
        self.assertEqual(int((~obs.mask).sum()), 1)
        self.assertFalse(obs.mask[1, 0, 5])

    def test_alignment(self):
        """Different grids or time axes are rejected"""
        first = series(np.ones((2, 2, 3)))
        self.assertRaises(ValidationError, ingest.to_observation_tensor,
                          [first, series(np.ones((2, 3, 3)), name='U50')])
        self.assertRaises(ValidationError, ingest.to_observation_tensor,
                          [first, series(np.ones((2, 2, 3)), name='U50', start='1990-01')])
        self.assertRaises(ValidationError, ingest.to_observation_tensor, [])


class CsvTest(unittest.TestCase):
    """Tests for the gridded CSV layout"""

    def test_round_trip(self):
        """Values, missing cells and the time axis read back unchanged"""
        rng = np.random.default_rng(2)
        mask = np.ones((3, 2, 4), bool)
        mask[2, 1, 3] = False
        original = series(rng.standard_normal((3, 2, 4)), mask)
        with tempfile.TemporaryDirectory() as directory:
            csv_path = os.path.join(directory, 'T50.csv')
            manifest_path = os.path.join(directory, 'T50.json')
            ingest.write_gridded_csv(original, csv_path, manifest_path)
            back = ingest.read_gridded_csv(csv_path, manifest_path)
        self.assertEqual(back.times, original.times)
        np.testing.assert_array_equal(back.mask, original.mask)
        np.testing.assert_array_equal(back.values, original.values)

    def test_unknown_times(self):
        """Rows outside the manifest time axis are rejected"""
        with tempfile.TemporaryDirectory() as directory:
            csv_path = os.path.join(directory, 'T50.csv')
            manifest_path = os.path.join(directory, 'T50.json')
            ingest.write_gridded_csv(series(np.ones((2, 1, 2))), csv_path, manifest_path)
            with open(manifest_path, 'w', encoding='utf-8') as handle:
                handle.write('{"variable": "T50", "n_lat": 1, "n_lon": 2, "times": ["1980-01"]}')
            self.assertRaises(ValidationError, ingest.read_gridded_csv, csv_path, manifest_path)

    def test_repeated_rows(self):
        """Two rows for the same month and cell are rejected"""
        with tempfile.TemporaryDirectory() as directory:
            csv_path = os.path.join(directory, 'T50.csv')
            manifest_path = os.path.join(directory, 'T50.json')
            ingest.write_gridded_csv(series(np.ones((2, 1, 2))), csv_path, manifest_path)
            with open(csv_path, encoding='utf-8') as handle:
                lines = handle.read().splitlines()
            with open(csv_path, 'w', encoding='utf-8') as handle:
                handle.write('\n'.join(lines + [lines[2].replace(',1', ',7')]) + '\n')
            with self.assertRaises(ValidationError) as caught:
                ingest.read_gridded_csv(csv_path, manifest_path)
        self.assertIn('repeated', str(caught.exception))

    def test_climatology_export(self):
        """Twelve rows per cell with lat, lon, month, mean and std"""
        data = series(np.arange(48.0).reshape(24, 1, 2))
        clim = ingest.compute_climatology(data)
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'clim.csv')
            ingest.write_climatology(data, clim, path)
            with open(path, encoding='utf-8') as handle:
                lines = handle.read().splitlines()
        self.assertEqual(lines[0], 'lat,lon,month,mean,std')
        self.assertEqual(len(lines), 1 + 24)
