"""
Tests for the dataset and draw directory layouts
"""

import os
import tempfile
import unittest

import numpy as np

from mvstdm import storage
from mvstdm.grid import regular_latlon_points
from mvstdm.model import ObservationTensor, StateSequence
from mvstdm.sampler import ChainDraws, PosteriorDraws
from mvstdm.simulate import monthly_labels
from mvstdm.utilities import ValidationError


def sample_obs(T=4, M=2, n_lat=3, n_lon=4, seed=0):
    rng = np.random.default_rng(seed)
    lats, lons = regular_latlon_points(n_lat, n_lon)
    mask = np.ones((T, M, lats.size), bool)
    mask[1, 1, 5] = False
    return ObservationTensor(rng.standard_normal(mask.shape) / 3.0, mask, lats, lons,
                             monthly_labels('2001-01', T), ('T50', 'U50')[:M])


def sample_draws(fixed=False, states=True, T=4, M=2, K=3):
    rng = np.random.default_rng(4)
    chains = []
    for chain in range(2):
        n_draws = 3 + chain
        chains.append(ChainDraws(
            chain=chain,
            iterations=np.arange(10, 10 + 2 * n_draws, 2),
            tau2=rng.gamma(2.0, size=(n_draws, M)),
            sigma2=rng.gamma(2.0, size=(n_draws, T, M)),
            transition=None if fixed else rng.standard_normal((n_draws, M, M, K)),
            states=rng.standard_normal((n_draws, T + 1, M * K)) if states else None,
            log_lik=rng.standard_normal(n_draws) * 100,
            elapsed=1.5,
        ))
    return PosteriorDraws(tuple(chains))


class DatasetTest(unittest.TestCase):
    """Tests for write_dataset and read_dataset"""

    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.path = self.directory.name

    def tearDown(self):
        self.directory.cleanup()

    def test_round_trip(self):
        """Values, mask, locations and labels read back exactly"""
        obs = sample_obs()
        states = StateSequence(np.random.default_rng(1).standard_normal((5, 6)))
        storage.write_dataset(obs, self.path, states=states, truth={'tau2': [1.0, 2.0]},
                              extra={'n_lat': 3, 'n_lon': 4})
        back, manifest = storage.read_dataset(self.path)
        np.testing.assert_array_equal(back.values, obs.values)
        np.testing.assert_array_equal(back.mask, obs.mask)
        np.testing.assert_array_equal(back.lats, obs.lats)
        np.testing.assert_array_equal(back.lons, obs.lons)
        self.assertEqual(back.time_labels, obs.time_labels)
        self.assertEqual(back.variable_names, ('T50', 'U50'))
        self.assertEqual(manifest['n_lat'], 3)
        self.assertEqual(storage.read_truth(self.path), {'tau2': [1.0, 2.0]})
        read = storage.read_states(os.path.join(self.path, storage.STATES_FILE))
        np.testing.assert_array_equal(read.alphas, states.alphas)

    def test_round_trip_is_exact(self):
        """Every bit of a larger standard normal tensor survives the CSV files"""
        rng = np.random.default_rng(7)
        lats, lons = regular_latlon_points(12, 24)
        values = rng.standard_normal((24, 3, lats.size))
        obs = ObservationTensor(values, np.ones(values.shape, bool), lats, lons,
                                monthly_labels('1990-01', 24), ('var1', 'var2', 'var3'))
        storage.write_dataset(obs, self.path)
        back, _ = storage.read_dataset(self.path)
        self.assertTrue(np.array_equal(back.values, values))
        self.assertEqual(back.values.tobytes(), values.tobytes())

    def test_layout(self):
        """One CSV per variable, time-major, empty where missing"""
        storage.write_dataset(sample_obs(), self.path)
        with open(os.path.join(self.path, 'U50.csv'), encoding='utf-8') as handle:
            lines = handle.read().splitlines()
        self.assertEqual(lines[0], 'time,lat,lon,value')
        self.assertEqual(len(lines), 1 + 4 * 12)
        self.assertTrue(lines[1].startswith('2001-01,'))
        self.assertTrue(lines[1 + 12 + 5].endswith(','))
        self.assertIsNone(storage.read_truth(self.path))

    def test_truncated_file(self):
        """A variable file with missing rows is rejected"""
        storage.write_dataset(sample_obs(), self.path)
        path = os.path.join(self.path, 'T50.csv')
        with open(path, encoding='utf-8') as handle:
            lines = handle.read().splitlines()
        with open(path, 'w', encoding='utf-8') as handle:
            handle.write('\n'.join(lines[:-1]) + '\n')
        self.assertRaises(ValidationError, storage.read_dataset, self.path)

    def test_bad_manifest(self):
        """A manifest without the time axis is rejected"""
        storage.write_json({'variables': ['T50'], 'N': 3},
                           os.path.join(self.path, storage.DATASET_MANIFEST))
        self.assertRaises(ValidationError, storage.read_dataset, self.path)


class DrawsTest(unittest.TestCase):
    """Tests for write_draws and read_draws"""

    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.path = self.directory.name
        self.manifest = {'M': 2, 'K': 3, 'T': 4,
                         'chains': [{'chain': 0, 'n_draws': 3, 'elapsed_seconds': 1.5},
                                    {'chain': 1, 'n_draws': 4, 'elapsed_seconds': 1.5}]}

    def tearDown(self):
        self.directory.cleanup()

    def test_round_trip(self):
        """Every chain and parameter family reads back exactly"""
        draws = sample_draws()
        storage.write_draws(draws, self.path, self.manifest)
        back, manifest = storage.read_draws(self.path)
        self.assertEqual(manifest['K'], 3)
        self.assertEqual(len(back.chains), 2)
        for written, read in zip(draws.chains, back.chains):
            self.assertEqual(read.chain, written.chain)
            np.testing.assert_array_equal(read.iterations, written.iterations)
            for name in ('tau2', 'sigma2', 'transition', 'states', 'log_lik'):
                np.testing.assert_array_equal(getattr(read, name), getattr(written, name))
            self.assertEqual(read.elapsed, 1.5)

    def test_fixed_transition(self):
        """A fixed transition writes no transition.csv and reads back as fixed"""
        storage.write_draws(sample_draws(fixed=True, states=False), self.path, self.manifest)
        self.assertFalse(os.path.exists(os.path.join(self.path, 'transition.csv')))
        self.assertFalse(os.path.exists(os.path.join(self.path, 'states.csv')))
        back, _ = storage.read_draws(self.path)
        self.assertTrue(back.fixed_transition)
        self.assertFalse(back.has_states)

    def test_overwrite_removes_stale_files(self):
        """Rewriting a directory without transition draws drops the old file"""
        storage.write_draws(sample_draws(), self.path, self.manifest)
        storage.write_draws(sample_draws(fixed=True), self.path, self.manifest)
        self.assertFalse(os.path.exists(os.path.join(self.path, 'transition.csv')))

    def test_manifest_needs_dimensions(self):
        """read_draws needs M, K and T"""
        storage.write_draws(sample_draws(), self.path, {'M': 2})
        self.assertRaises(ValidationError, storage.read_draws, self.path)
