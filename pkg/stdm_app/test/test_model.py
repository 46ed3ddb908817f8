"""
Tests for the model parameterization and transition projection
"""

import unittest

import numpy as np
from scipy import sparse
from scipy.stats import norm

from mvstdm import model
from mvstdm.utilities import NumericalError, ValidationError


def tiny_obs(T=3, M=2, N=4, seed=0):
    rng = np.random.default_rng(seed)
    lats = np.linspace(-60, 60, N)
    lons = np.linspace(-150, 150, N)
    labels = tuple('2000-%02d' % (t + 1) for t in range(T))
    return model.ObservationTensor(rng.standard_normal((T, M, N)), np.ones((T, M, N), bool),
                                   lats, lons, labels)


class TransitionBlocksTest(unittest.TestCase):
    """Tests for TransitionBlocks and the assembled transition matrix"""

    def setUp(self):
        rng = np.random.default_rng(1)
        self.blocks = model.TransitionBlocks(rng.uniform(-1, 1, (3, 3, 5)))

    def test_vector_round_trip(self):
        """to_vector and from_vector invert each other in row-major order"""
        vector = self.blocks.to_vector()
        self.assertEqual(vector[1 * 15 + 2 * 5 + 4], self.blocks.values[1, 2, 4])
        back = model.TransitionBlocks.from_vector(vector, 3, 5)
        np.testing.assert_array_equal(back.values, self.blocks.values)

    def test_assemble_and_extract(self):
        """Block (i, j) of the assembled matrix is diag(values[i, j])"""
        transition = model.assemble_transition(self.blocks)
        self.assertEqual(transition.shape, (15, 15))
        self.assertEqual(transition.nnz, 3 * 3 * 5)
        dense = transition.toarray()
        np.testing.assert_allclose(np.diag(dense[5:10, 10:15]), self.blocks.values[1, 2])
        np.testing.assert_array_equal(model.extract_blocks(transition, 3).values,
                                      self.blocks.values)

    def test_identity(self):
        """The identity blocks assemble to I_MK"""
        transition = model.assemble_transition(model.TransitionBlocks.identity(2, 4))
        np.testing.assert_array_equal(transition.toarray(), np.eye(8))

    def test_validation(self):
        """Non-square block arrays and non-finite values are rejected"""
        self.assertRaises(ValidationError, model.TransitionBlocks, np.zeros((2, 3, 4)))
        self.assertRaises(ValidationError, model.TransitionBlocks, np.full((1, 1, 2), np.nan))

    def test_dict_round_trip(self):
        """to_dict carries M, K and the blocks"""
        data = self.blocks.to_dict()
        self.assertEqual((data['M'], data['K']), (3, 5))
        np.testing.assert_array_equal(model.TransitionBlocks.from_dict(data).values,
                                      self.blocks.values)
        data['K'] = 4
        self.assertRaises(ValidationError, model.TransitionBlocks.from_dict, data)


class PriorsTest(unittest.TestCase):
    """Tests for the prior and variance containers"""

    def test_default(self):
        """Scalars broadcast to length MK and hyperparameters stay positive"""
        priors = model.Priors.default(2, 3, m0=0.5, c0=2.0, lam=0.1)
        self.assertEqual(priors.m0.shape, (6,))
        np.testing.assert_allclose(priors.c0, 2.0)
        self.assertEqual(priors.lam, 0.1)
        self.assertRaises(ValidationError, model.Priors.default, 2, 3, lam=0.0)
        self.assertRaises(ValidationError, model.Priors.default, 2, 3, c0=-1.0)

    def test_minnesota_mean(self):
        """Ones on own lags, zeros on cross lags"""
        mean = model.minnesota_mean(2, 3)
        np.testing.assert_array_equal(mean[0, 0], 1.0)
        np.testing.assert_array_equal(mean[0, 1], 0.0)

    def test_variance_params(self):
        """sigma2 is T x M and tau2 has length M"""
        params = model.VarianceParams.ones(4, 2)
        self.assertEqual(params.sigma2.shape, (4, 2))
        self.assertRaises(ValidationError, model.VarianceParams, np.ones((4, 2)), np.ones(3))
        self.assertRaises(ValidationError, model.VarianceParams, np.zeros((4, 2)), np.ones(2))


class ObservationTensorTest(unittest.TestCase):
    """Tests for ObservationTensor"""

    def test_masked_values_zeroed(self):
        """Masked-out entries are zeroed, even when they hold NaN"""
        values = np.ones((2, 1, 3))
        values[0, 0, 1] = np.nan
        mask = np.ones((2, 1, 3), bool)
        mask[0, 0, 1] = False
        obs = model.ObservationTensor(values, mask, [0, 1, 2], [0, 1, 2], ('a', 'b'))
        self.assertEqual(obs.values[0, 0, 1], 0.0)
        self.assertEqual(obs.variable_names, ('var1',))

    def test_shape_checks(self):
        """Mismatched masks, locations and labels are rejected"""
        values = np.zeros((2, 1, 3))
        self.assertRaises(ValidationError, model.ObservationTensor, values,
                          np.ones((2, 1, 2), bool), [0, 1, 2], [0, 1, 2], ('a', 'b'))
        self.assertRaises(ValidationError, model.ObservationTensor, values,
                          np.ones((2, 1, 3), bool), [0, 1], [0, 1, 2], ('a', 'b'))
        self.assertRaises(ValidationError, model.ObservationTensor, values,
                          np.ones((2, 1, 3), bool), [0, 1, 2], [0, 1, 2], ('a',))

    def test_without_and_select(self):
        """without masks the holdout and select keeps the named variables"""
        obs = tiny_obs()
        holdout = np.zeros(obs.shape, bool)
        holdout[0, 1, 2] = True
        reduced = obs.without(holdout)
        self.assertFalse(reduced.mask[0, 1, 2])
        self.assertEqual(int(reduced.mask.sum()), obs.mask.size - 1)
        single = obs.select(['var2'])
        self.assertEqual(single.M, 1)
        np.testing.assert_array_equal(single.values[:, 0], obs.values[:, 1])
        self.assertRaises(ValidationError, obs.select, ['missing'])


class ProjectionTest(unittest.TestCase):
    """Tests for project_transition_block"""

    def setUp(self):
        self.phi = sparse.csr_matrix(np.array([[1.0, 0.5, 0.0],
                                               [0.0, 0.25, 0.75],
                                               [0.2, 0.2, 0.2]]))

    def test_constants_map_to_themselves(self):
        """A constant coefficient vector projects to the same constant"""
        np.testing.assert_allclose(model.project_transition_block(self.phi, np.full(3, 0.7)),
                                   0.7)

    def test_weighted_average(self):
        """Each location gets the basis-weighted mean of the coefficients"""
        a = np.array([1.0, 2.0, 4.0])
        projected = model.project_transition_block(self.phi, a)
        self.assertAlmostEqual(projected[0], (1.0 + 1.0) / 1.5)
        self.assertAlmostEqual(projected[1], (0.5 + 3.0) / 1.0)

    def test_zero_column_padding(self):
        """Padding phi with an empty column leaves the projection unchanged"""
        a = np.array([1.0, -2.0, 0.5])
        padded = sparse.hstack([self.phi, sparse.csr_matrix((3, 1))]).tocsr()
        np.testing.assert_allclose(model.project_transition_block(padded, np.append(a, 9.0)),
                                   model.project_transition_block(self.phi, a))

    def test_empty_row(self):
        """A row summing to 0 raises NumericalError naming the location"""
        phi = sparse.csr_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
        with self.assertRaises(NumericalError) as caught:
            model.project_transition_block(phi, np.ones(2), lats=[10.0, 20.0],
                                           lons=[30.0, 40.0])
        self.assertIn('location 1', str(caught.exception))


class LikelihoodTest(unittest.TestCase):
    """Tests for log_likelihood and fitted_values"""

    def test_matches_direct_sum(self):
        """The log likelihood sums Gaussian log densities over observed entries"""
        obs = tiny_obs(T=2, M=1, N=3)
        phi = sparse.csr_matrix(np.eye(3))
        states = model.StateSequence(np.arange(9.0).reshape(3, 3) / 10.0)
        sigma2 = np.array([[1.0], [2.0]])
        expected = sum(norm.logpdf(obs.values[t, 0, s], loc=states.alphas[t + 1, s],
                                   scale=np.sqrt(sigma2[t, 0]))
                       for t in range(2) for s in range(3))
        self.assertAlmostEqual(model.log_likelihood(obs, states, phi, sigma2), expected)
        np.testing.assert_allclose(model.fitted_values(states, phi, 1)[:, 0],
                                   states.alphas[1:])
