"""
This module holds the model parameterization: transition blocks, variance
parameters, priors, state sequences, the observation tensor and the
projection of transition blocks onto the observation locations
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.stats import norm

from mvstdm.basis import check_sparse
from mvstdm.grid import GeoPoint
from mvstdm.utilities import NumericalError, ValidationError, check_finite_array, \
    check_positive, check_positive_int, check_shape, check_type, freeze


@dataclass(frozen=True)
class TransitionBlocks:
    """
    The M x M array of length-K coefficient vectors; values[i, j] holds the
    diagonal of block A_ij (the effect of variable j at t-1 on variable i at t)
    """
    values: np.ndarray

    def __post_init__(self):
        values = check_finite_array(self.values, 'transition blocks')
        if values.ndim != 3 or values.shape[0] != values.shape[1]:
            raise ValidationError('transition blocks should have shape (M, M, K)')
        object.__setattr__(self, 'values', freeze(values))

    @property
    def M(self):
        return self.values.shape[0]

    @property
    def K(self):
        return self.values.shape[2]

    def block(self, i, j):
        return self.values[i, j]

    def to_vector(self):
        """Row-major coefficient vector: variable i's blocks A_i1..A_iM in turn"""
        return self.values.reshape(-1).copy()

    @classmethod
    def from_vector(cls, vector, M, K):
        return cls(np.asarray(vector, dtype=float).reshape(M, M, K))

    @classmethod
    def identity(cls, M, K):
        """A = I_MK, the random-walk transition"""
        return cls(minnesota_mean(M, K))

    def to_dict(self):
        return {'M': self.M, 'K': self.K, 'blocks': self.values.tolist()}

    @classmethod
    def from_dict(cls, data):
        blocks = cls(np.array(data['blocks'], dtype=float))
        if blocks.M != data['M'] or blocks.K != data['K']:
            raise ValidationError('transition blocks do not match the declared M and K')
        return blocks


def minnesota_mean(M, K):
    """Prior mean of the blocks: 1 on own lags, 0 on cross lags"""
    M = check_positive_int(M, 'M')
    K = check_positive_int(K, 'K')
    mean = np.zeros((M, M, K))
    mean[np.arange(M), np.arange(M), :] = 1.0
    return mean


@dataclass(frozen=True)
class VarianceParams:
    """sigma2 (T x M) measurement variances and tau2 (M) innovation scales"""
    sigma2: np.ndarray
    tau2: np.ndarray

    def __post_init__(self):
        sigma2 = check_finite_array(self.sigma2, 'sigma2', positive=True)
        tau2 = check_finite_array(self.tau2, 'tau2', positive=True)
        if sigma2.ndim != 2 or tau2.ndim != 1 or sigma2.shape[1] != tau2.shape[0]:
            raise ValidationError('sigma2 should be T x M and tau2 should have length M')
        object.__setattr__(self, 'sigma2', freeze(sigma2))
        object.__setattr__(self, 'tau2', freeze(tau2))

    @classmethod
    def ones(cls, T, M):
        return cls(np.ones((T, M)), np.ones(M))


@dataclass(frozen=True)
class Priors:
    """
    alpha_0 ~ N(m0, diag(c0)), blocks ~ N(minnesota mean, lam I),
    sigma2 ~ IG(a_sigma, b_sigma), tau2 ~ IG(a_tau, b_tau)
    """
    m0: np.ndarray
    c0: np.ndarray
    a_sigma: float = 1.0
    b_sigma: float = 1.0
    a_tau: float = 1.0
    b_tau: float = 1.0
    lam: float = 0.25

    def __post_init__(self):
        m0 = check_finite_array(self.m0, 'm0').ravel()
        c0 = check_finite_array(self.c0, 'C0 diagonal', positive=True).ravel()
        if m0.shape != c0.shape:
            raise ValidationError('m0 and the C0 diagonal should have the same length')
        object.__setattr__(self, 'm0', freeze(m0))
        object.__setattr__(self, 'c0', freeze(c0))
        for name in ('a_sigma', 'b_sigma', 'a_tau', 'b_tau', 'lam'):
            object.__setattr__(self, name, check_positive(getattr(self, name), name))

    @classmethod
    def default(cls, M, K, m0=0.0, c0=1.0, **hyper):
        """Scalar m0 and C0 broadcast to length MK"""
        size = check_positive_int(M, 'M') * check_positive_int(K, 'K')
        return cls(np.full(size, float(m0)), np.full(size, float(c0)), **hyper)


@dataclass(frozen=True)
class StateSequence:
    """alphas[t] is the length-MK state at t = 0..T"""
    alphas: np.ndarray

    def __post_init__(self):
        alphas = check_finite_array(self.alphas, 'states')
        if alphas.ndim != 2 or alphas.shape[0] < 1:
            raise ValidationError('states should have shape (T + 1, MK)')
        object.__setattr__(self, 'alphas', freeze(alphas))

    @property
    def T(self):
        return self.alphas.shape[0] - 1

    def by_variable(self, M):
        """States reshaped to (T + 1, M, K)"""
        return self.alphas.reshape(self.alphas.shape[0], M, -1)


@dataclass(frozen=True)
class ObservationTensor:
    """
    values and mask are T x M x N, mask True where observed.
    Masked-out values are zeroed so they cannot leak into any computation
    """
    values: np.ndarray
    mask: np.ndarray
    lats: np.ndarray
    lons: np.ndarray
    time_labels: tuple
    variable_names: tuple = field(default=())

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 3:
            raise ValidationError('observation values should be T x M x N')
        check_shape(mask, values.shape, 'mask')
        values = np.where(mask, values, 0.0)
        if not np.all(np.isfinite(values)):
            raise ValidationError('observed values should be finite')
        T, M, N = values.shape
        lats = check_shape(np.asarray(self.lats, dtype=float), (N,), 'lats')
        lons = check_shape(np.asarray(self.lons, dtype=float), (N,), 'lons')
        if len(self.time_labels) != T:
            raise ValidationError('expected %d time labels, got %d' % (T, len(self.time_labels)))
        names = tuple(self.variable_names) or tuple('var%d' % (i + 1) for i in range(M))
        if len(names) != M:
            raise ValidationError('expected %d variable names, got %d' % (M, len(names)))
        object.__setattr__(self, 'values', freeze(values))
        object.__setattr__(self, 'mask', freeze(mask))
        object.__setattr__(self, 'lats', freeze(lats))
        object.__setattr__(self, 'lons', freeze(lons))
        object.__setattr__(self, 'time_labels', tuple(str(label) for label in self.time_labels))
        object.__setattr__(self, 'variable_names', names)

    @property
    def shape(self):
        return self.values.shape

    @property
    def T(self):
        return self.values.shape[0]

    @property
    def M(self):
        return self.values.shape[1]

    @property
    def N(self):
        return self.values.shape[2]

    def locations(self):
        """Observation locations as GeoPoints (lats/lons are in degrees)"""
        return tuple(GeoPoint.from_degrees(lat, lon) for lat, lon in zip(self.lats, self.lons))

    def without(self, holdout):
        """A copy with the entries flagged in the T x M x N holdout array masked out"""
        holdout = check_shape(np.asarray(holdout, dtype=bool), self.shape, 'holdout')
        return ObservationTensor(self.values, self.mask & ~holdout, self.lats, self.lons,
                                 self.time_labels, self.variable_names)

    def select(self, variables):
        """A copy restricted to the named (or indexed) variables"""
        index = [self.variable_index(v) for v in variables]
        return ObservationTensor(self.values[:, index], self.mask[:, index], self.lats,
                                 self.lons, self.time_labels,
                                 tuple(self.variable_names[i] for i in index))

    def variable_index(self, variable):
        if isinstance(variable, (int, np.integer)):
            if not 0 <= variable < self.M:
                raise ValidationError('variable index %d out of range' % variable)
            return int(variable)
        try:
            return self.variable_names.index(variable)
        except ValueError:
            raise ValidationError('unknown variable %r, expected one of %s'
                                  % (variable, ', '.join(self.variable_names)))


def assemble_transition(blocks):
    """The MK x MK transition matrix whose (i, j) block is diag(values[i, j])"""
    check_type(blocks, TransitionBlocks, error_string='blocks should be TransitionBlocks')
    M, K = blocks.M, blocks.K
    i, j, k = np.meshgrid(np.arange(M), np.arange(M), np.arange(K), indexing='ij')
    rows = (i * K + k).ravel()
    cols = (j * K + k).ravel()
    # explicit zeros are kept so the pattern always has M*M*K entries
    return sparse.csr_matrix((blocks.values.ravel(), (rows, cols)), shape=(M * K, M * K))


def extract_blocks(transition, M):
    """Recovers TransitionBlocks from an assembled MK x MK transition matrix"""
    transition = sparse.csr_matrix(transition)
    K = transition.shape[0] // M
    values = np.empty((M, M, K))
    for i in range(M):
        for j in range(M):
            values[i, j] = transition[i * K:(i + 1) * K, j * K:(j + 1) * K].diagonal()
    return TransitionBlocks(values)


def project_numerator(phi, a_ij):
    """Phi a_ij, the raw basis-weighted sum at each location"""
    phi = check_sparse(phi, 'basis matrix')
    a_ij = check_shape(check_finite_array(a_ij, 'a_ij'), (phi.shape[1],), 'a_ij')
    return phi @ a_ij


def project_transition_block(phi, a_ij, lats=None, lons=None):
    """
    (Phi a_ij) / (Phi 1_K) per location: the basis-weighted average of the
    coefficients, which keeps the coefficient scale and maps constants to
    themselves
    """
    phi = check_sparse(phi, 'basis matrix')
    numerator = project_numerator(phi, a_ij)
    denominator = np.asarray(phi.sum(axis=1)).ravel()
    empty = np.flatnonzero(denominator == 0)
    if empty.size:
        s = empty[0]
        where = 'location %d' % s
        if lats is not None and lons is not None:
            where += ' (lat %.4f, lon %.4f)' % (lats[s], lons[s])
        raise NumericalError('basis matrix row sums to 0 at %s, cannot project' % where)
    return numerator / denominator


def measurement_variances(sigma2, N):
    """Expands T x M variances to the T x M x N diagonal of V_t"""
    sigma2 = np.asarray(sigma2, dtype=float)
    return np.repeat(sigma2[:, :, None], N, axis=2)


def fitted_values(states, phi, M):
    """Phi alpha_t^(i) for t = 1..T as a T x M x N array"""
    alphas = states.by_variable(M)[1:]
    return alphas @ phi.T.toarray()


def log_likelihood(obs, states, phi_m, sigma2):
    """
    Sum over observed entries of the Gaussian log density with mean
    Phi_M alpha_t and variance sigma2[t, i]
    """
    check_type(obs, ObservationTensor, error_string='obs should be an ObservationTensor')
    check_type(states, StateSequence, error_string='states should be a StateSequence')
    sigma2 = np.asarray(sigma2, dtype=float)
    check_shape(sigma2, (obs.T, obs.M), 'sigma2')
    if np.any(sigma2 <= 0):
        raise ValidationError('measurement variances should be greater than 0')
    if states.T != obs.T:
        raise ValidationError('states cover %d times, observations %d' % (states.T, obs.T))
    phi_m = check_sparse(phi_m, 'expanded basis')
    means = (phi_m @ states.alphas[1:].T).T.reshape(obs.shape)
    scale = np.sqrt(measurement_variances(sigma2, obs.N))
    density = norm.logpdf(obs.values, loc=means, scale=scale)
    return float(np.sum(density[obs.mask]))
