"""
This module builds the sparse Wendland basis matrix, the SAR matrix and
the Kronecker-structured precision assemblies
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse
from scipy.spatial import cKDTree

from mvstdm.grid import BasisGrid, GeoPoint, great_circle_distances, mesh_spacing, \
    to_cartesian
from mvstdm.utilities import NumericalError, ValidationError, check_finite_array, \
    check_positive, check_positive_int, check_type

logger = logging.getLogger(__name__)

DEFAULT_RANGE_FACTOR = 2.5
DROP_TOLERANCE = 1e-15


@dataclass(frozen=True)
class BasisSpec:
    """Grid, Wendland range factor and the N observation locations"""
    grid: BasisGrid
    obs_locations: tuple
    range_factor: float = DEFAULT_RANGE_FACTOR

    def __post_init__(self):
        check_type(self.grid, BasisGrid, error_string='grid should be a BasisGrid')
        check_positive(self.range_factor, 'range_factor')
        for point in self.obs_locations:
            check_type(point, GeoPoint, error_string='obs_locations should hold GeoPoints')

    @property
    def theta(self):
        """The Wendland support radius in radians"""
        return self.range_factor * mesh_spacing(self.grid)


@dataclass(frozen=True)
class SarSpec:
    grid: BasisGrid
    kappa: float

    def __post_init__(self):
        check_type(self.grid, BasisGrid, error_string='grid should be a BasisGrid')
        check_type(self.kappa, int, float, np.integer, np.floating,
                   error_string='kappa should be a number')
        if not np.isfinite(self.kappa) or self.kappa <= 0:
            raise ValidationError('kappa should be greater than 0, got %r' % self.kappa)


def wendland(d):
    """
    The compactly supported Wendland function
    (1 - d)**6 * (35 d**2 + 18 d + 3) / 3 on [0, 1] and 0 beyond.
    Accepts scalars or arrays
    """
    d = np.asarray(d, dtype=float)
    if np.any(~np.isfinite(d)) or np.any(d < 0):
        raise ValidationError('wendland is defined for finite d >= 0 only')
    inside = np.clip(1.0 - d, 0.0, None)
    value = inside ** 6 * (35.0 * d ** 2 + 18.0 * d + 3.0) / 3.0
    value = np.where(d > 1.0, 0.0, value)
    return float(value) if value.ndim == 0 else value


def check_sparse(matrix, name='matrix'):
    """
    Returns matrix as a canonical CSR matrix: indices in range,
    duplicates summed, stored values finite
    """
    if not sparse.issparse(matrix):
        raise TypeError('%s should be a scipy sparse matrix' % name)
    matrix = sparse.csr_matrix(matrix)
    matrix.sum_duplicates()
    matrix.sort_indices()
    if not np.all(np.isfinite(matrix.data)):
        raise ValidationError('%s has non-finite stored values' % name)
    return matrix


def build_basis_matrix(spec):
    """
    The N x K basis matrix with entry (s, k) = wendland(gcd(s, k) / theta).
    Exact zeros are structurally absent
    """
    check_type(spec, BasisSpec, error_string='spec should be a BasisSpec')
    if len(spec.obs_locations) == 0:
        raise ValidationError('obs_locations should hold at least one location')
    theta = spec.theta
    grid = spec.grid
    obs_lats = np.array([p.lat for p in spec.obs_locations])
    obs_lons = np.array([p.lon for p in spec.obs_locations])

    # chord length corresponding to the great-circle support radius
    chord = 2.0 * np.sin(min(theta, np.pi) / 2.0)
    tree = cKDTree(grid.xyz)
    candidates = tree.query_ball_point(to_cartesian(obs_lats, obs_lons), r=chord + 1e-12)

    rows, cols, values = [], [], []
    center_lats, center_lons = grid.lats, grid.lons
    for s, near in enumerate(candidates):
        near = np.array(sorted(near), dtype=int)
        if near.size == 0:
            continue
        distances = great_circle_distances(obs_lats[s], obs_lons[s],
                                           center_lats[near], center_lons[near])
        weights = wendland(distances / theta)
        keep = weights > DROP_TOLERANCE
        rows += [s] * int(np.count_nonzero(keep))
        cols += near[keep].tolist()
        values += weights[keep].tolist()

    phi = sparse.csr_matrix((values, (rows, cols)),
                            shape=(len(spec.obs_locations), grid.size))
    logger.debug('basis matrix %dx%d nnz=%d theta=%.6f', phi.shape[0], phi.shape[1],
                 phi.nnz, theta)
    return check_sparse(phi, 'basis matrix')


def build_sar_matrix(spec):
    """
    The K x K SAR matrix: 1 + kappa**2 on the diagonal and -1/n_i
    for every neighbour j of node i
    """
    check_type(spec, SarSpec, error_string='spec should be a SarSpec')
    grid = spec.grid
    rows, cols, values = [], [], []
    for i, neighbors in enumerate(grid.adjacency):
        rows.append(i)
        cols.append(i)
        values.append(1.0 + float(spec.kappa) ** 2)
        for j in neighbors:
            rows.append(i)
            cols.append(j)
            values.append(-1.0 / len(neighbors))
    return check_sparse(sparse.csr_matrix((values, (rows, cols)),
                                          shape=(grid.size, grid.size)), 'SAR matrix')


def build_innovation_precision(sar, tau2):
    """
    Q^{-1} = blockdiag(B'B / tau2_1, ..., B'B / tau2_M), the precision of
    the innovation vector. Q itself is never formed
    """
    sar = check_sparse(sar, 'SAR matrix')
    tau2 = check_finite_array(tau2, 'tau2').ravel()
    if tau2.size == 0 or np.any(tau2 <= 0):
        raise ValidationError('tau2 should hold M values greater than 0')
    btb = (sar.T @ sar).tocsr()
    return check_sparse(sparse.block_diag([btb / value for value in tau2], format='csr'),
                        'innovation precision')


def expand_basis(phi, M):
    """Phi_M = I_M (x) Phi, block diagonal with M copies of phi"""
    phi = check_sparse(phi, 'basis matrix')
    M = check_positive_int(M, 'M')
    return sparse.kron(sparse.identity(M, format='csr'), phi, format='csr')


def cholesky_factor(precision, name='precision'):
    """
    Lower Cholesky factor L (dense) with L L' = precision.
    Raises NumericalError when the matrix is not positive definite
    """
    dense = precision.toarray() if sparse.issparse(precision) else np.asarray(precision)
    try:
        return linalg.cholesky(dense, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError('%s is not positive definite (condition number %.3e)'
                             % (name, np.linalg.cond(dense))) from exc


def sample_from_precision(factor, rng, size=None):
    """
    Draws from N(0, P^{-1}) given the lower Cholesky factor of P by solving
    L' x = z for standard normal z
    """
    dim = factor.shape[0]
    shape = (dim,) if size is None else (dim, size)
    z = rng.standard_normal(shape)
    x = linalg.solve_triangular(factor, z, lower=True, trans='T')
    return x if size is None else x.T


def covariance_from_precision(factor):
    """The dense covariance P^{-1} from the lower Cholesky factor of P"""
    return linalg.cho_solve((factor, True), np.eye(factor.shape[0]))


def write_triplets(matrix, path):
    """
    Writes the triplet text layout: a `rows cols nnz` header, then one
    `row col value` line per stored entry at 17 significant digits
    """
    matrix = check_sparse(matrix).tocoo()
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write('%d %d %d\n' % (matrix.shape[0], matrix.shape[1], matrix.nnz))
        for row, col, value in zip(matrix.row, matrix.col, matrix.data):
            handle.write('%d %d %.17g\n' % (row, col, value))


def read_triplets(path):
    """Reads a matrix written by write_triplets"""
    with open(path, encoding='utf-8') as handle:
        header = handle.readline().split()
        if len(header) != 3:
            raise ValidationError('%s: expected a `rows cols nnz` header' % path)
        n_rows, n_cols, nnz = (int(value) for value in header)
        data = np.loadtxt(handle, ndmin=2) if nnz else np.zeros((0, 3))
    if data.shape[0] != nnz:
        raise ValidationError('%s: header announces %d entries, found %d'
                              % (path, nnz, data.shape[0]))
    return check_sparse(sparse.csr_matrix(
        (data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))),
        shape=(n_rows, n_cols)))
