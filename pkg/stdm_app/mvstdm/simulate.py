"""
This module generates synthetic multivariate space-time datasets from the
model, including the three-variable transition design of the simulation study
"""

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from mvstdm.basis import BasisSpec, SarSpec, build_basis_matrix, build_innovation_precision, \
    build_sar_matrix, cholesky_factor, expand_basis, sample_from_precision
from mvstdm.grid import GeoPoint, build_icosahedral_grid, regular_latlon_points
from mvstdm.model import ObservationTensor, StateSequence, TransitionBlocks, \
    assemble_transition
from mvstdm.utilities import ValidationError, check_finite_array, check_positive, \
    check_positive_int, check_type

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimSpec:
    """
    Everything a synthetic dataset depends on. sigma2 is a scalar or a
    T x M array; transition None means the simulation-study design (M = 3)
    """
    level: int = 1
    M: int = 3
    T: int = 144
    n_lat: int = 24
    n_lon: int = 48
    tau2: tuple = (5.0, 5.0, 5.0)
    sigma2: object = 2.0
    kappa: float = 2.0
    range_factor: float = 2.5
    transition: TransitionBlocks = None
    burn_in_steps: int = 100
    seed: int = 0
    start: str = '1984-01'

    def __post_init__(self):
        check_positive_int(self.level, 'level', minimum=0)
        check_positive_int(self.M, 'M')
        check_positive_int(self.T, 'T')
        check_positive_int(self.n_lat, 'n_lat')
        check_positive_int(self.n_lon, 'n_lon')
        check_positive_int(self.burn_in_steps, 'burn_in_steps', minimum=0)
        check_positive_int(self.seed, 'seed', minimum=0)
        check_positive(self.kappa, 'kappa')
        check_positive(self.range_factor, 'range_factor')
        tau2 = check_finite_array(self.tau2, 'tau2', positive=True).ravel()
        if tau2.size != self.M:
            raise ValidationError('tau2 should have %d values, got %d' % (self.M, tau2.size))
        object.__setattr__(self, 'tau2', tuple(tau2))
        self.sigma2_matrix()
        if self.transition is not None:
            check_type(self.transition, TransitionBlocks,
                       error_string='transition should be TransitionBlocks')
            if self.transition.M != self.M:
                raise ValidationError('transition has M=%d, spec has M=%d'
                                      % (self.transition.M, self.M))
        elif self.M != 3:
            raise ValidationError('the simulation-study transition needs M=3, '
                                  'pass transition blocks for M=%d' % self.M)

    def sigma2_matrix(self):
        """sigma2 as a T x M array"""
        sigma2 = check_finite_array(self.sigma2, 'sigma2', positive=True)
        if sigma2.ndim == 0:
            return np.full((self.T, self.M), float(sigma2))
        if sigma2.shape != (self.T, self.M):
            raise ValidationError('sigma2 should be a scalar or %dx%d' % (self.T, self.M))
        return sigma2


def latitude_degrees(grid):
    return np.degrees(grid.lats)


def build_latitudinal_transition(grid):
    """
    The three-variable design: own lags 0.8, 0.6, 0.6; A_12 = A_13 = 0;
    A_21 = A_32 = -0.2; A_31 decays from 0.4 at the equator to 0 at the
    poles; A_23 runs linearly from 0.3 at the north pole to -0.3 at the south
    """
    lat = latitude_degrees(grid)
    K = grid.size
    values = np.zeros((3, 3, K))
    values[0, 0] = 0.8
    values[1, 1] = 0.6
    values[2, 2] = 0.6
    values[1, 0] = -0.2
    values[2, 1] = -0.2
    values[2, 0] = 0.4 * (1.0 - np.sqrt(np.abs(lat / 90.0)))
    values[1, 2] = 0.3 * (lat / 90.0)
    return TransitionBlocks(values)


def build_cross_lag_transition(grid, own=0.6, cross=0.5):
    """
    Two variables where variable 1 leans strongly on variable 2's previous
    value (A_12 = cross) and variable 2 evolves on its own
    """
    values = np.zeros((2, 2, grid.size))
    values[0, 0] = own
    values[1, 1] = own
    values[0, 1] = cross
    return TransitionBlocks(values)


def latitudinal_spec(seed=0, level=1, n_lat=24, n_lon=48, T=144):
    """The simulation-study design: K=42, N=1152, T=144, tau2=5, sigma2=2, kappa=2"""
    return SimSpec(level=level, M=3, T=T, n_lat=n_lat, n_lon=n_lon, tau2=(5.0, 5.0, 5.0),
                   sigma2=2.0, kappa=2.0, burn_in_steps=100, seed=seed)


def reduced_spec(seed=0, level=0, n_lat=12, n_lon=24, T=60):
    """The desk-scale version: K=12, N=288, T=60"""
    return latitudinal_spec(seed=seed, level=level, n_lat=n_lat, n_lon=n_lon, T=T)


def cross_lag_spec(seed=0, level=0, n_lat=12, n_lon=24, T=60):
    grid = build_icosahedral_grid(level)
    return SimSpec(level=level, M=2, T=T, n_lat=n_lat, n_lon=n_lon, tau2=(5.0, 5.0),
                   sigma2=1.0, kappa=2.0, transition=build_cross_lag_transition(grid),
                   burn_in_steps=100, seed=seed)


SIMULATION_PRESETS = {
    'latitudinal': latitudinal_spec,
    'reduced': reduced_spec,
    'cross-lag': cross_lag_spec,
}


def _transition_for(spec, grid):
    if spec.transition is not None:
        return spec.transition
    return build_latitudinal_transition(grid)


def monthly_labels(start, periods):
    """YYYY-MM labels of consecutive months"""
    return tuple(pd.period_range(start=start, periods=periods, freq='M').strftime('%Y-%m'))


def simulate_dataset(spec, rng=None):
    """
    Simulates alpha_0 ~ N(0, I), alpha_t = A alpha_{t-1} + eta_t with
    eta_t ~ N(0, Q), drops the first burn_in_steps states and observes
    Y_t = Phi_M alpha_t + eps_t. Returns the observations and the kept states
    """
    check_type(spec, SimSpec, error_string='spec should be a SimSpec')
    if rng is None:
        rng = np.random.Generator(np.random.Philox(spec.seed))
    grid = build_icosahedral_grid(spec.level)
    lat_deg, lon_deg = regular_latlon_points(spec.n_lat, spec.n_lon)
    locations = tuple(GeoPoint.from_degrees(lat, lon) for lat, lon in zip(lat_deg, lon_deg))
    phi = build_basis_matrix(BasisSpec(grid, locations, spec.range_factor))
    phi_m = expand_basis(phi, spec.M)
    sar = build_sar_matrix(SarSpec(grid, spec.kappa))
    factor = cholesky_factor(build_innovation_precision(sar, spec.tau2), 'innovation precision')

    blocks = _transition_for(spec, grid)
    if np.max(np.abs(blocks.values)) >= 1:
        warnings.warn('transition has coefficients with magnitude >= 1, '
                      'the simulated process may not be stationary')
        logger.warning('simulating with a possibly non-stationary transition')
    transition = assemble_transition(blocks)

    size = spec.M * grid.size
    alpha = rng.standard_normal(size)
    states = np.empty((spec.T + 1, size))
    if spec.burn_in_steps == 0:
        states[0] = alpha
    for step in range(1, spec.burn_in_steps + spec.T + 1):
        alpha = transition @ alpha + sample_from_precision(factor, rng)
        if step >= spec.burn_in_steps:
            states[step - spec.burn_in_steps] = alpha

    sigma2 = spec.sigma2_matrix()
    noise_scale = np.sqrt(np.repeat(sigma2[:, :, None], len(locations), axis=2))
    means = (phi_m @ states[1:].T).T.reshape(spec.T, spec.M, len(locations))
    values = means + noise_scale * rng.standard_normal(means.shape)

    obs = ObservationTensor(values, np.ones(values.shape, dtype=bool), lat_deg, lon_deg,
                            monthly_labels(spec.start, spec.T),
                            tuple('var%d' % (i + 1) for i in range(spec.M)))
    logger.info('simulated M=%d K=%d N=%d T=%d', spec.M, grid.size, len(locations), spec.T)
    return obs, StateSequence(states)


def truth_dict(spec):
    """The true parameters of a simulated dataset, for the JSON sidecar"""
    grid = build_icosahedral_grid(spec.level)
    blocks = _transition_for(spec, grid)
    return {
        'level': spec.level,
        'M': spec.M,
        'T': spec.T,
        'n_lat': spec.n_lat,
        'n_lon': spec.n_lon,
        'kappa': spec.kappa,
        'range_factor': spec.range_factor,
        'burn_in_steps': spec.burn_in_steps,
        'seed': spec.seed,
        'tau2': list(spec.tau2),
        'sigma2': spec.sigma2_matrix().tolist(),
        'transition': blocks.to_dict(),
    }
