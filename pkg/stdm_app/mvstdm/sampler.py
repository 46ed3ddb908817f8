"""
This module holds the Gibbs sampler: conjugate Inverse-Gamma updates,
the constrained VAR(1) regression draw for the transition blocks and a
forward-filtering backward-sampling pass for the states
"""

import logging
import multiprocessing
import time
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg, sparse
from scipy.stats import invgamma

from mvstdm.basis import BasisSpec, SarSpec, build_basis_matrix, build_innovation_precision, \
    build_sar_matrix, check_sparse, cholesky_factor, covariance_from_precision, expand_basis
from mvstdm.model import ObservationTensor, Priors, StateSequence, TransitionBlocks, \
    assemble_transition, fitted_values, log_likelihood, measurement_variances, minnesota_mean
from mvstdm.utilities import NumericalError, ValidationError, check_positive_int, \
    check_type

logger = logging.getLogger(__name__)

PROGRESS_EVERY = 10
PSD_TOLERANCE = 1e-8
# filtered covariances are dense, (T + 1) x MK x MK doubles
MAX_FILTER_BYTES = 4 * 2 ** 30


@dataclass(frozen=True)
class SamplerConfig:
    """MCMC run length and bookkeeping; burn_in defaults to n_iter // 3"""
    n_iter: int = 1500
    burn_in: int = None
    thin: int = 1
    seed: int = 0
    n_chains: int = 1
    store_states: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        check_positive_int(self.n_iter, 'n_iter')
        if self.burn_in is None:
            object.__setattr__(self, 'burn_in', self.n_iter // 3)
        check_positive_int(self.burn_in, 'burn_in', minimum=0)
        check_positive_int(self.thin, 'thin')
        check_positive_int(self.n_chains, 'n_chains')
        check_positive_int(self.n_jobs, 'n_jobs')
        check_positive_int(self.seed, 'seed', minimum=0)
        if self.seed >= 2 ** 64:
            raise ValidationError('seed should fit in 64 bits')
        if self.burn_in >= self.n_iter:
            raise ValidationError('burn_in (%d) should be smaller than n_iter (%d)'
                                  % (self.burn_in, self.n_iter))

    @property
    def n_kept(self):
        """Stored draws per chain"""
        return -(-(self.n_iter - self.burn_in) // self.thin)


@dataclass(frozen=True)
class StdmModel:
    """
    The fixed structure of a fit: basis matrix, SAR matrix, the number of
    variables and whether the transition is held at the identity
    """
    phi: sparse.csr_matrix
    sar: sparse.csr_matrix
    M: int
    fixed_transition: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'phi', check_sparse(self.phi, 'basis matrix'))
        object.__setattr__(self, 'sar', check_sparse(self.sar, 'SAR matrix'))
        check_positive_int(self.M, 'M')
        if self.sar.shape != (self.K, self.K):
            raise ValidationError('SAR matrix should be %dx%d' % (self.K, self.K))

    @classmethod
    def build(cls, grid, locations, M, kappa=2.0, range_factor=2.5, fixed_transition=False):
        phi = build_basis_matrix(BasisSpec(grid, tuple(locations), range_factor))
        sar = build_sar_matrix(SarSpec(grid, kappa))
        return cls(phi, sar, M, fixed_transition)

    @property
    def K(self):
        return self.phi.shape[1]

    @property
    def N(self):
        return self.phi.shape[0]

    @cached_property
    def phi_m(self):
        return expand_basis(self.phi, self.M)


@dataclass(frozen=True)
class ChainDraws:
    """Stored draws of one chain; transition is None when A was held fixed"""
    chain: int
    iterations: np.ndarray
    tau2: np.ndarray
    sigma2: np.ndarray
    transition: np.ndarray = None
    states: np.ndarray = None
    log_lik: np.ndarray = None
    elapsed: float = 0.0

    @property
    def n_draws(self):
        return len(self.iterations)


@dataclass(frozen=True)
class PosteriorDraws:
    """Draws of every chain, chain identity preserved"""
    chains: tuple

    def __post_init__(self):
        if not self.chains:
            raise ValidationError('posterior draws need at least one chain')
        object.__setattr__(self, 'chains', tuple(self.chains))

    @property
    def fixed_transition(self):
        return self.chains[0].transition is None

    @property
    def has_states(self):
        return all(chain.states is not None for chain in self.chains)

    @property
    def M(self):
        return self.chains[0].tau2.shape[1]

    @property
    def T(self):
        return self.chains[0].sigma2.shape[1]

    def stacked(self, name):
        """Draws of one parameter family merged over chains, draws first"""
        parts = [getattr(chain, name) for chain in self.chains]
        if any(part is None for part in parts):
            raise ValidationError('%s draws were not stored' % name)
        return np.concatenate(parts, axis=0)

    def by_chain(self, name):
        """Draws of one parameter family as (chain, draw, ...)"""
        parts = [getattr(chain, name) for chain in self.chains]
        if any(part is None for part in parts):
            raise ValidationError('%s draws were not stored' % name)
        n_draws = min(len(part) for part in parts)
        return np.stack([part[:n_draws] for part in parts])


def chain_generator(seed, chain):
    """The counter-based Philox stream of one chain, split off the master seed"""
    sequence = np.random.SeedSequence(seed, spawn_key=(chain,))
    return np.random.Generator(np.random.Philox(sequence))


def tau2_posterior(states, blocks, sar, priors):
    """
    Shape a_tau + KT/2 and rate b_tau + 1/2 sum_t eta_t' B'B eta_t of the
    Inverse-Gamma conditional of each tau2_i, eta_t = alpha_t - A alpha_{t-1}
    """
    M, K, T = blocks.M, blocks.K, states.T
    if T < 1:
        raise ValidationError('tau2 needs at least one transition (T >= 1)')
    transition = assemble_transition(blocks)
    alphas = states.alphas
    eta = alphas[1:] - (transition @ alphas[:-1].T).T
    projected = sar @ eta.reshape(T * M, K).T
    quad = np.sum(projected ** 2, axis=0).reshape(T, M).sum(axis=0)
    shape = np.full(M, priors.a_tau + K * T / 2.0)
    rate = priors.b_tau + quad / 2.0
    return shape, rate


def sample_tau2(states, blocks, sar, priors, rng):
    """One draw of the M innovation scales"""
    shape, rate = tau2_posterior(states, blocks, sar, priors)
    if np.any(rate <= 0):
        raise NumericalError('non-positive Inverse-Gamma rate for tau2')
    return np.atleast_1d(invgamma.rvs(shape, scale=rate, random_state=rng))


def sigma2_posterior(obs, states, phi, priors):
    """
    Shape a_sigma + N_obs(i, t)/2 and rate b_sigma + 1/2 ||residual||^2 per
    (t, i), both over the observed entries only
    """
    fitted = fitted_values(states, phi, obs.M)
    residual = np.where(obs.mask, obs.values - fitted, 0.0)
    shape = priors.a_sigma + obs.mask.sum(axis=2) / 2.0
    rate = priors.b_sigma + np.sum(residual ** 2, axis=2) / 2.0
    return shape, rate


def sample_sigma2(obs, states, phi, priors, rng):
    """One draw of the T x M measurement variances"""
    shape, rate = sigma2_posterior(obs, states, phi, priors)
    return np.reshape(invgamma.rvs(shape, scale=rate, random_state=rng), shape.shape)


def _regression_design(alpha, M, K):
    """X_t = I_M (x) [diag(alpha^(1)) ... diag(alpha^(M))]"""
    row = sparse.hstack([sparse.diags(alpha[j * K:(j + 1) * K]) for j in range(M)])
    return sparse.kron(sparse.identity(M), row, format='csr')


def transition_posterior(states, q_precision, priors, M):
    """
    Precision and right-hand side of the Gaussian conditional of the stacked
    coefficients: sum_t X_t' Q^{-1} X_t + I/lam and
    sum_t X_t' Q^{-1} alpha_{t+1} + mu_0/lam
    """
    alphas = states.alphas
    if states.T < 2:
        raise ValidationError('the transition draw needs T >= 2, got T=%d' % states.T)
    q_precision = check_sparse(q_precision, 'innovation precision')
    K = alphas.shape[1] // M
    size = M * M * K
    precision = sparse.identity(size, format='csr') / priors.lam
    rhs = minnesota_mean(M, K).ravel() / priors.lam
    for t in range(states.T):
        design = _regression_design(alphas[t], M, K)
        weighted = (design.T @ q_precision).tocsr()
        precision = precision + weighted @ design
        rhs = rhs + weighted @ alphas[t + 1]
    return precision, rhs


def sample_transition(states, q_precision, priors, rng, M):
    """One draw of the transition blocks from their Gaussian conditional"""
    check_type(states, StateSequence, error_string='states should be a StateSequence')
    check_type(priors, Priors, error_string='priors should be Priors')
    precision, rhs = transition_posterior(states, q_precision, priors, M)
    factor = cholesky_factor(precision, 'transition posterior precision')
    mean = linalg.cho_solve((factor, True), rhs)
    z = rng.standard_normal(len(mean))
    draw = mean + linalg.solve_triangular(factor, z, lower=True, trans='T')
    return TransitionBlocks.from_vector(draw, M, states.alphas.shape[1] // M)


def _symmetric(matrix):
    return (matrix + matrix.T) / 2.0


def _factor(matrix, what, t):
    try:
        return linalg.cho_factor(_symmetric(matrix), lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError('%s lost positive definiteness at t=%d' % (what, t)) from exc


def _gaussian_draw(mean, cov, rng, t):
    """mean + L z with L L' = cov; tolerates round-off negative eigenvalues"""
    z = rng.standard_normal(len(mean))
    cov = _symmetric(cov)
    try:
        root = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        values, vectors = linalg.eigh(cov)
        if values.min() < -PSD_TOLERANCE * max(1.0, np.abs(values).max()):
            raise NumericalError('smoothing covariance lost positive definiteness at t=%d' % t)
        root = vectors * np.sqrt(np.clip(values, 0.0, None))
    return mean + root @ z


def forward_filter(obs, phi_m, sigma2, transition, q_cov, m0, c0):
    """
    Kalman filter in information form. V_t is diagonal so Phi' V^{-1} Phi is
    formed from the observed rows only; missing entries are skipped.
    Returns the filtered means (T+1, MK) and covariances (T+1, MK, MK)
    """
    T = obs.T
    size = transition.shape[0]
    values = obs.values.reshape(T, -1)
    mask = obs.mask.reshape(T, -1)
    variances = measurement_variances(sigma2, obs.N).reshape(T, -1)
    identity = np.eye(size)

    means = np.empty((T + 1, size))
    covs = np.empty((T + 1, size, size))
    means[0] = m0
    covs[0] = np.diag(c0)
    for t in range(1, T + 1):
        prior_mean = transition @ means[t - 1]
        prior_cov = _symmetric(transition @ (transition @ covs[t - 1]).T + q_cov)
        observed = np.flatnonzero(mask[t - 1])
        if observed.size == 0:
            means[t], covs[t] = prior_mean, prior_cov
            continue
        prior_factor = _factor(prior_cov, 'prior covariance', t)
        weights = 1.0 / variances[t - 1, observed]
        rows = phi_m[observed]
        information = (linalg.cho_solve(prior_factor, identity)
                       + (rows.T @ (sparse.diags(weights) @ rows)).toarray())
        info_factor = _factor(information, 'filter covariance', t)
        shift = linalg.cho_solve(prior_factor, prior_mean) \
            + rows.T @ (weights * values[t - 1, observed])
        means[t] = linalg.cho_solve(info_factor, shift)
        covs[t] = _symmetric(linalg.cho_solve(info_factor, identity))
    return means, covs


def backward_sample(means, covs, transition, q_cov, rng):
    """Draws alpha_T, then alpha_t | alpha_{t+1} for t = T-1 .. 0"""
    T = means.shape[0] - 1
    alphas = np.empty_like(means)
    alphas[T] = _gaussian_draw(means[T], covs[T], rng, T)
    for t in range(T - 1, -1, -1):
        propagated = transition @ covs[t]
        prior_cov = transition @ propagated.T + q_cov
        prior_factor = _factor(prior_cov, 'prior covariance', t + 1)
        gain = linalg.cho_solve(prior_factor, propagated)
        mean = means[t] + gain.T @ (alphas[t + 1] - transition @ means[t])
        cov = covs[t] - propagated.T @ gain
        alphas[t] = _gaussian_draw(mean, cov, rng, t)
    return alphas


def ffbs(obs, phi_m, sigma2, transition, q_precision, m0, c0, rng):
    """One joint draw of alpha_0..alpha_T from their full conditional"""
    check_type(obs, ObservationTensor, error_string='obs should be an ObservationTensor')
    transition = check_sparse(transition, 'transition matrix')
    phi_m = check_sparse(phi_m, 'expanded basis')
    if phi_m.shape != (obs.M * obs.N, transition.shape[0]):
        raise ValidationError('expanded basis is %s, expected %s'
                              % (phi_m.shape, (obs.M * obs.N, transition.shape[0])))
    q_cov = covariance_from_precision(cholesky_factor(q_precision, 'innovation precision'))
    means, covs = forward_filter(obs, phi_m, sigma2, transition, q_cov, m0, c0)
    return StateSequence(backward_sample(means, covs, transition, q_cov, rng))


def run_chain(obs, model, priors, config, chain=0):
    """
    Cycles tau2, sigma2, transition and states for config.n_iter iterations
    from sigma2 = 1, tau2 = 1, A = I and standard normal states
    """
    check_type(obs, ObservationTensor, error_string='obs should be an ObservationTensor')
    check_type(model, StdmModel, error_string='model should be a StdmModel')
    check_type(config, SamplerConfig, error_string='config should be a SamplerConfig')
    M, K, T = model.M, model.K, obs.T
    if obs.M != M or obs.N != model.N:
        raise ValidationError('observations are %dx%d (M x N), the model expects %dx%d'
                              % (obs.M, obs.N, M, model.N))
    if len(priors.m0) != M * K:
        raise ValidationError('priors have length %d, expected MK=%d' % (len(priors.m0), M * K))
    if not obs.mask.any():
        raise ValidationError('observations have no observed entry')
    filter_bytes = 8 * (T + 1) * (M * K) ** 2
    if filter_bytes > MAX_FILTER_BYTES:
        raise ValidationError('the state filter would hold %.1f GiB for MK=%d and T=%d, above '
                              'the %.1f GiB limit; use a lower grid level or a shorter period'
                              % (filter_bytes / 2 ** 30, M * K, T, MAX_FILTER_BYTES / 2 ** 30))

    fixed = model.fixed_transition
    if T < 2 and not fixed:
        warnings.warn('T=%d is too short to sample the transition, holding A at I' % T)
        logger.warning('chain %d: T=%d, transition held at its initial value', chain, T)
        fixed = True

    rng = chain_generator(config.seed, chain)
    sigma2 = np.ones((T, M))
    tau2 = np.ones(M)
    blocks = TransitionBlocks.identity(M, K)
    states = StateSequence(rng.standard_normal((T + 1, M * K)))

    kept = {'iterations': [], 'tau2': [], 'sigma2': [], 'transition': [], 'states': [],
            'log_lik': []}
    started = time.perf_counter()
    for iteration in range(1, config.n_iter + 1):
        try:
            tau2 = sample_tau2(states, blocks, model.sar, priors, rng)
            sigma2 = sample_sigma2(obs, states, model.phi, priors, rng)
            q_precision = build_innovation_precision(model.sar, tau2)
            if not fixed:
                blocks = sample_transition(states, q_precision, priors, rng, M)
            states = ffbs(obs, model.phi_m, sigma2, assemble_transition(blocks), q_precision,
                          priors.m0, priors.c0, rng)
        except NumericalError as exc:
            raise NumericalError('chain %d iteration %d: %s' % (chain, iteration, exc)) from exc

        if iteration > config.burn_in and (iteration - config.burn_in - 1) % config.thin == 0:
            kept['iterations'].append(iteration)
            kept['tau2'].append(tau2)
            kept['sigma2'].append(sigma2)
            kept['transition'].append(blocks.values)
            kept['log_lik'].append(log_likelihood(obs, states, model.phi_m, sigma2))
            if config.store_states:
                kept['states'].append(states.alphas)
        if iteration % PROGRESS_EVERY == 0:
            logger.info('chain %d: iteration %d/%d', chain, iteration, config.n_iter)

    return ChainDraws(
        chain=chain,
        iterations=np.array(kept['iterations'], dtype=int),
        tau2=np.array(kept['tau2']),
        sigma2=np.array(kept['sigma2']),
        transition=None if fixed else np.array(kept['transition']),
        states=np.array(kept['states']) if config.store_states else None,
        log_lik=np.array(kept['log_lik']),
        elapsed=time.perf_counter() - started,
    )


def _run_chain_safely(obs, model, priors, config, chain):
    try:
        return run_chain(obs, model, priors, config, chain)
    except (NumericalError, ValidationError) as exc:
        return exc


def run_chains(obs, model, priors, config):
    """
    Runs config.n_chains chains with substreams of the master seed, in
    parallel when config.n_jobs > 1. Failures are reported per chain
    """
    arguments = [(obs, model, priors, config, chain) for chain in range(config.n_chains)]
    if config.n_jobs > 1 and config.n_chains > 1:
        with multiprocessing.Pool(min(config.n_jobs, config.n_chains)) as pool:
            results = pool.starmap(_run_chain_safely, arguments)
    else:
        results = [_run_chain_safely(*args) for args in arguments]

    failures = [(chain, result) for chain, result in enumerate(results)
                if isinstance(result, Exception)]
    if failures:
        report = '; '.join('chain %d: %s' % (chain, exc) for chain, exc in failures)
        if all(isinstance(exc, ValidationError) for _, exc in failures):
            raise ValidationError(report)
        raise NumericalError(report)
    for result in results:
        logger.info('chain %d finished in %.1fs', result.chain, result.elapsed)
    return PosteriorDraws(tuple(results))
