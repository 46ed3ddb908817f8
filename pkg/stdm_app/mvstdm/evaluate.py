"""
This module summarizes posterior draws, builds hold-out masks and scores
held-out predictions with RMSPE, CRPS and interval coverage
"""

import logging
from dataclasses import dataclass

import arviz as az
import numpy as np
import pandas as pd

from mvstdm.model import ObservationTensor, project_transition_block
from mvstdm.sampler import PosteriorDraws
from mvstdm.utilities import ConfigurationError, ValidationError, check_positive_int, \
    check_shape, check_type, freeze

logger = logging.getLogger(__name__)

HOLDOUT_KINDS = ('spatial_block', 'random_fraction')
QUANTILES = (0.025, 0.975)


@dataclass(frozen=True)
class HoldoutSpec:
    """
    spatial_block masks one variable over a lon/lat box (degrees, inclusive)
    and a time window of YYYY-MM labels; random_fraction masks the whole
    time series of round(fraction * N) locations drawn with seed, for one
    variable or for all of them
    """
    kind: str = 'spatial_block'
    variable: str = None
    lon_bounds: tuple = (-155.0, -35.0)
    lat_bounds: tuple = (-5.0, 80.0)
    time_window: tuple = None
    fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in HOLDOUT_KINDS:
            raise ValidationError('holdout kind should be one of %s, got %r'
                                  % (', '.join(HOLDOUT_KINDS), self.kind))
        if self.kind == 'spatial_block':
            if self.variable is None:
                raise ValidationError('a spatial_block holdout needs a variable')
            for name, (low, high), limit in (('lon_bounds', self.lon_bounds, 180.0),
                                             ('lat_bounds', self.lat_bounds, 90.0)):
                if not -limit <= low < high <= limit:
                    raise ValidationError('%s should satisfy -%g <= low < high <= %g'
                                          % (name, limit, limit))
        else:
            if not 0.0 < float(self.fraction) < 1.0:
                raise ValidationError('holdout fraction should be in (0, 1), got %r'
                                      % self.fraction)
            check_positive_int(self.seed, 'seed', minimum=0)
        if self.time_window is not None and len(self.time_window) != 2:
            raise ValidationError('time_window should be a (start, end) pair')

    def to_dict(self):
        return {'kind': self.kind, 'variable': self.variable,
                'lon_bounds': list(self.lon_bounds), 'lat_bounds': list(self.lat_bounds),
                'time_window': None if self.time_window is None else list(self.time_window),
                'fraction': self.fraction, 'seed': self.seed}

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        for key in ('lon_bounds', 'lat_bounds', 'time_window'):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ValidationError('invalid holdout block: %s' % exc)


@dataclass(frozen=True)
class HoldoutMask:
    """The spec and its T x M x N mask, True where held out"""
    spec: HoldoutSpec
    mask: np.ndarray

    @property
    def n_held(self):
        return int(self.mask.sum())


def north_america_holdout(variable='T50'):
    """The block over North America for the three years after August 1991"""
    return HoldoutSpec(kind='spatial_block', variable=variable, lon_bounds=(-155.0, -35.0),
                       lat_bounds=(-5.0, 80.0), time_window=('1991-08', '1994-07'))


def _time_selection(obs, window):
    if window is None:
        return np.ones(obs.T, dtype=bool)
    periods = pd.PeriodIndex(list(obs.time_labels), freq='M')
    start, end = (pd.Period(label, freq='M') for label in window)
    return np.asarray((periods >= start) & (periods <= end))


def build_holdout_mask(spec, obs):
    """The deterministic mask induced by spec on obs"""
    check_type(spec, HoldoutSpec, error_string='spec should be a HoldoutSpec')
    check_type(obs, ObservationTensor, error_string='obs should be an ObservationTensor')
    times = _time_selection(obs, spec.time_window)
    if spec.variable is None:
        variables = np.ones(obs.M, dtype=bool)
    else:
        variables = np.zeros(obs.M, dtype=bool)
        variables[obs.variable_index(spec.variable)] = True

    if spec.kind == 'spatial_block':
        (lon_low, lon_high), (lat_low, lat_high) = spec.lon_bounds, spec.lat_bounds
        locations = ((obs.lons >= lon_low) & (obs.lons <= lon_high)
                     & (obs.lats >= lat_low) & (obs.lats <= lat_high))
    else:
        count = int(round(spec.fraction * obs.N))
        rng = np.random.Generator(np.random.Philox(spec.seed))
        locations = np.zeros(obs.N, dtype=bool)
        locations[rng.choice(obs.N, size=count, replace=False)] = True

    mask = times[:, None, None] & variables[None, :, None] & locations[None, None, :]
    if not mask.any():
        raise ValidationError('the %s holdout masks no entry' % spec.kind)
    if mask.all() or not (obs.mask & ~mask).any():
        raise ValidationError('the %s holdout leaves no observation to fit' % spec.kind)
    logger.info('%s holdout: %d entries over %d locations and %d months', spec.kind,
                int(mask.sum()), int(locations.sum()), int(times.sum()))
    return HoldoutMask(spec, freeze(mask))


def summarize(draws):
    """Mean and linear-interpolation 2.5% / 97.5% quantiles along the draw axis"""
    draws = np.asarray(draws, dtype=float)
    if draws.shape[0] < 2:
        raise ValidationError('a posterior summary needs at least 2 draws, got %d'
                              % draws.shape[0])
    low, high = np.quantile(draws, QUANTILES, axis=0, method='linear')
    return draws.mean(axis=0), low, high


def split_rhat(by_chain):
    """Split R-hat of (chain, draw, ...) draws; NaN with fewer than 2 chains"""
    if by_chain.shape[0] < 2 or by_chain.shape[1] < 4:
        return np.full(by_chain.shape[2:], np.nan)
    dataset = az.convert_to_dataset({'x': by_chain})
    return np.asarray(az.rhat(dataset, method='split')['x'].values)


def _parameter_frame(name, draws, rhat, labels):
    mean, low, high = summarize(draws)
    index = np.indices(mean.shape).reshape(mean.ndim, -1).T
    frame = pd.DataFrame(index + 1, columns=labels)
    frame.insert(0, 'parameter', name)
    frame['mean'] = mean.ravel()
    frame['q025'] = low.ravel()
    frame['q975'] = high.ravel()
    frame['rhat'] = np.broadcast_to(rhat, mean.shape).ravel()
    return frame


def posterior_summary(draws):
    """
    One row per scalar parameter with mean, q025, q975 over the merged chains
    and split R-hat across chains. Indices are 1-based
    """
    check_type(draws, PosteriorDraws, error_string='draws should be PosteriorDraws')
    families = [('tau2', ['i']), ('sigma2', ['t', 'i'])]
    if not draws.fixed_transition:
        families.append(('transition', ['i', 'j', 'k']))
    frames = [_parameter_frame(name, draws.stacked(name), split_rhat(draws.by_chain(name)),
                               labels)
              for name, labels in families]
    columns = ['parameter', 'i', 'j', 'k', 't', 'mean', 'q025', 'q975', 'rhat']
    summary = pd.concat(frames, ignore_index=True).reindex(columns=columns)
    return summary.astype({name: 'Int64' for name in ('i', 'j', 'k', 't')})


def predictive_draws(draws, phi_m, mask, rng):
    """
    Posterior predictive samples of the held-out entries: per retained
    iteration, Phi_M alpha_t plus noise with that iteration's sigma2.
    Returns (n_draws, n_held) in np.argwhere(mask) order
    """
    check_type(draws, PosteriorDraws, error_string='draws should be PosteriorDraws')
    if not draws.has_states:
        raise ConfigurationError('the fit did not store states; refit with store_states '
                                 'enabled to compute predictions')
    states = draws.stacked('states')
    sigma2 = draws.stacked('sigma2')
    M, T = draws.M, draws.T
    N = phi_m.shape[0] // M
    mask = check_shape(np.asarray(mask, dtype=bool), (T, M, N), 'holdout mask')
    held = np.argwhere(mask)
    if held.size == 0:
        raise ValidationError('no held-out entry to predict')
    t, i, s = held.T
    rows = phi_m[i * N + s]
    samples = np.empty((states.shape[0], len(held)))
    for d in range(states.shape[0]):
        means = np.asarray(rows.multiply(states[d, t + 1]).sum(axis=1)).ravel()
        samples[d] = means + np.sqrt(sigma2[d, t, i]) * rng.standard_normal(len(held))
    return samples


def rmspe(predicted, truth, groups=None):
    """
    Root mean squared prediction error, overall or as a Series per group
    label. An empty input or group raises ValidationError
    """
    errors = np.asarray(predicted, dtype=float) - np.asarray(truth, dtype=float)
    if errors.size == 0:
        raise ValidationError('rmspe needs at least one prediction')
    if groups is None:
        return float(np.sqrt(np.mean(errors ** 2)))
    squared = pd.Series(errors.ravel() ** 2)
    return np.sqrt(squared.groupby(np.asarray(groups).ravel(), sort=True).mean())


def crps_empirical(samples, y):
    """
    (1/m) sum |x_i - y| - 1/(2 m^2) sum_i sum_j |x_i - x_j|, the double sum
    evaluated from the sorted samples
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    m = x.size
    if m == 0:
        raise ValidationError('crps needs at least one sample')
    weights = 2.0 * np.arange(1, m + 1) - m - 1
    return float(np.mean(np.abs(x - y)) - np.dot(weights, x) / m ** 2)


def crps_ensemble(samples, truth):
    """crps_empirical per column of an (m, E) sample array against E truths"""
    x = np.sort(np.asarray(samples, dtype=float), axis=0)
    truth = np.asarray(truth, dtype=float)
    m = x.shape[0]
    if m == 0:
        raise ValidationError('crps needs at least one sample')
    weights = (2.0 * np.arange(1, m + 1) - m - 1)[:, None]
    spread = np.sum(weights * x, axis=0) / m ** 2
    return np.clip(np.mean(np.abs(x - truth[None, :]), axis=0) - spread, 0.0, None)


def coverage(lower, upper, truth):
    """Fraction of truths inside [lower, upper]"""
    lower, upper, truth = (np.asarray(a, dtype=float).ravel() for a in (lower, upper, truth))
    if truth.size == 0:
        raise ValidationError('coverage needs at least one interval')
    return float(np.mean((truth >= lower) & (truth <= upper)))


@dataclass(frozen=True)
class ScoreTable:
    """
    monthly holds `model, variable, month, crps, rmspe` and averaged the
    time-averaged `model, variable, crps, rmspe`
    """
    monthly: pd.DataFrame
    averaged: pd.DataFrame

    def __post_init__(self):
        for frame in (self.monthly, self.averaged):
            if (frame[['crps', 'rmspe']] < 0).any().any():
                raise ValidationError('scores should be non-negative')

    @classmethod
    def concat(cls, tables):
        tables = list(tables)
        return cls(pd.concat([t.monthly for t in tables], ignore_index=True),
                   pd.concat([t.averaged for t in tables], ignore_index=True))


def prediction_frame(obs, holdout, samples):
    """
    One row per held-out entry: variable, time, lat, lon, truth, predictive
    mean and 95% interval. obs carries the truth at the held-out entries
    """
    held = np.argwhere(holdout.mask)
    t, i, s = held.T
    mean, low, high = summarize(samples)
    return pd.DataFrame({
        'variable': np.asarray(obs.variable_names)[i],
        'time': np.asarray(obs.time_labels)[t],
        'lat': obs.lats[s],
        'lon': obs.lons[s],
        'truth': obs.values[t, i, s],
        'mean': mean,
        'q025': low,
        'q975': high,
    })


def score_predictions(model, obs, holdout, samples):
    """
    CRPS per held-out entry, averaged over locations per month and then over
    months; RMSPE of the predictive means per month and over the whole
    holdout. Entries missing from obs are not scored
    """
    check_type(holdout, HoldoutMask, error_string='holdout should be a HoldoutMask')
    held = np.argwhere(holdout.mask)
    t, i, s = held.T
    truth = obs.values[t, i, s]
    scored = obs.mask[t, i, s]
    if not scored.any():
        raise ValidationError('no held-out entry has a truth value to score against')
    frame = pd.DataFrame({
        'model': model,
        'variable': np.asarray(obs.variable_names)[i],
        'month': np.asarray(obs.time_labels)[t],
        'crps': crps_ensemble(samples, truth),
        'squared': (samples.mean(axis=0) - truth) ** 2,
    })[scored]
    monthly = frame.groupby(['model', 'variable', 'month'], sort=True).agg(
        crps=('crps', 'mean'), squared=('squared', 'mean')).reset_index()
    monthly['rmspe'] = np.sqrt(monthly.pop('squared'))
    averaged = monthly.groupby(['model', 'variable'], sort=True).agg(
        crps=('crps', 'mean')).reset_index()
    overall = frame.groupby(['model', 'variable'], sort=True)['squared'].mean()
    averaged['rmspe'] = np.sqrt(overall.to_numpy())
    return ScoreTable(monthly, averaged)


def projected_transition_summary(transition_draws, phi, lats, lons):
    """
    Posterior mean and 95% interval of every projected block per location:
    `lat_deg, lon_deg, i, j, post_mean, q025, q975` with 1-based i and j
    """
    transition_draws = np.asarray(transition_draws, dtype=float)
    n_draws, M = transition_draws.shape[:2]
    frames = []
    for i in range(M):
        for j in range(M):
            projected = np.array([project_transition_block(phi, transition_draws[d, i, j],
                                                           lats, lons)
                                  for d in range(n_draws)])
            mean, low, high = summarize(projected)
            frames.append(pd.DataFrame({'lat_deg': lats, 'lon_deg': lons, 'i': i + 1,
                                        'j': j + 1, 'post_mean': mean, 'q025': low,
                                        'q975': high}))
    return pd.concat(frames, ignore_index=True)


def recovery_report(draws, truth):
    """
    Interval coverage of the true parameters of a simulated dataset. With
    sampled transition draws the report adds, per (i, j) block, the mean
    over nodes of the posterior means and the share of nodes whose 95%
    interval covers the true coefficient
    """
    tau2_mean, tau2_low, tau2_high = summarize(draws.stacked('tau2'))
    sigma2_mean, sigma2_low, sigma2_high = summarize(draws.stacked('sigma2'))
    true_tau2 = np.asarray(truth['tau2'], dtype=float)
    true_sigma2 = np.broadcast_to(np.asarray(truth['sigma2'], dtype=float), sigma2_mean.shape)
    report = {
        'tau2_mean': tau2_mean.tolist(),
        'tau2_interval': np.stack([tau2_low, tau2_high], axis=1).tolist(),
        'tau2_covered': ((true_tau2 >= tau2_low) & (true_tau2 <= tau2_high)).tolist(),
        'sigma2_coverage': coverage(sigma2_low, sigma2_high, true_sigma2),
    }
    if draws.fixed_transition or truth.get('transition') is None:
        return report
    mean, low, high = summarize(draws.stacked('transition'))
    true_blocks = np.asarray(truth['transition']['blocks'], dtype=float)
    if true_blocks.shape != mean.shape:
        logger.info('true transition is %s, the draws are %s; block recovery skipped',
                    true_blocks.shape, mean.shape)
        return report
    covered = (true_blocks >= low) & (true_blocks <= high)
    report.update({
        'transition_mean': mean.tolist(),
        'block_means': mean.mean(axis=2).tolist(),
        'block_coverage': covered.mean(axis=2).tolist(),
        'transition_coverage': float(covered.mean()),
    })
    return report
