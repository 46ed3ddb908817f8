"""
This module holds functionality that connects the run configuration
to the models: config validation and the bodies of the commands
"""

import logging
import os
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from mvstdm import evaluate, ingest, storage
from mvstdm.grid import GeoPoint, build_icosahedral_grid, write_grid
from mvstdm.model import Priors
from mvstdm.sampler import SamplerConfig, StdmModel, chain_generator, run_chains
from mvstdm.simulate import SIMULATION_PRESETS, simulate_dataset, truth_dict
from mvstdm.utilities import ConfigurationError, ValidationError, check_positive, \
    check_positive_int

logger = logging.getLogger(__name__)

MODES = ('multivariate', 'univariate', 'univariate-rw')
BLOCKS = ('model', 'prior', 'sampler')
ALIASES = {'level': 'grid_level', 'lam': 'lambda', 'n_time': 't'}
SETTINGS = (
    'data_dir', 'output_dir', 'mode', 'variable', 'log_level',
    'grid_level', 'kappa', 'range_factor',
    'a_sigma', 'b_sigma', 'a_tau', 'b_tau', 'lambda', 'm0', 'c0',
    'n_iter', 'burn_in', 'thin', 'n_chains', 'n_jobs', 'seed', 'store_states',
    'holdout', 'simulation', 'n_lat', 'n_lon', 't',
)


@dataclass(frozen=True)
class ModelSettings:
    level: int
    kappa: float
    range_factor: float


@dataclass(frozen=True)
class PriorSettings:
    a_sigma: float
    b_sigma: float
    a_tau: float
    b_tau: float
    lam: float
    m0: float
    c0: float

    def priors(self, M, K):
        return Priors.default(M, K, m0=self.m0, c0=self.c0, a_sigma=self.a_sigma,
                              b_sigma=self.b_sigma, a_tau=self.a_tau, b_tau=self.b_tau,
                              lam=self.lam)


@dataclass(frozen=True)
class RunConfig:
    """A validated run: paths, mode and the model, prior, sampler and holdout blocks"""
    data_dir: str
    output_dir: str
    mode: str
    variable: str
    model: ModelSettings
    prior: PriorSettings
    sampler: SamplerConfig
    holdout: evaluate.HoldoutSpec
    simulation: str
    n_lat: int
    n_lon: int
    T: int
    log_level: str = 'INFO'

    @property
    def fixed_transition(self):
        return self.mode == 'univariate-rw'

    def to_dict(self):
        return {
            'data_dir': self.data_dir, 'output_dir': self.output_dir, 'mode': self.mode,
            'variable': self.variable, 'model': asdict(self.model),
            'prior': asdict(self.prior), 'sampler': asdict(self.sampler),
            'holdout': None if self.holdout is None else self.holdout.to_dict(),
        }


def preset_settings(preset):
    """The UPPER_CASE attributes of a preset class as lower-case settings"""
    return {name.lower(): getattr(preset, name) for name in dir(preset)
            if name.isupper() and name.lower() in SETTINGS}


def flatten_settings(data, source='config'):
    """
    Flattens the optional model/prior/sampler blocks of a JSON config and
    resolves key aliases. Unknown keys raise ValidationError
    """
    if not isinstance(data, dict):
        raise ValidationError('%s should be a JSON object' % source)
    flat = {}
    unknown = []
    for key, value in data.items():
        if key in BLOCKS:
            if not isinstance(value, dict):
                raise ValidationError('%s: the %s block should be an object' % (source, key))
            nested = flatten_settings(value, source)
            flat.update(nested)
            continue
        name = ALIASES.get(key.lower(), key.lower())
        if name not in SETTINGS:
            unknown.append(key)
            continue
        flat[name] = value
    if unknown:
        raise ValidationError('%s has unknown keys: %s' % (source, ', '.join(sorted(unknown))))
    return flat


def _collect(errors, check, *args, **kwargs):
    try:
        return check(*args, **kwargs)
    except (TypeError, ValueError) as exc:
        errors.append(str(exc))
        return None


def build_run_config(settings):
    """
    Validates flat settings and builds the RunConfig. Every violation is
    reported at once in a single ValidationError
    """
    errors = []
    get = settings.get
    mode = get('mode', 'multivariate')
    if mode not in MODES:
        errors.append('mode should be one of %s, got %r' % (', '.join(MODES), mode))
    variable = get('variable')
    if mode in ('univariate', 'univariate-rw') and not variable:
        errors.append('mode %s needs a variable name' % mode)

    level = _collect(errors, check_positive_int, get('grid_level'), 'grid_level', minimum=0)
    kappa = _collect(errors, check_positive, get('kappa'), 'kappa')
    range_factor = _collect(errors, check_positive, get('range_factor'), 'range_factor')
    prior = {name: _collect(errors, check_positive, get(name), name)
             for name in ('a_sigma', 'b_sigma', 'a_tau', 'b_tau', 'lambda', 'c0')}
    m0 = get('m0', 0.0)
    if isinstance(m0, bool) or not isinstance(m0, (int, float)) or not np.isfinite(m0):
        errors.append('m0 should be a finite number, got %r' % (m0,))
    for name in ('n_lat', 'n_lon', 't'):
        _collect(errors, check_positive_int, get(name), name)
    if get('simulation') not in SIMULATION_PRESETS:
        errors.append('simulation should be one of %s, got %r'
                      % (', '.join(SIMULATION_PRESETS), get('simulation')))
    if not isinstance(get('store_states'), bool):
        errors.append('store_states should be true or false')
    sampler = _collect(errors, SamplerConfig, n_iter=get('n_iter'), burn_in=get('burn_in'),
                       thin=get('thin'), seed=get('seed'), n_chains=get('n_chains'),
                       store_states=get('store_states'), n_jobs=get('n_jobs', 1))
    holdout = None
    if get('holdout') is not None:
        holdout = _collect(errors, evaluate.HoldoutSpec.from_dict, get('holdout'))
    if errors:
        raise ValidationError('invalid configuration:\n  ' + '\n  '.join(errors))

    return RunConfig(
        data_dir=str(get('data_dir')), output_dir=str(get('output_dir')), mode=mode,
        variable=variable,
        model=ModelSettings(level, kappa, range_factor),
        prior=PriorSettings(prior['a_sigma'], prior['b_sigma'], prior['a_tau'],
                            prior['b_tau'], prior['lambda'], float(m0), prior['c0']),
        sampler=sampler, holdout=holdout, simulation=get('simulation'),
        n_lat=int(get('n_lat')), n_lon=int(get('n_lon')), T=int(get('t')),
        log_level=str(get('log_level', 'INFO')),
    )


def cmd_grid(level, path):
    """Writes the grid export for `level` and returns the grid"""
    grid = build_icosahedral_grid(level)
    write_grid(grid, path)
    logger.info('wrote grid level=%d K=%d to %s', grid.level, grid.size, path)
    return grid


def cmd_simulate(config, output_dir=None):
    """Simulates the configured preset and writes dataset, states and truth"""
    output_dir = output_dir or config.data_dir
    build = SIMULATION_PRESETS[config.simulation]
    spec = build(seed=config.sampler.seed, level=config.model.level, n_lat=config.n_lat,
                 n_lon=config.n_lon, T=config.T)
    obs, states = simulate_dataset(spec)
    storage.write_dataset(obs, output_dir, states=states, truth=truth_dict(spec),
                          extra={'n_lat': spec.n_lat, 'n_lon': spec.n_lon,
                                 'simulation': config.simulation})
    return obs


def cmd_ingest(inputs, output_dir, n_lat, n_lon, reference_years=None, period=None,
               weighted=True):
    """
    Regrids each (csv, manifest) input, standardizes it by its monthly
    climatology and writes the stacked anomalies as a dataset plus one
    climatology export per variable
    """
    if not inputs:
        raise ValidationError('ingest needs at least one input')
    anomalies = []
    os.makedirs(output_dir, exist_ok=True)
    for csv_path, manifest_path in inputs:
        series = ingest.read_gridded_csv(csv_path, manifest_path)
        if period is not None:
            series = ingest.select_period(series, *period)
        series = ingest.regrid_average(series, n_lat, n_lon, weighted=weighted)
        clim = ingest.compute_climatology(series, reference_years)
        ingest.write_climatology(series, clim, os.path.join(
            output_dir, '%s_climatology.csv' % series.name))
        anomalies.append(ingest.standardize_anomalies(series, clim))
        logger.info('ingested %s onto %dx%d', series.name, n_lat, n_lon)
    obs = ingest.to_observation_tensor(anomalies)
    storage.write_dataset(obs, output_dir, extra={
        'n_lat': n_lat, 'n_lon': n_lon, 'weighted': bool(weighted),
        'reference_years': None if reference_years is None else list(reference_years)})
    return obs


def fit_variables(config, obs):
    """The variables a mode fits"""
    if config.mode == 'multivariate':
        return list(obs.variable_names)
    return [obs.variable_names[obs.variable_index(config.variable)]]


def _build_model(obs, level, kappa, range_factor, fixed_transition):
    grid = build_icosahedral_grid(level)
    return StdmModel.build(grid, obs.locations(), obs.M, kappa=kappa,
                           range_factor=range_factor, fixed_transition=fixed_transition)


def _holdout_for(obs, spec, variables):
    """The holdout mask of the full dataset restricted to the fitted variables"""
    full = evaluate.build_holdout_mask(spec, obs)
    index = [obs.variable_index(name) for name in variables]
    mask = full.mask[:, index, :]
    if not mask.any():
        raise ValidationError('the holdout masks none of the fitted variables (%s)'
                              % ', '.join(variables))
    return evaluate.HoldoutMask(spec, mask)


def cmd_fit(config):
    """
    Runs the chains of the configured mode on the dataset in data_dir and
    writes draws, posterior summary and manifest to output_dir
    """
    full, _ = storage.read_dataset(config.data_dir)
    variables = fit_variables(config, full)
    obs = full.select(variables)
    holdout = None
    if config.holdout is not None:
        holdout = _holdout_for(full, config.holdout, variables)
        obs = obs.without(holdout.mask)

    model = _build_model(obs, config.model.level, config.model.kappa,
                         config.model.range_factor, config.fixed_transition)
    priors = config.prior.priors(model.M, model.K)
    logger.info('fitting %s: M=%d K=%d N=%d T=%d, %d chain(s) x %d iterations', config.mode,
                model.M, model.K, model.N, obs.T, config.sampler.n_chains,
                config.sampler.n_iter)
    draws = run_chains(obs, model, priors, config.sampler)

    manifest = config.to_dict()
    manifest.update({
        'M': model.M, 'K': model.K, 'N': model.N, 'T': obs.T,
        'variables': variables, 'times': list(obs.time_labels),
        'fixed_transition': draws.fixed_transition,
        'chains': [{'chain': c.chain, 'n_draws': c.n_draws, 'elapsed_seconds': c.elapsed}
                   for c in draws.chains],
        'rhat': {'tau2': evaluate.split_rhat(draws.by_chain('tau2')).tolist()},
    })
    if draws.fixed_transition:
        manifest['transition'] = 'fixed at the identity'
    truth = storage.read_truth(config.data_dir)
    if truth is not None and config.mode == 'multivariate' and holdout is None:
        manifest['recovery'] = evaluate.recovery_report(draws, truth)
    storage.write_draws(draws, config.output_dir, manifest)
    storage.write_frame(pd.DataFrame({'lat': obs.lats, 'lon': obs.lons}),
                        os.path.join(config.output_dir, 'locations.csv'))
    storage.write_frame(evaluate.posterior_summary(draws),
                        os.path.join(config.output_dir, 'summary.csv'))
    return draws, manifest


def _fitted_context(draws_dir, data_dir=None):
    """Draws, manifest, truth tensor and holdout mask of a finished fit"""
    draws, manifest = storage.read_draws(draws_dir)
    full, _ = storage.read_dataset(data_dir or manifest['data_dir'])
    if manifest.get('holdout') is None:
        raise ConfigurationError('%s was fitted without a holdout, nothing to predict'
                                 % draws_dir)
    spec = evaluate.HoldoutSpec.from_dict(manifest['holdout'])
    variables = manifest['variables']
    return draws, manifest, full.select(variables), _holdout_for(full, spec, variables)


def _predict(draws, manifest, obs, holdout):
    if not draws.has_states:
        raise ConfigurationError('the fit did not store states; refit with store_states '
                                 'enabled to compute predictions')
    model = _build_model(obs, manifest['model']['level'], manifest['model']['kappa'],
                         manifest['model']['range_factor'], manifest['fixed_transition'])
    rng = chain_generator(manifest['sampler']['seed'], len(draws.chains))
    return evaluate.predictive_draws(draws, model.phi_m, holdout.mask, rng)


def cmd_predict(draws_dir, output_path, data_dir=None):
    """
    Writes the predictive mean and 95% interval of every held-out entry
    next to its truth and returns the interval coverage
    """
    draws, manifest, obs, holdout = _fitted_context(draws_dir, data_dir)
    samples = _predict(draws, manifest, obs, holdout)
    frame = evaluate.prediction_frame(obs, holdout, samples)
    storage.write_frame(frame, output_path)
    scored = obs.mask[holdout.mask]
    share = evaluate.coverage(frame['q025'][scored], frame['q975'][scored],
                              frame['truth'][scored])
    logger.info('predictive 95%% interval coverage of held-out truths: %.4f', share)
    return share


def cmd_score(draws_dirs, output_dir, data_dir=None):
    """
    Scores each labelled fit on its holdout and writes scores_monthly.csv
    and scores_averaged.csv
    """
    if not draws_dirs:
        raise ValidationError('score needs at least one labelled draws directory')
    tables = []
    for label, draws_dir in draws_dirs:
        draws, manifest, obs, holdout = _fitted_context(draws_dir, data_dir)
        samples = _predict(draws, manifest, obs, holdout)
        tables.append(evaluate.score_predictions(label, obs, holdout, samples))
    table = evaluate.ScoreTable.concat(tables)
    os.makedirs(output_dir, exist_ok=True)
    storage.write_frame(table.monthly, os.path.join(output_dir, 'scores_monthly.csv'))
    storage.write_frame(table.averaged, os.path.join(output_dir, 'scores_averaged.csv'))
    return table


def cmd_project(draws_dir, output_path):
    """Writes the posterior summary of every projected transition block per location"""
    draws, manifest = storage.read_draws(draws_dir)
    if draws.fixed_transition:
        raise ConfigurationError('%s holds the transition fixed at the identity, '
                                 'there is no transition to project' % draws_dir)
    locations = pd.read_csv(os.path.join(draws_dir, 'locations.csv'),
                            float_precision='round_trip')
    grid = build_icosahedral_grid(manifest['model']['level'])
    lats, lons = locations['lat'].to_numpy(), locations['lon'].to_numpy()
    points = [GeoPoint.from_degrees(lat, lon) for lat, lon in zip(lats, lons)]
    model = StdmModel.build(grid, points, draws.M, kappa=manifest['model']['kappa'],
                            range_factor=manifest['model']['range_factor'])
    frame = evaluate.projected_transition_summary(draws.stacked('transition'), model.phi,
                                                  lats, lons)
    storage.write_frame(frame, output_path)
    return frame
