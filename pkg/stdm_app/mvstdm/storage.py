"""
This module reads and writes the on-disk layouts: dataset directories,
posterior draw directories and their JSON manifests
"""

import json
import logging
import os

import numpy as np
import pandas as pd

from mvstdm.model import ObservationTensor, StateSequence
from mvstdm.sampler import ChainDraws, PosteriorDraws
from mvstdm.utilities import ValidationError, check_type

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'
DATASET_MANIFEST = 'dataset.json'
DRAWS_MANIFEST = 'manifest.json'
TRUTH_FILE = 'truth.json'
STATES_FILE = 'states.csv'


def write_json(data, path):
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(data, handle, indent=1, sort_keys=True)
        handle.write('\n')


def read_json(path):
    with open(path, encoding='utf-8') as handle:
        try:
            return json.load(handle)
        except json.JSONDecodeError as exc:
            raise ValidationError('%s is not valid JSON: %s' % (path, exc))


def _write_csv(frame, path):
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep='')


def _read_csv(path, columns):
    frame = pd.read_csv(path, float_precision='round_trip')
    missing = [name for name in columns if name not in frame.columns]
    if missing:
        raise ValidationError('%s lacks columns %s' % (path, ', '.join(missing)))
    return frame


def _variable_file(name):
    return '%s.csv' % name


def write_dataset(obs, directory, states=None, truth=None, extra=None):
    """
    One `time, lat, lon, value` CSV per variable (time-major, locations in
    tensor order, empty value where missing) plus dataset.json. True states
    and parameters of simulated data go to states.csv and truth.json
    """
    check_type(obs, ObservationTensor, error_string='obs should be an ObservationTensor')
    os.makedirs(directory, exist_ok=True)
    times = np.repeat(np.asarray(obs.time_labels), obs.N)
    for i, name in enumerate(obs.variable_names):
        frame = pd.DataFrame({
            'time': times,
            'lat': np.tile(obs.lats, obs.T),
            'lon': np.tile(obs.lons, obs.T),
            'value': np.where(obs.mask[:, i], obs.values[:, i], np.nan).ravel(),
        })
        _write_csv(frame, os.path.join(directory, _variable_file(name)))
    manifest = {'variables': list(obs.variable_names), 'times': list(obs.time_labels),
                'N': obs.N}
    manifest.update(extra or {})
    write_json(manifest, os.path.join(directory, DATASET_MANIFEST))
    if states is not None:
        write_states(states, os.path.join(directory, STATES_FILE))
    if truth is not None:
        write_json(truth, os.path.join(directory, TRUTH_FILE))
    logger.info('wrote dataset %s (M=%d N=%d T=%d)', directory, obs.M, obs.N, obs.T)


def read_dataset(directory):
    """Reads an ObservationTensor and the dataset manifest"""
    manifest = read_json(os.path.join(directory, DATASET_MANIFEST))
    try:
        variables, times, N = manifest['variables'], manifest['times'], manifest['N']
    except KeyError as exc:
        raise ValidationError('%s lacks %s' % (DATASET_MANIFEST, exc))
    T = len(times)
    values, mask, lats, lons = [], [], None, None
    for name in variables:
        path = os.path.join(directory, _variable_file(name))
        frame = _read_csv(path, ['time', 'lat', 'lon', 'value'])
        if len(frame) != T * N:
            raise ValidationError('%s has %d rows, expected T*N=%d' % (path, len(frame), T * N))
        labels = frame['time'].astype(str).to_numpy().reshape(T, N)
        if not np.all(labels == np.asarray(times)[:, None]):
            raise ValidationError('%s does not follow the manifest time axis' % path)
        if lats is None:
            lats = frame['lat'].to_numpy()[:N]
            lons = frame['lon'].to_numpy()[:N]
        elif not (np.array_equal(frame['lat'].to_numpy()[:N], lats)
                  and np.array_equal(frame['lon'].to_numpy()[:N], lons)):
            raise ValidationError('%s has different locations than %s'
                                  % (path, _variable_file(variables[0])))
        column = frame['value'].to_numpy(dtype=float).reshape(T, N)
        values.append(np.nan_to_num(column))
        mask.append(~np.isnan(column))
    obs = ObservationTensor(np.stack(values, axis=1), np.stack(mask, axis=1), lats, lons,
                            tuple(times), tuple(variables))
    return obs, manifest


def read_truth(directory):
    """The truth sidecar of a simulated dataset, or None"""
    path = os.path.join(directory, TRUTH_FILE)
    return read_json(path) if os.path.exists(path) else None


def write_states(states, path):
    """Wide layout: t, then one column per state component"""
    alphas = states.alphas
    frame = pd.DataFrame(alphas, columns=['a%d' % k for k in range(alphas.shape[1])])
    frame.insert(0, 't', np.arange(alphas.shape[0]))
    _write_csv(frame, path)


def read_states(path):
    frame = _read_csv(path, ['t'])
    return StateSequence(frame.drop(columns='t').to_numpy(dtype=float))


def _long_frame(chains, name, index_names):
    """Long layout `chain, iter, <index...>, value` of one parameter family"""
    frames = []
    for chain in chains:
        draws = getattr(chain, name)
        n_cells = int(np.prod(draws.shape[1:], dtype=int))
        grids = np.indices(draws.shape[1:]).reshape(len(index_names), n_cells)
        columns = {'chain': chain.chain,
                   'iter': np.repeat(chain.iterations, n_cells)}
        for label, grid in zip(index_names, grids):
            columns[label] = np.tile(grid, chain.n_draws)
        columns['value'] = draws.reshape(-1)
        frames.append(pd.DataFrame(columns))
    return pd.concat(frames, ignore_index=True)


def _states_frame(chains):
    frames = []
    for chain in chains:
        n_draws, n_times, size = chain.states.shape
        frame = pd.DataFrame(chain.states.reshape(-1, size),
                             columns=['a%d' % k for k in range(size)])
        frame.insert(0, 't', np.tile(np.arange(n_times), n_draws))
        frame.insert(0, 'iter', np.repeat(chain.iterations, n_times))
        frame.insert(0, 'chain', chain.chain)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def write_draws(draws, directory, manifest):
    """
    Writes tau2.csv, sigma2.csv, loglik.csv, transition.csv (absent when A
    was held fixed), states.csv (when stored) and manifest.json
    """
    check_type(draws, PosteriorDraws, error_string='draws should be PosteriorDraws')
    os.makedirs(directory, exist_ok=True)
    chains = draws.chains
    _write_csv(_long_frame(chains, 'tau2', ['i']), os.path.join(directory, 'tau2.csv'))
    _write_csv(_long_frame(chains, 'sigma2', ['t', 'i']), os.path.join(directory, 'sigma2.csv'))
    _write_csv(_long_frame(chains, 'log_lik', []), os.path.join(directory, 'loglik.csv'))
    transition_path = os.path.join(directory, 'transition.csv')
    if draws.fixed_transition:
        if os.path.exists(transition_path):
            os.remove(transition_path)
    else:
        _write_csv(_long_frame(chains, 'transition', ['i', 'j', 'k']), transition_path)
    states_path = os.path.join(directory, STATES_FILE)
    if draws.has_states:
        _write_csv(_states_frame(chains), states_path)
    elif os.path.exists(states_path):
        os.remove(states_path)
    write_json(manifest, os.path.join(directory, DRAWS_MANIFEST))
    logger.info('wrote %d chains to %s', len(chains), directory)


def _unstack(frame, index_names, shape):
    """Per-chain (iterations, draws) from a long frame"""
    result = {}
    frame = frame.sort_values(['chain', 'iter'] + index_names, kind='stable')
    for chain, part in frame.groupby('chain', sort=True):
        iterations = part['iter'].drop_duplicates().to_numpy()
        values = part['value'].to_numpy(dtype=float).reshape((len(iterations),) + shape)
        result[int(chain)] = (iterations, values)
    return result


def read_draws(directory):
    """Reads a draw directory back into PosteriorDraws and its manifest"""
    manifest = read_json(os.path.join(directory, DRAWS_MANIFEST))
    try:
        M, K, T = manifest['M'], manifest['K'], manifest['T']
    except KeyError as exc:
        raise ValidationError('%s lacks %s' % (DRAWS_MANIFEST, exc))
    tau2 = _unstack(_read_csv(os.path.join(directory, 'tau2.csv'), ['chain', 'iter', 'i']),
                    ['i'], (M,))
    sigma2 = _unstack(_read_csv(os.path.join(directory, 'sigma2.csv'),
                                ['chain', 'iter', 't', 'i']), ['t', 'i'], (T, M))
    log_lik = _unstack(_read_csv(os.path.join(directory, 'loglik.csv'), ['chain', 'iter']),
                       [], ())
    transition = None
    transition_path = os.path.join(directory, 'transition.csv')
    if os.path.exists(transition_path):
        transition = _unstack(_read_csv(transition_path, ['chain', 'iter', 'i', 'j', 'k']),
                              ['i', 'j', 'k'], (M, M, K))
    states = None
    states_path = os.path.join(directory, STATES_FILE)
    if os.path.exists(states_path):
        frame = _read_csv(states_path, ['chain', 'iter', 't'])
        frame = frame.sort_values(['chain', 'iter', 't'], kind='stable')
        states = {int(chain): part.drop(columns=['chain', 'iter', 't']).to_numpy(dtype=float)
                  .reshape(-1, T + 1, M * K)
                  for chain, part in frame.groupby('chain', sort=True)}

    elapsed = {entry['chain']: entry.get('elapsed_seconds', 0.0)
               for entry in manifest.get('chains', [])}
    chains = []
    for chain, (iterations, tau2_values) in sorted(tau2.items()):
        chains.append(ChainDraws(
            chain=chain,
            iterations=iterations,
            tau2=tau2_values,
            sigma2=sigma2[chain][1],
            transition=None if transition is None else transition[chain][1],
            states=None if states is None else states[chain],
            log_lik=log_lik[chain][1],
            elapsed=elapsed.get(chain, 0.0),
        ))
    return PosteriorDraws(tuple(chains)), manifest


def write_frame(frame, path):
    """CSV export of a result table"""
    _write_csv(frame, path)
