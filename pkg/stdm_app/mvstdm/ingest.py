"""
This module is the data pipeline: it reads gridded monthly series, regrids
them by spatial averaging, computes monthly climatologies and produces the
standardized anomalies the sampler consumes
"""

import json
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from mvstdm.grid import regular_latlon_points
from mvstdm.model import ObservationTensor
from mvstdm.utilities import ValidationError, check_positive_int, check_shape, check_type, \
    freeze

logger = logging.getLogger(__name__)

CSV_COLUMNS = ['time', 'lat', 'lon', 'value']


@dataclass(frozen=True)
class GriddedSeries:
    """
    A variable on a regular, cell-centred global lat/lon grid.
    values and mask are (time, lat, lon) with latitude rows running south to
    north and longitude columns west to east from -180
    """
    name: str
    times: tuple
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        check_type(self.name, str, error_string='name should be a string')
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 3:
            raise ValidationError('gridded values should be (time, lat, lon)')
        mask = check_shape(np.asarray(self.mask, dtype=bool), values.shape, 'mask')
        times = tuple(str(label) for label in self.times)
        if len(times) != values.shape[0]:
            raise ValidationError('%s: %d time labels for %d time steps'
                                  % (self.name, len(times), values.shape[0]))
        periods = _periods(times)
        if len(periods) > 1 and not np.all(np.diff(periods.asi8) > 0):
            raise ValidationError('%s: the time axis should be increasing' % self.name)
        values = np.where(mask, values, 0.0)
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'values', freeze(values))
        object.__setattr__(self, 'mask', freeze(mask))

    @property
    def n_lat(self):
        return self.values.shape[1]

    @property
    def n_lon(self):
        return self.values.shape[2]

    @property
    def lat_centers(self):
        edges = lat_edges(self.n_lat)
        return (edges[:-1] + edges[1:]) / 2

    @property
    def lon_centers(self):
        edges = lon_edges(self.n_lon)
        return (edges[:-1] + edges[1:]) / 2

    @property
    def months(self):
        """Calendar month (1..12) of every time step"""
        return np.asarray(_periods(self.times).month)

    def replace(self, values, mask=None, times=None):
        return GriddedSeries(self.name, self.times if times is None else times, values,
                             self.mask if mask is None else mask)


@dataclass(frozen=True)
class Climatology:
    """Per (calendar month, lat, lon) mean, standard deviation and count"""
    mean: np.ndarray
    std: np.ndarray
    count: np.ndarray

    @property
    def defined(self):
        """Cells where anomalies can be produced"""
        return (self.count >= 2) & (self.std > 0)


def _periods(times):
    try:
        return pd.PeriodIndex(list(times), freq='M')
    except (ValueError, TypeError) as exc:
        raise ValidationError('time labels should look like YYYY-MM: %s' % exc)


def lat_edges(n_lat):
    return np.linspace(-90.0, 90.0, n_lat + 1)


def lon_edges(n_lon):
    return np.linspace(-180.0, 180.0, n_lon + 1)


def _overlaps(target_edges, source_edges):
    """Length of the overlap of every target cell with every source cell"""
    low = np.maximum(target_edges[:-1, None], source_edges[None, :-1])
    high = np.minimum(target_edges[1:, None], source_edges[None, 1:])
    return np.clip(high - low, 0.0, None)


def regrid_average(series, n_lat, n_lon, weighted=True):
    """
    Averages series onto an n_lat x n_lon grid. Each target cell is the mean
    of the source cells it overlaps, weighted by overlap area (the integral of
    the cosine-latitude weight) or by overlap length in degrees when weighted
    is False. Missing source cells are left out; a target cell with no
    observed source cell is missing
    """
    check_type(series, GriddedSeries, error_string='series should be a GriddedSeries')
    n_lat = check_positive_int(n_lat, 'n_lat')
    n_lon = check_positive_int(n_lon, 'n_lon')
    source_lat, target_lat = lat_edges(series.n_lat), lat_edges(n_lat)
    if weighted:
        source_lat, target_lat = np.sin(np.radians(source_lat)), np.sin(np.radians(target_lat))
    lat_weights = _overlaps(target_lat, source_lat)
    lon_weights = _overlaps(lon_edges(n_lon), lon_edges(series.n_lon))

    observed = series.mask.astype(float)
    total = np.einsum('ia,tab,jb->tij', lat_weights, series.values * observed, lon_weights)
    weight = np.einsum('ia,tab,jb->tij', lat_weights, observed, lon_weights)
    mask = weight > 0
    values = np.divide(total, weight, out=np.zeros_like(total), where=mask)
    return GriddedSeries(series.name, series.times, values, mask)


def select_period(series, start, end):
    """The time steps with labels between start and end (YYYY-MM, inclusive)"""
    periods = _periods(series.times)
    keep = (periods >= pd.Period(start, freq='M')) & (periods <= pd.Period(end, freq='M'))
    if not keep.any():
        raise ValidationError('%s has no time step between %s and %s' % (series.name, start, end))
    times = tuple(np.asarray(series.times)[keep])
    return GriddedSeries(series.name, times, series.values[keep], series.mask[keep])


def compute_climatology(series, reference_years=None):
    """
    Per location and calendar month sample mean and standard deviation
    (n - 1 denominator) over the reference years (inclusive pair) or the
    whole series
    """
    check_type(series, GriddedSeries, error_string='series should be a GriddedSeries')
    if reference_years is not None:
        first, last = reference_years
        series = select_period(series, '%d-01' % first, '%d-12' % last)
    months = series.months
    shape = (12, series.n_lat, series.n_lon)
    mean = np.full(shape, np.nan)
    std = np.full(shape, np.nan)
    count = np.zeros(shape, dtype=int)
    for month in range(1, 13):
        chosen = months == month
        values = series.values[chosen]
        observed = series.mask[chosen]
        n = observed.sum(axis=0)
        single = np.argwhere(n == 1)
        if single.size:
            lat, lon = single[0]
            raise ValidationError(
                '%s: only one observation for month %d at lat %.4f lon %.4f, '
                'the standard deviation is undefined'
                % (series.name, month, series.lat_centers[lat], series.lon_centers[lon]))
        with np.errstate(invalid='ignore', divide='ignore'):
            month_mean = np.where(n > 0, values.sum(axis=0) / n, np.nan)
            squares = np.where(observed, (values - month_mean) ** 2, 0.0).sum(axis=0)
            month_std = np.where(n > 1, np.sqrt(squares / (n - 1)), np.nan)
        mean[month - 1], std[month - 1], count[month - 1] = month_mean, month_std, n
    if np.any(std == 0):
        logger.warning('%s: climatology has cells with zero standard deviation', series.name)
    return Climatology(freeze(mean), freeze(std), freeze(count))


def _climatology_at(series, clim):
    index = series.months - 1
    return clim.mean[index], clim.std[index], clim.defined[index]


def standardize_anomalies(series, clim):
    """(value - monthly mean) / monthly std; missing values stay missing"""
    check_type(clim, Climatology, error_string='clim should be a Climatology')
    mean, std, defined = _climatology_at(series, clim)
    bad = np.argwhere(series.mask & ~defined)
    if bad.size:
        t, lat, lon = bad[0]
        raise ValidationError(
            '%s: no usable climatology (zero or undefined std) at %s lat %.4f lon %.4f'
            % (series.name, series.times[t], series.lat_centers[lat], series.lon_centers[lon]))
    with np.errstate(invalid='ignore', divide='ignore'):
        anomalies = np.where(series.mask, (series.values - mean) / std, 0.0)
    return series.replace(anomalies)


def restore_anomalies(series, clim):
    """Inverse of standardize_anomalies"""
    mean, std, _ = _climatology_at(series, clim)
    return series.replace(np.where(series.mask, series.values * std + mean, 0.0))


def to_observation_tensor(series_list):
    """
    Stacks M series on a shared grid and time axis into a T x M x N tensor
    with locations in canonical (descending lat, ascending lon) order
    """
    series_list = list(series_list)
    if not series_list:
        raise ValidationError('at least one series is needed')
    first = series_list[0]
    for series in series_list[1:]:
        if series.values.shape[1:] != first.values.shape[1:]:
            raise ValidationError('%s and %s are on different grids' % (first.name, series.name))
        if series.times != first.times:
            raise ValidationError('%s and %s have different time axes'
                                  % (first.name, series.name))
    # rows are stored south to north; canonical order starts in the north
    values = np.stack([s.values[:, ::-1, :].reshape(len(s.times), -1) for s in series_list],
                      axis=1)
    mask = np.stack([s.mask[:, ::-1, :].reshape(len(s.times), -1) for s in series_list], axis=1)
    lats, lons = regular_latlon_points(first.n_lat, first.n_lon)
    return ObservationTensor(values, mask, lats, lons, first.times,
                             tuple(s.name for s in series_list))


def from_observation_tensor(obs, n_lat, n_lon):
    """Splits a tensor on a regular grid back into one GriddedSeries per variable"""
    if obs.N != n_lat * n_lon:
        raise ValidationError('tensor has N=%d, grid has %d cells' % (obs.N, n_lat * n_lon))
    series = []
    for i, name in enumerate(obs.variable_names):
        values = obs.values[:, i].reshape(obs.T, n_lat, n_lon)[:, ::-1, :]
        mask = obs.mask[:, i].reshape(obs.T, n_lat, n_lon)[:, ::-1, :]
        series.append(GriddedSeries(name, obs.time_labels, values, mask))
    return series


def read_gridded_csv(csv_path, manifest_path):
    """
    Reads the `time, lat, lon, value` layout; an empty value is missing.
    The JSON manifest gives variable, n_lat, n_lon and the time axis
    """
    with open(manifest_path, encoding='utf-8') as handle:
        manifest = json.load(handle)
    try:
        name, n_lat, n_lon = manifest['variable'], manifest['n_lat'], manifest['n_lon']
        times = tuple(manifest['times'])
    except KeyError as exc:
        raise ValidationError('%s lacks %s' % (manifest_path, exc))
    frame = pd.read_csv(csv_path, dtype={'time': str}, skipinitialspace=True,
                        float_precision='round_trip')
    missing = set(CSV_COLUMNS) - set(frame.columns)
    if missing:
        raise ValidationError('%s lacks columns %s' % (csv_path, ', '.join(sorted(missing))))

    time_index = {label: t for t, label in enumerate(times)}
    unknown = set(frame['time']) - set(time_index)
    if unknown:
        raise ValidationError('%s has times outside the manifest: %s'
                              % (csv_path, ', '.join(sorted(unknown)[:5])))
    rows = np.round((frame['lat'].to_numpy() + 90.0) * n_lat / 180.0 - 0.5).astype(int)
    cols = np.round(((frame['lon'].to_numpy() + 180.0) % 360.0) * n_lon / 360.0 - 0.5).astype(int)
    if np.any((rows < 0) | (rows >= n_lat)):
        raise ValidationError('%s has latitudes off the %d-row grid' % (csv_path, n_lat))
    steps = frame['time'].map(time_index).to_numpy()
    cells = pd.DataFrame({'t': steps, 'row': rows, 'col': cols})
    repeated = cells.duplicated()
    if repeated.any():
        first = frame[repeated.to_numpy()].iloc[0]
        raise ValidationError('%s has %d repeated (time, lat, lon) rows, first at %s %g %g'
                              % (csv_path, repeated.sum(), first['time'], first['lat'],
                                 first['lon']))

    values = np.zeros((len(times), n_lat, n_lon))
    mask = np.zeros(values.shape, dtype=bool)
    present = frame['value'].notna().to_numpy()
    values[steps[present], rows[present], cols[present]] = frame['value'].to_numpy()[present]
    mask[steps[present], rows[present], cols[present]] = True
    return GriddedSeries(name, times, values, mask)


def write_gridded_csv(series, csv_path, manifest_path):
    """Writes series in the layout read_gridded_csv consumes"""
    t, lat, lon = np.meshgrid(np.arange(len(series.times)), np.arange(series.n_lat),
                              np.arange(series.n_lon), indexing='ij')
    frame = pd.DataFrame({
        'time': np.asarray(series.times)[t.ravel()],
        'lat': series.lat_centers[lat.ravel()],
        'lon': series.lon_centers[lon.ravel()],
        'value': np.where(series.mask, series.values, np.nan).ravel(),
    })
    frame.to_csv(csv_path, index=False, float_format='%.17g', na_rep='')
    with open(manifest_path, 'w', encoding='utf-8') as handle:
        json.dump({'variable': series.name, 'n_lat': series.n_lat, 'n_lon': series.n_lon,
                   'times': list(series.times)}, handle, indent=1)


def write_climatology(series, clim, path):
    """Climatology export: lat, lon, month, mean, std"""
    month, lat, lon = np.meshgrid(np.arange(12), np.arange(series.n_lat),
                                  np.arange(series.n_lon), indexing='ij')
    frame = pd.DataFrame({
        'lat': series.lat_centers[lat.ravel()],
        'lon': series.lon_centers[lon.ravel()],
        'month': month.ravel() + 1,
        'mean': clim.mean.ravel(),
        'std': clim.std.ravel(),
    })
    frame.to_csv(path, index=False, float_format='%.17g', na_rep='')
