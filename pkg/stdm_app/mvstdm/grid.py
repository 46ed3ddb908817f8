"""
This module builds the icosahedral basis grid on the sphere,
its adjacency structure and great-circle geometry
"""

import json
import logging
from dataclasses import dataclass

import numpy as np

from mvstdm.utilities import ValidationError, check_type, freeze

logger = logging.getLogger(__name__)

MAX_LEVEL = 5
ANGULAR_TOLERANCE = 1e-12
QUANTUM = 1e-9


@dataclass(frozen=True)
class GeoPoint:
    """A location on the unit sphere, lat and lon in radians"""
    lat: float
    lon: float

    def __post_init__(self):
        check_type(self.lat, float, int, np.floating, error_string='lat should be a number')
        check_type(self.lon, float, int, np.floating, error_string='lon should be a number')
        if not (np.isfinite(self.lat) and np.isfinite(self.lon)):
            raise ValidationError('lat and lon should be finite')
        if not -np.pi / 2 <= self.lat <= np.pi / 2:
            raise ValidationError('lat %r is outside [-pi/2, pi/2]' % self.lat)
        if not -np.pi <= self.lon < np.pi:
            raise ValidationError('lon %r is outside [-pi, pi)' % self.lon)

    @classmethod
    def from_degrees(cls, lat_deg, lon_deg):
        """Builds a GeoPoint from degrees, wrapping lon into [-180, 180)"""
        lon_deg = (float(lon_deg) + 180.0) % 360.0 - 180.0
        return cls(float(np.radians(lat_deg)), float(np.radians(lon_deg)))

    @property
    def lat_deg(self):
        return float(np.degrees(self.lat))

    @property
    def lon_deg(self):
        return float(np.degrees(self.lon))


@dataclass(frozen=True)
class BasisGrid:
    """
    The icosahedral node set. Nodes are in canonical order
    (descending latitude, ascending longitude) and adjacency[i] holds the
    sorted neighbour indices of node i
    """
    level: int
    centers: tuple
    adjacency: tuple

    @property
    def size(self):
        """K, the number of basis nodes"""
        return len(self.centers)

    @property
    def neighbor_count(self):
        return tuple(len(neighbors) for neighbors in self.adjacency)

    @property
    def lats(self):
        return np.array([point.lat for point in self.centers])

    @property
    def lons(self):
        return np.array([point.lon for point in self.centers])

    @property
    def xyz(self):
        return to_cartesian(self.lats, self.lons)

    def edges(self):
        """Returns the undirected edges as an (E, 2) int array with i < j"""
        pairs = [(i, j) for i, neighbors in enumerate(self.adjacency)
                 for j in neighbors if i < j]
        return np.array(pairs, dtype=int).reshape(-1, 2)


def to_cartesian(lats, lons):
    """Unit vectors for arrays of lat/lon in radians, shape (..., 3)"""
    lats = np.asarray(lats, dtype=float)
    lons = np.asarray(lons, dtype=float)
    return np.stack([np.cos(lats) * np.cos(lons),
                     np.cos(lats) * np.sin(lons),
                     np.sin(lats)], axis=-1)


def to_latlon(xyz):
    """Lat/lon in radians of points on the unit sphere, lon in [-pi, pi)"""
    xyz = np.asarray(xyz, dtype=float)
    lats = np.arcsin(np.clip(xyz[..., 2], -1.0, 1.0))
    # the poles get lon 0 regardless of rounding in x, y
    polar = np.abs(np.abs(xyz[..., 2]) - 1.0) < ANGULAR_TOLERANCE
    lons = np.where(polar, 0.0, np.arctan2(xyz[..., 1], xyz[..., 0]))
    lons = np.where(lons >= np.pi, lons - 2 * np.pi, lons)
    return lats, lons


def _icosahedron():
    """
    Vertices and faces of an icosahedron with a vertex at each pole
    and two rings of five vertices at latitude +/- arctan(1/2)
    """
    ring_lat = np.arctan(0.5)
    lats = [np.pi / 2]
    lons = [0.0]
    lats += [ring_lat] * 5
    lons += [np.radians(72.0 * k) for k in range(5)]
    lats += [-ring_lat] * 5
    lons += [np.radians(36.0 + 72.0 * k) for k in range(5)]
    lats.append(-np.pi / 2)
    lons.append(0.0)
    vertices = to_cartesian(np.array(lats), np.array(lons))

    faces = []
    for k in range(5):
        upper, upper_next = 1 + k, 1 + (k + 1) % 5
        lower, lower_next = 6 + k, 6 + (k + 1) % 5
        faces.append((0, upper, upper_next))
        faces.append((upper, lower, upper_next))
        faces.append((upper_next, lower, lower_next))
        faces.append((11, lower_next, lower))
    return vertices, faces


def _quantize(point):
    return tuple(int(round(value / QUANTUM)) for value in point)


def _subdivide(vertices, faces):
    """One round of midpoint subdivision, deduplicating shared edge midpoints"""
    points = [np.asarray(v) for v in vertices]
    index = {_quantize(v): i for i, v in enumerate(points)}

    def midpoint(a, b):
        middle = points[a] + points[b]
        middle = middle / np.linalg.norm(middle)
        key = _quantize(middle)
        if key not in index:
            index[key] = len(points)
            points.append(middle)
        return index[key]

    new_faces = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        new_faces += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    return np.array(points), new_faces


def build_icosahedral_grid(level):
    """
    Builds the icosahedral grid after `level` rounds of midpoint subdivision.
    K = 10 * 4**level + 2 nodes, twelve of them with five neighbours
    """
    if isinstance(level, bool):
        raise TypeError('level should be an int')
    check_type(level, int, np.integer, error_string='level should be an int')
    if level < 0:
        raise ValidationError('level should be non-negative, got %d' % level)
    if level > MAX_LEVEL:
        raise ValidationError('level %d exceeds the maximum of %d (K would be %d)'
                              % (level, MAX_LEVEL, 10 * 4 ** level + 2))

    vertices, faces = _icosahedron()
    for _ in range(int(level)):
        vertices, faces = _subdivide(vertices, faces)

    lats, lons = to_latlon(vertices)
    # round before sorting so equal-latitude rings sort by longitude
    order = np.lexsort((np.round(lons, 12), -np.round(lats, 12)))
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))

    neighbors = [set() for _ in range(len(vertices))]
    for face in faces:
        for a in face:
            for b in face:
                if a != b:
                    neighbors[rank[a]].add(int(rank[b]))

    centers = tuple(GeoPoint(float(lats[i]), float(lons[i])) for i in order)
    adjacency = tuple(tuple(sorted(n)) for n in neighbors)
    grid = BasisGrid(level=int(level), centers=centers, adjacency=adjacency)
    logger.debug('built icosahedral grid level=%d K=%d', grid.level, grid.size)
    return grid


def great_circle_distances(lats1, lons1, lats2, lons2):
    """Haversine great-circle distances in radians; arguments broadcast"""
    dlat = np.asarray(lats2, dtype=float) - np.asarray(lats1, dtype=float)
    dlon = np.asarray(lons2, dtype=float) - np.asarray(lons1, dtype=float)
    hav = (np.sin(dlat / 2) ** 2
           + np.cos(lats1) * np.cos(lats2) * np.sin(dlon / 2) ** 2)
    return 2.0 * np.arcsin(np.sqrt(np.clip(hav, 0.0, 1.0)))


def great_circle_distance(p, q):
    """Great-circle distance in radians between two GeoPoints"""
    check_type(p, GeoPoint, error_string='p should be a GeoPoint')
    check_type(q, GeoPoint, error_string='q should be a GeoPoint')
    distance = float(great_circle_distances(p.lat, p.lon, q.lat, q.lon))
    return 0.0 if distance < ANGULAR_TOLERANCE else distance


def mesh_spacing(grid):
    """Mean great-circle distance between adjacent grid nodes"""
    check_type(grid, BasisGrid, error_string='grid should be a BasisGrid')
    if grid.size < 12:
        raise ValidationError('a basis grid has at least 12 nodes')
    edges = grid.edges()
    lats, lons = grid.lats, grid.lons
    lengths = great_circle_distances(lats[edges[:, 0]], lons[edges[:, 0]],
                                     lats[edges[:, 1]], lons[edges[:, 1]])
    return float(np.mean(lengths))


def regular_latlon_points(n_lat, n_lon):
    """
    Cell centres of a regular global n_lat x n_lon grid in canonical order
    (descending latitude, ascending longitude) as two arrays in degrees
    """
    lat_edges = np.linspace(-90.0, 90.0, n_lat + 1)
    lon_edges = np.linspace(-180.0, 180.0, n_lon + 1)
    lat_centers = ((lat_edges[:-1] + lat_edges[1:]) / 2)[::-1]
    lon_centers = (lon_edges[:-1] + lon_edges[1:]) / 2
    lat_deg, lon_deg = np.meshgrid(lat_centers, lon_centers, indexing='ij')
    return freeze(lat_deg.ravel()), freeze(lon_deg.ravel())


def grid_to_dict(grid):
    """The JSON export layout: level, centers in degrees and adjacency"""
    return {
        'level': grid.level,
        'centers': [{'lat_deg': round(point.lat_deg, 10),
                     'lon_deg': round(point.lon_deg, 10)} for point in grid.centers],
        'adjacency': [list(neighbors) for neighbors in grid.adjacency],
    }


def write_grid(grid, path):
    """Writes the grid export as UTF-8 JSON"""
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(grid_to_dict(grid), handle, indent=1)
