"""Shared builders for synthetic stations and observation matrices."""

import datetime as dt

import numpy as np
import pytest

from stfield.geo import GeoPoint, LccParams, ProjPoint
from stfield.ingest import ObservationMatrix, Station, StationTable


def make_station_table(coords_km, elevations=None, lons=None, lats=None):
    """StationTable from an array of projected (s1, s2) km coordinates."""
    coords_km = np.asarray(coords_km, dtype=float)
    p = coords_km.shape[0]
    if elevations is None:
        elevations = np.linspace(50.0, 1200.0, p)
    if lons is None:
        lons = -120.0 + coords_km[:, 0] / 80.0
    if lats is None:
        lats = 46.0 + coords_km[:, 1] / 111.0
    stations = tuple(
        Station(
            id=f"S{j:03d}",
            geo=GeoPoint(float(lons[j]), float(lats[j])),
            proj=ProjPoint(float(coords_km[j, 0]), float(coords_km[j, 1])),
            elev_m=float(elevations[j]),
        )
        for j in range(p)
    )
    return StationTable(stations, lcc=LccParams(ref_lon=-120.0, ref_lat=46.0))


def random_station_table(p, rng, box_km=400.0):
    coords = rng.uniform(-box_km / 2, box_km / 2, size=(p, 2))
    elev = rng.uniform(0.0, 2000.0, size=p)
    return make_station_table(coords, elevations=elev)


def make_times(n, start=dt.date(2000, 1, 1)):
    return tuple(start + dt.timedelta(days=i) for i in range(n))


def make_obs(values, times=None, ids=None, start=dt.date(2000, 1, 1)):
    values = np.asarray(values, dtype=float)
    n, p = values.shape
    times = times or make_times(n, start)
    ids = tuple(ids or (f"S{j:03d}" for j in range(p)))
    return ObservationMatrix(values, tuple(times), np.isnan(values), ids)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
