import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from navjudge.geo import (
    CoincidentPointsError,
    GeoPoint,
    RelativeDirection,
    angular_diff,
    bearing,
    compass_word,
    haversine_distance,
    heading_to_diagonal_offset,
    heading_to_grid_offset,
    normalize_heading,
    relative_direction,
)
from oracles import bearing_oracle, delta_oracle, haversine_oracle

headings = st.floats(min_value=0, max_value=360, exclude_max=True, allow_nan=False)
lats = st.floats(min_value=-89, max_value=89, allow_nan=False)
lngs = st.floats(min_value=-179.9, max_value=180, allow_nan=False)


def test_geopoint_rejects_out_of_range():
    with pytest.raises(ValueError):
        GeoPoint(91.0, 0.0)
    with pytest.raises(ValueError):
        GeoPoint(0.0, -180.0)
    with pytest.raises(ValueError):
        GeoPoint(float("nan"), 0.0)


def test_haversine_identity_and_one_degree():
    o = GeoPoint(0.0, 0.0)
    assert haversine_distance(o, o) == 0.0
    assert haversine_distance(o, GeoPoint(0.0, 1.0)) == pytest.approx(111_195.0, abs=1.0)


def test_haversine_matches_chord_oracle():
    rng = random.Random(3)
    for _ in range(200):
        a = (rng.uniform(-80, 80), rng.uniform(-179, 179))
        b = (rng.uniform(-80, 80), rng.uniform(-179, 179))
        got = haversine_distance(GeoPoint(*a), GeoPoint(*b))
        assert got == pytest.approx(haversine_oracle(*a, *b), rel=1e-9, abs=1e-6)
        assert got == haversine_distance(GeoPoint(*b), GeoPoint(*a))


def test_bearing_cardinal_cases():
    assert bearing(GeoPoint(0, 0), GeoPoint(1, 0)) == 0.0
    assert bearing(GeoPoint(0, 0), GeoPoint(0, 1)) == pytest.approx(90.0)
    assert bearing(GeoPoint(0, 0), GeoPoint(-1, 0)) == pytest.approx(180.0)
    assert bearing(GeoPoint(0, 0), GeoPoint(0, -1)) == pytest.approx(270.0)


def test_bearing_of_coincident_points_is_an_error():
    with pytest.raises(CoincidentPointsError):
        bearing(GeoPoint(40.7, -73.9), GeoPoint(40.7, -73.9))


def test_bearing_matches_vector_oracle():
    rng = random.Random(5)
    worst = 0.0
    for _ in range(1000):
        a = (rng.uniform(-70, 70), rng.uniform(-179, 179))
        b = (a[0] + rng.uniform(-2, 2), a[1] + rng.uniform(-2, 2))
        got = bearing(GeoPoint(*a), GeoPoint(*b))
        worst = max(worst, angular_diff(got, bearing_oracle(*a, *b)))
        assert 0.0 <= got < 360.0
    assert worst <= 0.01


@given(headings, headings)
def test_angular_diff_symmetric_and_bounded(h1, h2):
    d = angular_diff(h1, h2)
    assert d == angular_diff(h2, h1)
    assert 0.0 <= d <= 180.0


def test_angular_diff_examples():
    assert angular_diff(10, 350) == 20
    assert angular_diff(123.4, 123.4) == 0
    assert angular_diff(0, 180) == 180


@pytest.mark.parametrize(
    "target,current,delta,direction",
    [
        (90, 0, 90, RelativeDirection.RIGHT),
        (0, 0, 0, RelativeDirection.FORWARD),
        (270, 0, -90, RelativeDirection.LEFT),
        (180, 0, 180, RelativeDirection.BACK),
        (45, 0, 45, RelativeDirection.FORWARD),
        (315, 0, -45, RelativeDirection.FORWARD),
        (135, 0, 135, RelativeDirection.RIGHT),
        (225, 0, -135, RelativeDirection.LEFT),
    ],
)
def test_relative_direction_cases(target, current, delta, direction):
    d, cls = relative_direction(target, current)
    assert d == pytest.approx(delta)
    assert cls is direction


def test_delta_partition_is_exhaustive_at_tenth_degree():
    seen = set()
    for k in range(3600):
        target = k / 10
        d, cls = relative_direction(target, 0.0)
        od, ocls = delta_oracle(target, 0.0)
        assert -180 < d <= 180
        assert d == pytest.approx(od, abs=1e-9)
        assert cls.value == ocls
        seen.add(cls)
    assert seen == set(RelativeDirection)


@given(lats, lngs, lats, lngs)
def test_bearing_to_itself_is_forward(la1, lo1, la2, lo2):
    a, b = GeoPoint(la1, lo1), GeoPoint(la2, lo2)
    if haversine_distance(a, b) < 1.0:
        return
    h = bearing(a, b)
    assert relative_direction(h, h) == (0.0, RelativeDirection.FORWARD)


@pytest.mark.parametrize(
    "h,offset",
    [(30, (-1, 0)), (90, (0, 1)), (224.9, (1, 0)), (225.0, (0, -1)), (315.0, (-1, 0)),
     (314.999, (0, -1)), (0.0, (-1, 0)), (45.0, (0, 1)), (135.0, (1, 0)), (359.99, (-1, 0))],
)
def test_grid_offset_intervals(h, offset):
    assert heading_to_grid_offset(h) == offset


def test_grid_offset_preimages_are_quarter_arcs():
    expected = {(-1, 0): 0, (0, 1): 0, (1, 0): 0, (0, -1): 0}
    for k in range(3600):
        expected[heading_to_grid_offset(k / 10)] += 1
    assert set(expected.values()) == {900}


def test_diagonal_offsets_by_quadrant():
    assert heading_to_diagonal_offset(10) == (-1, 1)
    assert heading_to_diagonal_offset(100) == (1, 1)
    assert heading_to_diagonal_offset(200) == (1, -1)
    assert heading_to_diagonal_offset(300) == (-1, -1)


def test_normalize_and_compass():
    assert normalize_heading(-0.0) == 0.0
    assert normalize_heading(-1e-15) < 360.0
    assert normalize_heading(725) == 5
    assert compass_word(208.6) == "Southwest"
    assert compass_word(359) == "North"
    assert compass_word(22.4) == "North"
    assert compass_word(22.5) == "Northeast"
    assert not math.isnan(normalize_heading(1e300))
