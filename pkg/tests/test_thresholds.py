import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floodcast.raster_io import GeoTransform, MaskGrid, write_mask
from floodcast.thresholds import (
    ObservationError,
    ObservationStack,
    Snapshot,
    fit_thresholds,
    load_observations,
    load_thresholds,
    predict,
    save_thresholds,
)

from oracles import best_precision_threshold, best_recall_threshold

GEO1 = GeoTransform(0.0, 10.0, 10.0, 1, 1)


def _stack(history, geo=GEO1):
    snaps = [
        Snapshot(lv, MaskGrid(geo, np.full(geo.shape, w)), MaskGrid.full(geo, True))
        for lv, w in history
    ]
    return ObservationStack(geo, tuple(snaps))


def _fit1(history):
    f = fit_thresholds(_stack(history))
    return float(f.t_recall[0, 0]), float(f.t_precision[0, 0])


def test_consistent_history():
    assert _fit1([(3.0, False), (4.0, True), (5.0, True)]) == (4.0, 4.0)


def test_always_dry_never_predicted():
    rec, prec = _fit1([(3.0, False), (9.0, False)])
    assert rec == math.inf and prec == math.inf


def test_always_wet():
    assert _fit1([(3.0, True), (9.0, True)]) == (3.0, 3.0)


def test_inconsistent_history():
    f = fit_thresholds(_stack([(5.0, True), (6.0, False)]))
    assert (f.t_recall[0, 0], f.t_precision[0, 0]) == (5.0, 6.0)
    assert predict(f, 5.0).some.values[0, 0]
    assert not predict(f, 4.99).some.values[0, 0]
    assert not predict(f, 6.0).highest.values[0, 0]
    assert predict(f, 6.01).highest.values[0, 0]


def test_boundary_is_strict_for_highest():
    f = fit_thresholds(_stack([(3.0, False), (4.0, True), (5.0, True)]))
    m = predict(f, 4.0)
    assert m.some.values[0, 0] and not m.highest.values[0, 0]


def test_predict_extremes():
    geo = GeoTransform(0.0, 20.0, 10.0, 2, 2)
    wet = [[True, False], [True, False]]
    snaps = (
        Snapshot(1.0, MaskGrid(geo, wet), MaskGrid.full(geo, True)),
        Snapshot(2.0, MaskGrid(geo, [[True, True], [False, False]]), MaskGrid.full(geo, True)),
    )
    f = fit_thresholds(ObservationStack(geo, snaps))
    low = predict(f, -1e9)
    assert not low.some.values.any() and not low.highest.values.any()
    high = predict(f, 1e9)
    assert np.array_equal(high.some.values, np.isfinite(f.t_recall))
    with pytest.raises(ValueError):
        predict(f, float("inf"))


def test_unobserved_pixels_never_predicted():
    geo = GeoTransform(0.0, 10.0, 10.0, 1, 2)
    valid = MaskGrid(geo, [[True, False]])
    snap = Snapshot(1.0, MaskGrid(geo, [[True, True]]), valid)
    f = fit_thresholds(ObservationStack(geo, (snap,)))
    assert f.coverage.tolist() == [[True, False]]
    assert f.t_recall[0, 1] == math.inf
    assert not predict(f, 100.0).some.values[0, 1]


def test_stack_validation():
    other = GeoTransform(0.0, 20.0, 10.0, 2, 2)
    with pytest.raises(ObservationError):
        ObservationStack(GEO1, (Snapshot(1.0, MaskGrid.full(other), MaskGrid.full(other)),))
    with pytest.raises(ObservationError):
        fit_thresholds(ObservationStack(GEO1, ()))


history = st.lists(
    st.tuples(st.sampled_from([1.0, 1.5, 2.0, 2.5, 3.0, 4.0]), st.booleans()),
    min_size=1,
    max_size=8,
)


@settings(max_examples=500, deadline=None)
@given(history=history)
def test_matches_brute_force(history):
    rec, prec = _fit1(history)
    assert rec == best_recall_threshold(history)
    assert prec == max(best_precision_threshold(history), rec)


@settings(max_examples=200, deadline=None)
@given(history=history)
def test_some_contains_highest(history):
    f = fit_thresholds(_stack(history))
    for level in np.linspace(0.5, 4.5, 17):
        m = predict(f, level)
        assert not (m.highest.values & ~m.some.values).any()


def test_save_load_round_trip(tmp_path, rng):
    geo = GeoTransform(0.0, 30.0, 10.0, 3, 3)
    snaps = tuple(
        Snapshot(float(lv), MaskGrid(geo, rng.random((3, 3)) < p), MaskGrid(geo, rng.random((3, 3)) < 0.9))
        for lv, p in zip(rng.uniform(0, 5, 6), np.linspace(0.1, 0.9, 6))
    )
    f = fit_thresholds(ObservationStack(geo, snaps))
    save_thresholds(f, tmp_path / "th")
    assert load_thresholds(tmp_path / "th") == f


def test_load_observations(tmp_path):
    geo = GeoTransform(0.0, 10.0, 10.0, 1, 2)
    write_mask(MaskGrid(geo, [[True, False]]), tmp_path / "a.asc")
    write_mask(MaskGrid(geo, [[True, True]]), tmp_path / "b.asc")
    write_mask(MaskGrid(geo, [[True, False]]), tmp_path / "va.asc")
    (tmp_path / "obs.json").write_text(
        json.dumps([{"level": 2.0, "wet": "a.asc"}, {"level": 3.0, "wet": "b.asc", "valid": "va.asc"}])
    )
    stack = load_observations(tmp_path / "obs.json")
    assert [s.gauge_level for s in stack.snapshots] == [2.0, 3.0]
    f = fit_thresholds(stack)
    assert f.t_recall.tolist() == [[2.0, math.inf]]
    assert f.t_precision.tolist() == [[2.0, math.inf]]
