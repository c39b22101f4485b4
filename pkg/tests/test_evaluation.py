import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floodcast.evaluation import aggregate, evaluate, evaluate_masks, reports_to_csv
from floodcast.raster_io import GeoTransform, Grid, MaskGrid
from floodcast.risk import RiskMap

GEO = GeoTransform(0.0, 40.0, 10.0, 4, 4)


def metric_fixture():
    """Truth: top row wet (4). Some: 3 of those plus 7 dry cells (10).
    Highest: the whole top row plus one dry corner (5, of which 4 wet)."""
    truth = np.zeros((4, 4), dtype=bool)
    truth[0, :] = True
    some = np.zeros((4, 4), dtype=bool)
    some[0, :3] = True
    some[1, :] = True
    some[2, :3] = True
    highest = np.zeros((4, 4), dtype=bool)
    highest[0, :] = True
    highest[3, 3] = True
    return MaskGrid(GEO, some), MaskGrid(GEO, highest), MaskGrid(GEO, truth)


def _risk(some, higher, highest):
    return RiskMap(
        MaskGrid(GEO, some), MaskGrid(GEO, higher), MaskGrid(GEO, highest), Grid(GEO, np.zeros((4, 4)))
    )


def test_hand_counted_fixture():
    some, highest, truth = metric_fixture()
    assert truth.count() == 4 and some.count() == 10 and highest.count() == 5
    r = evaluate_masks(some, highest, truth)
    assert (r.srr, r.hrp, r.rar) == (0.75, 0.8, 2.0)
    assert (r.some_hits, r.highest_hits) == (3, 4)


def test_perfect_forecast():
    truth = np.zeros((4, 4), dtype=bool)
    truth[1:3, 1:3] = True
    r = evaluate(_risk(truth, truth, truth), MaskGrid(GEO, truth))
    assert (r.srr, r.hrp, r.rar) == (1.0, 1.0, 1.0)


def test_undefined_denominators():
    empty = np.zeros((4, 4), dtype=bool)
    some = empty.copy()
    some[0, 0] = True
    r = evaluate(_risk(some, empty, empty), MaskGrid(GEO, empty))
    assert r.srr is None and r.hrp is None and r.rar is None
    assert "hrp: undefined" in r.to_text()


def test_valid_mask_excludes_pixels():
    some, highest, truth = metric_fixture()
    valid = np.ones((4, 4), dtype=bool)
    valid[0, 3] = False  # the one missed wet pixel
    r = evaluate_masks(some, highest, truth, MaskGrid(GEO, valid))
    assert r.srr == 1.0 and r.n_valid_pixels == 15 and r.highest_total == 4


@settings(max_examples=1000, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=16, max_size=16), st.lists(st.booleans(), min_size=16, max_size=16))
def test_rar_at_least_one_for_nested(tiers, truth):
    t = np.reshape(tiers, (4, 4))
    r = evaluate(_risk(t >= 1, t >= 2, t >= 3), MaskGrid(GEO, np.reshape(truth, (4, 4))))
    if r.rar is not None:
        assert r.rar >= 1.0


def test_aggregate_single_is_identity():
    some, highest, truth = metric_fixture()
    r = evaluate_masks(some, highest, truth)
    a = aggregate([r])
    assert (a.srr, a.hrp, a.rar) == (r.srr, r.hrp, r.rar)


def test_aggregate_mean_over_defined():
    full = np.ones((4, 4), dtype=bool)
    half = np.zeros((4, 4), dtype=bool)
    half[:2] = True
    empty = np.zeros((4, 4), dtype=bool)
    # srr 1.0 and hrp undefined
    r1 = evaluate(_risk(full, empty, empty), MaskGrid(GEO, half))
    # hrp 0.5, srr 1.0
    r2 = evaluate(_risk(full, full, full), MaskGrid(GEO, half))
    agg = aggregate([r1, r2])
    assert r1.hrp is None and r2.hrp == 0.5
    assert agg.hrp == 0.5 and agg.contributors["hrp"] == 1
    assert agg.srr == 1.0 and agg.contributors["srr"] == 2


def test_aggregate_srr_mean():
    truth = np.zeros((4, 4), dtype=bool)
    truth[0, :] = True
    truth[1, 0] = True  # 5 wet
    some_a = truth.copy()
    some_b = truth.copy()
    some_b[1, 0] = False  # 4 of 5
    ra = evaluate(_risk(some_a, some_a, some_a), MaskGrid(GEO, truth))
    rb = evaluate(_risk(some_b, some_b, some_b), MaskGrid(GEO, truth))
    assert aggregate([ra, rb]).srr == pytest.approx(0.9)


def test_pixel_weighting_pools_counts():
    some, highest, truth = metric_fixture()
    r = evaluate_masks(some, highest, truth)
    perfect = evaluate_masks(truth, truth, truth)
    agg = aggregate([r, perfect], weighting="pixel")
    assert agg.srr == 7 / 8 and agg.hrp == 8 / 9
    with pytest.raises(ValueError):
        aggregate([r], weighting="median")
    with pytest.raises(ValueError):
        aggregate([])


def test_csv_rows():
    some, highest, truth = metric_fixture()
    text = reports_to_csv([("e1", evaluate_masks(some, highest, truth))])
    lines = text.splitlines()
    assert lines[0].startswith("event,srr,hrp,rar")
    assert lines[1].startswith("e1,0.75,0.8,2.0")
