"""Dataset parsing, filtering, normalization, export, and watchlist tests."""

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from datacube import dataset as ds


# -- parse_csv -------------------------------------------------------------


def test_parse_basic():
    data = "id,year,zipcode,glucose\np1,2020,92093,98.5\np1,2021,92093,101.0\n"
    out = ds.parse_csv(data)
    assert len(out.rows) == 2
    assert len(out.individuals) == 1
    assert out.numeric_columns == ("glucose",)
    assert out.rows[0].individual_id == "p1"
    assert out.rows[0].year == 2020
    assert out.rows[0].region == "92093"
    assert out.rows[0].values == (98.5,)


def test_parse_header_only():
    out = ds.parse_csv("id,year,glucose\n")
    assert out.rows == ()
    assert out.individuals == {}


def test_parse_accepts_bytes_and_crlf_and_bom():
    out = ds.parse_csv(b"\xef\xbb\xbfid,year,glucose\r\np1,2020,1.5\r\n")
    assert len(out.rows) == 1
    assert out.rows[0].values == (1.5,)


def test_non_numeric_value_cites_row_and_column():
    with pytest.raises(ds.NonNumericValue) as ei:
        ds.parse_csv("id,year,zipcode,glucose\np1,2020,92093,abc\n")
    assert ei.value.row == 1
    assert ei.value.column == "glucose"


def test_missing_header():
    with pytest.raises(ds.MissingHeader):
        ds.parse_csv("")


def test_duplicate_column():
    with pytest.raises(ds.DuplicateColumn):
        ds.parse_csv("id,year,glucose,glucose\n")


def test_missing_id_or_year_column():
    with pytest.raises(ds.MissingIdOrYearColumn):
        ds.parse_csv("id,glucose\np1,5\n")
    with pytest.raises(ds.MissingIdOrYearColumn):
        ds.parse_csv("year,glucose\n2020,5\n")


def test_duplicate_id_year_pair():
    with pytest.raises(ds.DuplicateIdYearPair):
        ds.parse_csv("id,year,glucose\np1,2020,1\np1,2020,2\n")


def test_quoted_value_unsupported():
    with pytest.raises(ds.QuotedValueUnsupported):
        ds.parse_csv('id,year,glucose\np1,2020,"5"\n')


def test_year_bounds_and_nonfinite_rejected():
    with pytest.raises(ds.MalformedRow):
        ds.parse_csv("id,year,glucose\np1,1899,5\n")
    with pytest.raises(ds.NonNumericValue):
        ds.parse_csv("id,year,glucose\np1,2020,nan\n")
    with pytest.raises(ds.NonNumericValue):
        ds.parse_csv("id,year,glucose\np1,2020,inf\n")


def test_individuals_index_ordered_by_year():
    data = "id,year,glucose\np1,2021,2\np1,2020,1\np1,2022,3\n"
    out = ds.parse_csv(data)
    years = [out.rows[i].year for i in out.individuals["p1"]]
    assert years == [2020, 2021, 2022]


def test_validate_csv_collects_every_row_error():
    data = "id,year,glucose\np1,2020,ok?\np2,2020,5\np2,2020,6\np3,1000,7\n"
    dataset, errors = ds.validate_csv(data)
    assert dataset is not None
    assert len(dataset.rows) == 1
    kinds = [type(e).__name__ for e in errors]
    assert kinds == ["NonNumericValue", "DuplicateIdYearPair", "MalformedRow"]
    assert [e.row for e in errors] == [1, 3, 4]


def test_validate_csv_header_error_is_fatal():
    dataset, errors = ds.validate_csv("id,glucose\np1,5\n")
    assert dataset is None
    assert len(errors) == 1
    assert isinstance(errors[0], ds.MissingIdOrYearColumn)


# -- export_csv ------------------------------------------------------------


def test_export_round_trip(sample_dataset):
    text = ds.export_csv(sample_dataset, range(len(sample_dataset.rows)))
    again = ds.parse_csv(text)
    assert again.columns == sample_dataset.columns
    assert again.rows == sample_dataset.rows


def test_export_empty_subset(sample_dataset):
    text = ds.export_csv(sample_dataset, [])
    assert text == "id,year,zipcode,glucose,cholesterol\n"


def test_export_single_row_expected_text():
    data = "id,year,glucose\np1,2020,1.0\np2,2020,2.0\np3,2020,3.0\n"
    out = ds.export_csv(ds.parse_csv(data), [1])
    assert out == "id,year,glucose\np2,2020,2.0\n"


def test_export_index_out_of_range(sample_dataset):
    with pytest.raises(ds.IndexOutOfRange):
        ds.export_csv(sample_dataset, [99])


def _random_valid_csv(rng: random.Random) -> str:
    n_numeric = rng.randint(1, 4)
    cols = ["id", "year"] + (["zipcode"] if rng.random() < 0.5 else [])
    cols += [f"m{j}" for j in range(n_numeric)]
    lines = [",".join(cols)]
    seen = set()
    for _ in range(rng.randint(0, 30)):
        pid = f"p{rng.randint(1, 6)}"
        year = rng.randint(1990, 2040)
        if (pid, year) in seen:
            continue
        seen.add((pid, year))
        fields = [pid, str(year)]
        if "zipcode" in cols:
            fields.append(str(rng.randint(10000, 99999)))
        fields += [repr(rng.uniform(-1000, 1000)) for _ in range(n_numeric)]
        lines.append(",".join(fields))
    return "\n".join(lines) + "\n"


def test_round_trip_fixpoint_on_generated_files():
    rng = random.Random(2024)
    for _ in range(100):
        text = _random_valid_csv(rng)
        d1 = ds.parse_csv(text)
        d2 = ds.parse_csv(ds.export_csv(d1, range(len(d1.rows))))
        assert d2.columns == d1.columns
        assert d2.rows == d1.rows
        assert d2.individuals == d1.individuals


# -- apply_filters -----------------------------------------------------------


def test_filters_unconstrained_is_identity(sample_dataset):
    assert ds.apply_filters(sample_dataset, ds.FilterState()) == tuple(
        range(len(sample_dataset.rows))
    )


def test_filters_disjoint_year_range(sample_dataset):
    filt = ds.FilterState(year_range=(2030, 2031))
    assert ds.apply_filters(sample_dataset, filt) == ()


def test_filters_inclusive_numeric_bounds():
    data = "id,year,glucose\np1,2020,98.5\np2,2020,101.0\np3,2020,120.0\n"
    d = ds.parse_csv(data)
    filt = ds.FilterState(numeric_ranges={"glucose": (100.0, 120.0)})
    # brute-force scan oracle
    expected = tuple(
        i for i, r in enumerate(d.rows) if 100.0 <= r.values[0] <= 120.0
    )
    assert ds.apply_filters(d, filt) == expected == (1, 2)


def test_filters_region(sample_dataset):
    filt = ds.FilterState(regions={"92093"})
    visible = ds.apply_filters(sample_dataset, filt)
    assert all(sample_dataset.rows[i].region == "92093" for i in visible)
    assert len(visible) == 3


def test_filters_unknown_column(sample_dataset):
    with pytest.raises(ds.UnknownColumn):
        ds.apply_filters(sample_dataset, ds.FilterState(numeric_ranges={"nope": (0, 1)}))


@given(
    lo=st.floats(-100, 100),
    width=st.floats(0, 50),
    tighten=st.floats(0, 20),
)
@settings(max_examples=60, deadline=None)
def test_filters_monotone_tightening(lo, width, tighten):
    data = "id,year,glucose\n" + "".join(
        f"p{i},2020,{v}\n" for i, v in enumerate([-80.0, -10.0, 0.0, 15.5, 60.0, 99.0])
    )
    d = ds.parse_csv(data)
    wide = ds.FilterState(numeric_ranges={"glucose": (lo, lo + width)})
    narrow = ds.FilterState(
        numeric_ranges={"glucose": (lo + min(tighten, width), lo + width)}
    )
    assert set(ds.apply_filters(d, narrow)) <= set(ds.apply_filters(d, wide))


# -- normalize_channel -------------------------------------------------------


def test_normalize_basic():
    d = ds.parse_csv("id,year,v\na,2020,10\nb,2020,20\nc,2020,30\n")
    assert ds.normalize_channel(d, "v") == (0.0, 0.5, 1.0)


def test_normalize_constant_column():
    d = ds.parse_csv("id,year,v\na,2020,7\nb,2020,7\n")
    assert ds.normalize_channel(d, "v") == (0.5, 0.5)


def test_normalize_negative_values():
    # hand computation: (0-(-1))/4 = 0.25
    d = ds.parse_csv("id,year,v\na,2020,-1\nb,2020,0\nc,2020,3\n")
    assert ds.normalize_channel(d, "v") == (0.0, 0.25, 1.0)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40))
@settings(max_examples=60, deadline=None)
def test_normalize_in_unit_range_and_order_preserving(values):
    data = "id,year,v\n" + "".join(f"p{i},2020,{v!r}\n" for i, v in enumerate(values))
    d = ds.parse_csv(data)
    ts = ds.normalize_channel(d, "v")
    assert all(0.0 <= t <= 1.0 for t in ts)
    order = sorted(range(len(values)), key=lambda i: values[i])
    for a, b in zip(order, order[1:]):
        assert ts[a] <= ts[b]


# -- project_points / build_traces -------------------------------------------


def test_project_points_shared_channel():
    d = ds.parse_csv("id,year,v\na,2020,0\nb,2020,10\n")
    m = ds.DimensionMapping("v", "v", "v", "v", "v")
    pts = ds.project_points(d, m, (0, 1))
    assert pts[0].position == (0.0, 0.0, 0.0)
    assert pts[1].position == (1.0, 1.0, 1.0)
    assert (pts[0].color_t, pts[0].size_t) == (0.0, 0.0)
    assert (pts[1].color_t, pts[1].size_t) == (1.0, 1.0)


def test_project_points_empty_visible(sample_dataset):
    m = ds.DimensionMapping("glucose", "glucose", "glucose", "glucose", "glucose")
    assert ds.project_points(sample_dataset, m, ()) == []


def test_project_points_matches_per_channel_normalization(sample_dataset):
    m = ds.DimensionMapping("glucose", "cholesterol", "glucose", "cholesterol", "glucose")
    gl = ds.normalize_channel(sample_dataset, "glucose")
    ch = ds.normalize_channel(sample_dataset, "cholesterol")
    for p in ds.project_points(sample_dataset, m, range(5)):
        i = p.row_index
        assert p.position == (gl[i], ch[i], gl[i])
        assert p.color_t == ch[i]
        assert p.size_t == gl[i]


def test_traces_year_ordered():
    data = "id,year,v\np1,2022,3\np1,2020,1\np1,2021,2\np1,2023,4\n"
    d = ds.parse_csv(data)
    m = ds.DimensionMapping("v", "v", "v", "v", "v")
    traces = ds.build_traces(d, m, range(4))
    assert len(traces) == 1
    years = [d.rows[p.row_index].year for p in traces[0].points]
    assert years == [2020, 2021, 2022, 2023]


def test_traces_singletons_yield_nothing():
    d = ds.parse_csv("id,year,v\np1,2020,1\np2,2020,2\n")
    m = ds.DimensionMapping("v", "v", "v", "v", "v")
    assert ds.build_traces(d, m, range(2)) == []


def test_traces_skip_filtered_year():
    data = "id,year,v\np1,2020,1\np1,2021,2\np1,2022,3\n"
    d = ds.parse_csv(data)
    m = ds.DimensionMapping("v", "v", "v", "v", "v")
    visible = tuple(i for i in range(3) if d.rows[i].year != 2021)
    traces = ds.build_traces(d, m, visible)
    assert len(traces) == 1
    years = [d.rows[p.row_index].year for p in traces[0].points]
    assert years == [2020, 2022]


# -- colormap ----------------------------------------------------------------


def test_colormap_endpoints_and_midpoint():
    assert ds.colormap(0.0) == (0, 0, 255)
    assert ds.colormap(1.0) == (255, 0, 0)
    # 0.5 is halfway into the green->yellow segment: (128, 255, 0)
    assert ds.colormap(0.5) == (128, 255, 0)


def test_colormap_continuous_at_joints():
    eps = 1e-9
    for joint in (1.0 / 3.0, 2.0 / 3.0):
        below = ds.colormap(joint - eps)
        above = ds.colormap(joint + eps)
        assert all(abs(a - b) <= 1 for a, b in zip(below, above))
    assert ds.colormap(1.0 / 3.0) == (0, 255, 0)
    assert ds.colormap(2.0 / 3.0) == (255, 255, 0)


def test_colormap_clamps():
    assert ds.colormap(-5.0) == ds.colormap(0.0)
    assert ds.colormap(5.0) == ds.colormap(1.0)


# -- record_detail -----------------------------------------------------------


def test_record_detail_schema_order():
    d = ds.parse_csv("id,year,zipcode,glucose\np1,2020,92093,98.5\n")
    assert ds.record_detail(d, 0) == [
        ("id", "p1"),
        ("year", "2020"),
        ("zipcode", "92093"),
        ("glucose", "98.5000"),
    ]


def test_record_detail_bad_index(sample_dataset):
    with pytest.raises(ds.IndexOutOfRange):
        ds.record_detail(sample_dataset, 99)


def test_record_detail_6_significant_digits():
    d = ds.parse_csv("id,year,v\np1,2020,98.4999999\n")
    assert dict(ds.record_detail(d, 0))["v"] == "98.5000"


# -- watchlist ---------------------------------------------------------------


def test_watchlist_add_idempotent(sample_dataset):
    w = ds.watchlist_add(ds.Watchlist(), sample_dataset, "p1")
    w = ds.watchlist_add(w, sample_dataset, "p1")
    assert w.ids == ("p1",)


def test_watchlist_unknown_individual(sample_dataset):
    with pytest.raises(ds.UnknownIndividual):
        ds.watchlist_add(ds.Watchlist(), sample_dataset, "ghost")


def test_watchlist_export_empty(sample_dataset):
    text = ds.watchlist_export(ds.Watchlist(), sample_dataset)
    assert text == "id,year,zipcode,glucose,cholesterol\n"


def test_watchlist_export_matches_export_csv(sample_dataset):
    w = ds.watchlist_add(ds.Watchlist(), sample_dataset, "p1")
    text = ds.watchlist_export(w, sample_dataset)
    assert text == ds.export_csv(sample_dataset, sample_dataset.individuals["p1"])
    assert len(text.strip().split("\n")) == 3  # header + two p1 rows
