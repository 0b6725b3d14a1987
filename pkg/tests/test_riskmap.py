import numpy as np
import pytest

from deskaid.errors import EmptyMap, OutOfRange
from deskaid.ingest import parse_geojson_layer
from deskaid.riskmap import (RiskBand, band_array, band_probability, band_summary, build_risk_map,
                             export_risk_geojson, write_summary_csv)


@pytest.mark.parametrize("p, band", [
    (0.0, "very_low"), (0.0999, "very_low"), (0.1, "low"), (0.2, "medium"), (0.3999, "medium"),
    (0.4, "high"), (0.6, "very_high"), (1.0, "very_high"),
])
def test_band_edges_are_left_closed(p, band):
    assert band_probability(p).name == band
    assert RiskBand(int(band_array([p])[0])).name == band


def test_uniform_probabilities_split_10_10_20_20_40():
    n = 1000
    rm = build_risk_map(np.zeros(n), np.zeros(n), (np.arange(n) + 0.5) / n)
    assert band_summary(rm) == {"very_low": 10.0, "low": 10.0, "medium": 20.0, "high": 20.0, "very_high": 40.0}


def test_custom_thresholds_and_validation():
    assert band_probability(0.5, (0.2, 0.4, 0.6, 0.8)) is RiskBand.medium
    with pytest.raises(ValueError):
        band_probability(0.5, (0.1, 0.4, 0.3, 0.8))
    with pytest.raises(ValueError):
        band_probability(0.5, (0.1, 0.2, 0.3))
    with pytest.raises(OutOfRange):
        band_probability(1.01)
    with pytest.raises(OutOfRange):
        band_array([0.5, np.nan])


def test_geojson_export_round_trip(tmp_path, rng):
    lon, lat = rng.uniform(60, 75, 50), rng.uniform(29, 38, 50)
    p = rng.uniform(size=50)
    rm = build_risk_map(lon, lat, p)
    export_risk_geojson(rm, tmp_path / "risk.geojson")
    pts = parse_geojson_layer(tmp_path / "risk.geojson", "point")
    assert len(pts) == 50
    np.testing.assert_allclose([q.lon for q in pts], lon, atol=5e-9)
    for q, prob, b in zip(pts, p, rm.bands):
        assert float(q.attributes["probability"]) == round(prob, 6)
        assert q.attributes["risk_band"] == RiskBand(int(b)).name
        assert q.attributes["color"] == RiskBand(int(b)).color


def test_summary_csv_and_empty_map(tmp_path):
    rm = build_risk_map([0.0, 1.0], [0.0, 1.0], [0.05, 0.95])
    write_summary_csv(tmp_path / "s.csv", band_summary(rm))
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "band,percent" and lines[1] == "very_low,50.000000" and lines[5] == "very_high,50.000000"
    empty = build_risk_map([], [], [])
    with pytest.raises(EmptyMap):
        band_summary(empty)
    with pytest.raises(EmptyMap):
        export_risk_geojson(empty, tmp_path / "e.geojson")
