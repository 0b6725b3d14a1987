"""
Hard negatives and the hybrid mix
=================================

Random negatives are easy: most of the country is far from any hazard.  The
hard-negative strategies put negatives on rings 50, 500 and 5000 m around
each hazard polygon.  This script checks the ring distances and compares a
forest trained on random negatives with one trained on the hybrid mix.
"""

import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from deskaid.evaluation import evaluate
from deskaid.features import build_matrix, build_schema, prepare_layers
from deskaid.geo_core import boundary_distance
from deskaid.ingest import parse_geojson_layer
from deskaid.models import TrainConfig, predict_proba, train_model
from deskaid.sampling import (BUFFER_PRESETS, HazardSet, SampleSet, assemble_training_set, sample_hard_negatives,
                              sample_positives, sample_random_negatives, split_train_test, strategy_for_buffer)
from deskaid.synthworld import RiskRecipe, WorldConfig, generate_world

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="deskaid_"))
SEED = 1

cfg = WorldConfig(seed=SEED, side_km=40.0, n_hazards=300, n_buildings=1500, n_conflicts=700,
                  risk=RiskRecipe(strength=10.0, offset=4.5, site_events_mean=2.0))
catalog = generate_world(cfg, out / "world")
hazards = parse_geojson_layer(catalog["hazard"].path, "polygon")
border = parse_geojson_layer(catalog["border"].path, "polygon")[0]
hz = HazardSet(hazards)

# %% Ring distances: every hard negative sits at the preset distance from its polygon
pools = {"random": sample_random_negatives(border, hz, 2 * len(hazards), SEED)}
for b in BUFFER_PRESETS:
    pts = sample_hard_negatives(hazards, b, SEED, hazard_set=hz)
    d = np.array([boundary_distance(p.lon, p.lat, hazards[p.source_polygon_id])[0] for p in pts])
    print(f"hn{b:g}: {len(pts)} points, distance to polygon {d.min():.1f} .. {d.max():.1f} m")
    pools[strategy_for_buffer(b)] = pts

# %% Train on random vs hybrid negatives, test on random and 50 m negatives
positives = sample_positives(hazards, SEED)
pos_train, pos_test = split_train_test(SampleSet(positives), 0.25, SEED)
split = {k: split_train_test(SampleSet(v), 0.25, SEED) for k, v in pools.items()}
schema = build_schema("expanded18", catalog)
layers = prepare_layers(catalog, schema)


def matrix(points):
    return build_matrix(SampleSet([replace(p, id=k) for k, p in enumerate(points)]), layers, schema)


tests = {k: matrix(list(pos_test) + list(split[k][1])) for k in ("random", "hn50")}
for mix in ("random", "hybrid"):
    train = assemble_training_set(list(pos_train), {k: list(v[0]) for k, v in split.items()}, mix, SEED)
    model = train_model("RF", matrix(list(train)), TrainConfig(seed=SEED, rf_n_trees=100))
    scores = {k: evaluate(m.labels, predict_proba(model, m)).macro_f1 for k, m in tests.items()}
    print(f"{mix:7s} training: macro-F1 random test {scores['random']:.3f}, hn50 test {scores['hn50']:.3f}")
