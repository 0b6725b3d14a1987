"""``deskaid``: the desk-assessment pipeline as batch subcommands.

Every subcommand reads one JSON config (``--config``), applies ``--set
key=value`` overrides, runs one stage and writes its artifacts plus a run log
under the output directory::

    deskaid synth     --config run.json     # synthetic world -> catalog
    deskaid sample    --config run.json     # samples/train.csv, samples/test_<strategy>.csv
    deskaid featurize --config run.json     # features/*.csv + schema sidecars
    deskaid train     --config run.json     # model/model.json
    deskaid evaluate  --config run.json     # eval/report_<strategy>.json, eval/roc_<strategy>.csv
    deskaid predict   --config run.json     # predictions/<name>.csv
    deskaid riskmap   --config run.json     # riskmap/risk.geojson, riskmap/summary.csv
    deskaid report    --config run.json     # report/summary.json and diagnostics

Exit codes: 0 success, 2 configuration or validation error, 3 data error,
4 anything unexpected.  Errors are also printed to stderr as one JSON line.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import platform
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DataError, DeskaidError
from .evaluation import (correlation_matrix, evaluate, feature_importance, vif, write_json, write_report_json,
                         write_roc_csv)
from .features import (FEATURE_SETS, LabeledMatrix, build_matrix, build_schema, concat_matrices, prepare_layers,
                       read_matrix, write_matrix)
from .geo_graph import graph_from_matrix, write_graph_csv
from .ingest import load_catalog, parse_geojson_layer
from .models import MODEL_KINDS, TrainConfig, load_model, predict_proba, save_model, train_model
from .parallel import ENV_THREADS, max_workers
from .riskmap import (DEFAULT_THRESHOLDS, band_summary, build_risk_map, export_risk_geojson, write_summary_csv)
from .sampling import (MIXES, HazardSet, SampleSet, assemble_training_set, read_samples_csv, sample_evaluation_grid,
                       sample_hard_negatives, sample_positives, sample_random_negatives, split_by_region,
                       split_train_test, strategy_for_buffer, write_samples_csv)
from .synthworld import WorldConfig, generate_world

STAGES = ("synth", "sample", "featurize", "train", "evaluate", "predict", "riskmap", "report")
GRAPH_KINDS = ("GCNN", "GCNN_weighted")

DEFAULT_CONFIG = {
    "catalog": "world/catalog.json",
    "output_dir": "run",
    "seed": 0,
    "world": {},
    "sampling": {
        "mix": "random",
        "buffers": [50, 500, 5000],
        "per_polygon": 2,
        "test_fraction": 0.25,
        "test_region": None,
        "test_region_name": None,
        "hybrid_shares": None,
    },
    "features": {"set": "expanded18", "densify_lines_m": None},
    "model": {"kind": "RF", "params": {}, "graph_test": None},
    "evaluate": {"threshold": 0.5},
    "riskmap": {"region": None, "region_name": None, "grid_spacing_m": 1000.0,
                "thresholds": list(DEFAULT_THRESHOLDS)},
}


# ---------------------------------------------------------------------------
# configuration

def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: dict, assignments) -> dict:
    """Apply ``a.b.c=value`` strings; values are JSON when they parse, else strings."""
    config = copy.deepcopy(config)
    for item in assignments or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        parts = [p for p in key.strip().split(".") if p]
        if not parts:
            raise ConfigError(f"--set has an empty key: {item!r}")
        node = config
        for p in parts[:-1]:
            if not isinstance(node.setdefault(p, {}), dict):
                raise ConfigError(f"--set {key}: {p!r} is not a section")
            node = node[p]
        node[parts[-1]] = _parse_value(raw)
    return config


def load_config(path, assignments=()) -> dict:
    """Defaults, then the file, then overrides.  A run log is accepted as a config."""
    doc = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        if "stage" in doc and isinstance(doc.get("config"), dict):
            doc = doc["config"]
    unknown = set(doc) - set(DEFAULT_CONFIG)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return apply_overrides(_merge(DEFAULT_CONFIG, doc), assignments)


def validate_config(config: dict, stage: str) -> None:
    """Enumerations always; referenced input files only for stages that read them."""
    s, f, m = config["sampling"], config["features"], config["model"]
    if not isinstance(config["seed"], int) or isinstance(config["seed"], bool) or config["seed"] < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {config['seed']!r}")
    if s["mix"] not in MIXES:
        raise ConfigError(f"sampling.mix must be one of {MIXES}, got {s['mix']!r}")
    buffers = s["buffers"]
    if not isinstance(buffers, list) or not buffers or not all(
            isinstance(b, (int, float)) and not isinstance(b, bool) and b > 0 for b in buffers):
        raise ConfigError(f"sampling.buffers must be a list of positive numbers, got {buffers!r}")
    have = {"random", *(strategy_for_buffer(b) for b in buffers)}
    needed = set(s["hybrid_shares"] or {"hn50": 1, "hn500": 1, "hn5000": 1, "random": 1}) \
        if s["mix"] == "hybrid" else {s["mix"]}
    if not needed <= have:
        raise ConfigError(f"sampling.mix {s['mix']!r} needs strategies {sorted(needed - have)} "
                          f"missing from sampling.buffers")
    if not 0 < float(s["test_fraction"]) < 1:
        raise ConfigError("sampling.test_fraction must be in (0, 1)")
    if int(s["per_polygon"]) < 1:
        raise ConfigError("sampling.per_polygon must be >= 1")
    if f["set"] not in FEATURE_SETS:
        raise ConfigError(f"features.set must be one of {FEATURE_SETS}, got {f['set']!r}")
    if m["kind"] not in MODEL_KINDS:
        raise ConfigError(f"model.kind must be one of {MODEL_KINDS}, got {m['kind']!r}")
    train_config(config)
    thresholds = config["riskmap"]["thresholds"]
    try:
        build_risk_map([], [], [], thresholds)
    except ValueError as exc:
        raise ConfigError(f"riskmap.thresholds: {exc}") from None
    if not float(config["riskmap"]["grid_spacing_m"]) > 0:
        raise ConfigError("riskmap.grid_spacing_m must be > 0")
    if stage != "synth":
        catalog = Path(config["catalog"])
        if not catalog.is_file():
            raise ConfigError(f"catalog file not found: {catalog}")
    for key, section in (("test_region", "sampling"), ("region", "riskmap")):
        path = config[section][key]
        if path is not None and not Path(path).is_file():
            raise ConfigError(f"{section}.{key} file not found: {path}")


def train_config(config: dict) -> TrainConfig:
    params = dict(config["model"]["params"] or {})
    params.setdefault("seed", config["seed"])
    try:
        return TrainConfig.from_json(params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model.params: {exc}") from None


# ---------------------------------------------------------------------------
# run context

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Run:
    """Per-invocation bookkeeping: output paths, --force checks, the run log."""

    def __init__(self, stage: str, config: dict, argv, force: bool):
        self.stage = stage
        self.config = config
        self.argv = list(argv)
        self.force = force
        self.out = Path(config["output_dir"])
        self.inputs: list[Path] = []
        self.outputs: list[Path] = []
        self.extra: dict = {}
        self.started = datetime.now(timezone.utc)
        self.t0 = time.perf_counter()

    def path(self, *parts) -> Path:
        return self.out.joinpath(*parts)

    def reading(self, *paths) -> None:
        for p in paths:
            p = Path(p)
            if not p.is_file():
                raise ConfigError(f"{self.stage}: required input not found: {p} (run the earlier stage first)")
            self.inputs.append(p)

    def writing(self, path) -> Path:
        path = Path(path)
        if path.exists() and not self.force:
            raise ConfigError(f"{path} already exists; pass --force to overwrite")
        path.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(path)
        return path

    def write_log(self) -> Path:
        log_path = self.path("logs", f"{self.stage}.json")
        log_path.parent.mkdir(parents=True, exist_ok=True)
        doc = {
            "stage": self.stage,
            "argv": self.argv,
            "config": self.config,
            "seed": self.config["seed"],
            "inputs": {str(p): _sha256(p) for p in self.inputs},
            "outputs": {str(p): _sha256(p) for p in self.outputs if p.is_file()},
            "details": self.extra,
            "environment": {
                "deskaid": __version__, "python": platform.python_version(), "numpy": np.__version__,
                "scipy": _scipy_version(), "threads": max_workers(),
            },
            "started_at": self.started.isoformat(timespec="seconds"),
            "wall_time_s": round(time.perf_counter() - self.t0, 3),
        }
        write_json(log_path, doc)
        return log_path


def _scipy_version() -> str:
    import scipy
    return scipy.__version__


# ---------------------------------------------------------------------------
# shared helpers

def _catalog(run: Run):
    run.reading(run.config["catalog"])
    return load_catalog(run.config["catalog"])


def _region(path, name):
    polys = parse_geojson_layer(path, "polygon")
    if name is None:
        return polys[0]
    for p in polys:
        if str(p.attributes.get("name")) == str(name):
            return p
    raise ConfigError(f"{path}: no polygon named {name!r}")


def _renumber(points) -> SampleSet:
    return SampleSet([replace(p, id=k) for k, p in enumerate(points)], 0)


def _test_names(run: Run) -> list[str]:
    return ["random", *(strategy_for_buffer(b) for b in run.config["sampling"]["buffers"])]


def _feature_paths(run: Run, name: str) -> tuple[Path, Path]:
    csv_path = run.path("features", f"{name}.csv")
    return csv_path, csv_path.with_name(f"{name}.schema.json")


def _load_features(run: Run, name: str) -> LabeledMatrix:
    csv_path, side = _feature_paths(run, name)
    run.reading(csv_path, side)
    return read_matrix(csv_path)


def _as_eval_matrix(train: LabeledMatrix, other: LabeledMatrix) -> LabeledMatrix:
    """Rows of ``other`` marked as non-training, carrying the training column stats."""
    return LabeledMatrix(other.schema, other.X, other.labels, other.ids, other.lons, other.lats,
                         np.zeros(len(other), dtype=bool), train.mean, train.std)


def _probabilities(model, train: LabeledMatrix, target: LabeledMatrix, k: int) -> np.ndarray:
    """Model probabilities for ``target`` rows; graph models see train + target nodes."""
    if model.kind not in GRAPH_KINDS:
        return predict_proba(model, target)
    joint = concat_matrices(train, _as_eval_matrix(train, target))
    graph = graph_from_matrix(joint, k)
    return predict_proba(model, graph, np.arange(len(train), len(joint)))


# ---------------------------------------------------------------------------
# stages

def stage_synth(run: Run) -> None:
    try:
        cfg = WorldConfig.from_json(run.config["world"] | {"seed": run.config["world"].get("seed", run.config["seed"])})
    except TypeError as exc:
        raise ConfigError(f"world: {exc}") from None
    catalog_path = Path(run.config["catalog"])
    world_dir = catalog_path.parent
    if catalog_path.exists() and not run.force:
        raise ConfigError(f"{catalog_path} already exists; pass --force to overwrite")
    generate_world(cfg, world_dir)
    if catalog_path.name != "catalog.json":
        (world_dir / "catalog.json").replace(catalog_path)
    run.outputs.extend(sorted(p for p in world_dir.iterdir() if p.is_file()))


def stage_sample(run: Run) -> None:
    cfg, s = run.config, run.config["sampling"]
    seed = cfg["seed"]
    catalog = _catalog(run)
    hazards = parse_geojson_layer(catalog.require(["hazard"])["hazard"].path, "polygon")
    border = parse_geojson_layer(catalog.require(["border"])["border"].path, "polygon")[0]
    hz = HazardSet(hazards)
    per = int(s["per_polygon"])
    positives = sample_positives(hazards, seed, per)
    pools = {"random": sample_random_negatives(border, hz, len(positives), seed)}
    for b in s["buffers"]:
        pools[strategy_for_buffer(b)] = sample_hard_negatives(hazards, float(b), seed, per, hazard_set=hz)

    if s["test_region"]:
        region = _region(s["test_region"], s["test_region_name"])
        run.reading(s["test_region"])

        def split(points):
            return split_by_region(SampleSet(points, seed), region)
    else:
        def split(points):
            return split_train_test(SampleSet(points, seed), float(s["test_fraction"]), seed)

    pos_train, pos_test = split(positives)
    neg_train, neg_test = {}, {}
    for name, pool in pools.items():
        neg_train[name], neg_test[name] = split(pool)
    train = assemble_training_set(list(pos_train), {k: list(v) for k, v in neg_train.items()}, s["mix"], seed,
                                  s["hybrid_shares"])
    write_samples_csv(run.writing(run.path("samples", "train.csv")), train)
    counts = {"train": len(train)}
    for name in pools:
        test = _renumber(list(pos_test) + list(neg_test[name]))
        write_samples_csv(run.writing(run.path("samples", f"test_{name}.csv")), test)
        counts[f"test_{name}"] = len(test)
    run.extra.update(counts=counts, mix=s["mix"])


def stage_featurize(run: Run) -> None:
    cfg = run.config
    catalog = _catalog(run)
    schema = build_schema(cfg["features"]["set"], catalog)
    layers = prepare_layers(catalog, schema, cfg["features"]["densify_lines_m"])
    sample_dir = run.path("samples")
    train_csv = sample_dir / "train.csv"
    run.reading(train_csv)
    train = build_matrix(read_samples_csv(train_csv, cfg["seed"]), layers, schema)
    csv_path, side = _feature_paths(run, "train")
    run.writing(side)
    write_matrix(run.writing(csv_path), train)
    for name in _test_names(run):
        path = sample_dir / f"test_{name}.csv"
        if not path.is_file():
            continue
        run.reading(path)
        samples = read_samples_csv(path, cfg["seed"])
        if not len(samples):
            continue
        m = _as_eval_matrix(train, build_matrix(samples, layers, schema))
        csv_path, side = _feature_paths(run, f"test_{name}")
        run.writing(side)
        write_matrix(run.writing(csv_path), m)
    run.extra.update(schema=schema.to_json(), fingerprint=schema.fingerprint)


def _graph_test_name(run: Run) -> str:
    name = run.config["model"]["graph_test"]
    if name is None:
        mix = run.config["sampling"]["mix"]
        name = "random" if mix == "hybrid" else mix
    return name


def stage_train(run: Run) -> None:
    kind = run.config["model"]["kind"]
    tc = train_config(run.config)
    train = _load_features(run, "train")
    train = replace(train, train_mask=np.ones(len(train), dtype=bool))
    if kind in GRAPH_KINDS:
        name = _graph_test_name(run)
        test = _load_features(run, f"test_{name}")
        joint = concat_matrices(train, _as_eval_matrix(train, test))
        graph = graph_from_matrix(joint, tc.gcnn_k)
        write_graph_csv(run.path("model", "graph"), graph, joint.schema.names)
        run.outputs.extend(run.path("model", "graph", f) for f in ("nodes.csv", "edges.csv", "weights.csv"))
        model = train_model(kind, joint, tc, graph)
        run.extra["graph_test"] = name
    else:
        model = train_model(kind, train, tc)
    save_model(model, run.writing(run.path("model", "model.json")))
    run.extra.update(kind=kind, n_train=len(train))


def stage_evaluate(run: Run) -> None:
    threshold = float(run.config["evaluate"]["threshold"])
    model_path = run.path("model", "model.json")
    run.reading(model_path)
    model = load_model(model_path)
    train = _load_features(run, "train")
    summary = {}
    for name in _test_names(run):
        csv_path, _ = _feature_paths(run, f"test_{name}")
        if not csv_path.is_file():
            continue
        test = _load_features(run, f"test_{name}")
        p = _probabilities(model, train, test, model.config.gcnn_k)
        report = evaluate(test.labels, p, threshold)
        write_report_json(run.writing(run.path("eval", f"report_{name}.json")), report, model_kind=model.kind,
                          test_set=name)
        if report.roc_points:
            write_roc_csv(run.writing(run.path("eval", f"roc_{name}.csv")), report.roc_points)
        summary[name] = {"macro_f1": report.macro_f1, "accuracy": report.accuracy, "auc": report.auc,
                         "n_test": report.n_test}
    if not summary:
        raise ConfigError("evaluate: no test feature files found; run featurize first")
    write_json(run.writing(run.path("eval", "summary.json")), {"model_kind": model.kind, "test_sets": summary})
    run.extra["summary"] = summary


def _write_predictions(path, ids, lons, lats, p, bands) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "lon", "lat", "probability", "risk_band"])
        for row in zip(ids, lons, lats, p, bands):
            w.writerow([int(row[0]), repr(float(row[1])), repr(float(row[2])), repr(float(row[3])), int(row[4])])


def stage_predict(run: Run, points_path=None) -> None:
    model_path = run.path("model", "model.json")
    run.reading(model_path)
    model = load_model(model_path)
    train = _load_features(run, "train")
    thresholds = run.config["riskmap"]["thresholds"]
    if points_path is None:
        targets = [(f"test_{n}", _load_features(run, f"test_{n}")) for n in _test_names(run)
                   if _feature_paths(run, f"test_{n}")[0].is_file()]
    else:
        catalog = _catalog(run)
        run.reading(points_path)
        layers = prepare_layers(catalog, train.schema, run.config["features"]["densify_lines_m"])
        samples = read_samples_csv(points_path, run.config["seed"])
        targets = [(Path(points_path).stem, _as_eval_matrix(train, build_matrix(samples, layers, train.schema)))]
    for name, m in targets:
        p = _probabilities(model, train, m, model.config.gcnn_k)
        rmap = build_risk_map(m.lons, m.lats, p, thresholds)
        _write_predictions(run.writing(run.path("predictions", f"{name}.csv")), m.ids, m.lons, m.lats, p, rmap.bands)


def stage_riskmap(run: Run) -> None:
    cfg, r = run.config, run.config["riskmap"]
    catalog = _catalog(run)
    model_path = run.path("model", "model.json")
    run.reading(model_path)
    model = load_model(model_path)
    train = _load_features(run, "train")
    if r["region"]:
        run.reading(r["region"])
        region = _region(r["region"], r["region_name"])
    else:
        region = parse_geojson_layer(catalog.require(["border"])["border"].path, "polygon")[0]
    hazards = parse_geojson_layer(catalog.require(["hazard"])["hazard"].path, "polygon")
    grid = _renumber(sample_evaluation_grid(region, float(r["grid_spacing_m"]), hazards))
    if not len(grid):
        raise DataError("riskmap: the grid has no points inside the region")
    layers = prepare_layers(catalog, train.schema, cfg["features"]["densify_lines_m"])
    m = _as_eval_matrix(train, build_matrix(grid, layers, train.schema))
    p = _probabilities(model, train, m, model.config.gcnn_k)
    rmap = build_risk_map(m.lons, m.lats, p, r["thresholds"],
                          {"model_kind": model.kind, "schema": model.schema_fingerprint})
    export_risk_geojson(rmap, run.writing(run.path("riskmap", "risk.geojson")))
    summary = band_summary(rmap)
    write_summary_csv(run.writing(run.path("riskmap", "summary.csv")), summary)
    doc = {"n_points": len(rmap), "bands_percent": summary, "hazard_share": float(m.labels.mean())}
    if 0 < m.labels.sum() < len(m.labels):
        report = evaluate(m.labels, p, float(cfg["evaluate"]["threshold"]))
        doc.update(macro_f1=report.macro_f1, auc=report.auc)
    write_json(run.writing(run.path("riskmap", "grid_report.json")), doc)
    run.extra["bands_percent"] = summary


def stage_report(run: Run) -> None:
    train = _load_features(run, "train")
    R, names = correlation_matrix(train, include_label=True)
    with open(run.writing(run.path("report", "correlation.csv")), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", *names])
        for name, row in zip(names, R):
            w.writerow([name, *(repr(float(v)) for v in row)])
    doc: dict = {"n_train": len(train), "feature_set": train.schema.set_name}
    try:
        doc["vif"] = vif(train.rows(np.ones(len(train), dtype=bool)))
    except DataError as exc:
        doc["vif_error"] = str(exc)
    model_path = run.path("model", "model.json")
    if model_path.is_file():
        run.reading(model_path)
        model = load_model(model_path)
        doc["model_kind"] = model.kind
        if model.kind == "RF":
            doc["feature_importance"] = [[n, v] for n, v in feature_importance(model)]
    summary_path = run.path("eval", "summary.json")
    if summary_path.is_file():
        run.reading(summary_path)
        doc["evaluation"] = json.loads(summary_path.read_text(encoding="utf-8"))["test_sets"]
    bands_path = run.path("riskmap", "grid_report.json")
    if bands_path.is_file():
        run.reading(bands_path)
        doc["riskmap"] = json.loads(bands_path.read_text(encoding="utf-8"))
    write_json(run.writing(run.path("report", "summary.json")), doc)


STAGE_FUNCS = {
    "synth": stage_synth, "sample": stage_sample, "featurize": stage_featurize, "train": stage_train,
    "evaluate": stage_evaluate, "predict": stage_predict, "riskmap": stage_riskmap, "report": stage_report,
}

HELP = {
    "synth": "generate a synthetic world (layers + catalog) at the catalog path",
    "sample": "draw positives, random and hard negatives; write train and test sample CSVs",
    "featurize": "compute feature matrices for the sample CSVs",
    "train": "fit the configured model kind on the training matrix",
    "evaluate": "score every test matrix: metrics JSON and ROC CSV",
    "predict": "probabilities and risk bands for test matrices or a points CSV",
    "riskmap": "predict on a regular grid and export banded GeoJSON plus a band summary",
    "report": "correlations, VIF, RF importances and collected metrics",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deskaid", description="Desk-assessment hazard risk pipeline.")
    parser.add_argument("--version", action="version", version=f"deskaid {__version__}")
    sub = parser.add_subparsers(dest="stage", required=True, metavar="STAGE")
    for stage in STAGES:
        p = sub.add_parser(stage, help=HELP[stage], description=HELP[stage])
        p.add_argument("--config", "-c", help="JSON config file (a run log also works)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry, e.g. model.kind=GBT or sampling.buffers=[50,500]")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")
        if stage == "predict":
            p.add_argument("--points", help="CSV with id,lon,lat,label,strategy,source_polygon_id columns")
    return parser


def _diagnose(exc: BaseException, code: int) -> None:
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = load_config(args.config, args.overrides)
        validate_config(config, args.stage)
        run = Run(args.stage, config, argv, args.force)
        if args.stage == "predict":
            stage_predict(run, args.points)
        else:
            STAGE_FUNCS[args.stage](run)
        run.write_log()
    except ConfigError as exc:
        _diagnose(exc, 2)
        return 2
    except DeskaidError as exc:
        _diagnose(exc, 3)
        return 3
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to exit code 4
        _diagnose(exc, 4)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
