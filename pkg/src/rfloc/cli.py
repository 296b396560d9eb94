"""Command-line interface.

Verbs: gen-synth, train, adapt, eval, heatmap, cv, replay. Every command
writes a run manifest (command, fully resolved config, input hashes,
output paths) and embeds the manifest's run id in each artifact it
produces; `replay` re-executes a manifest and reproduces the artifacts
byte for byte.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .artifact import load_model, save_model
from .configio import (
    dataclass_to_kv,
    kv_to_dataclass,
    parse_pair_tuple,
    read_kv,
    write_kv,
)
from .dann import DannConfig, run_dann
from .data import load_csv, write_csv
from .errors import ConfigError, DataError, NumericalError, RflocError, UsageError
from .evalmetrics import (
    METRIC_NAMES,
    aggregate_runs,
    compute_heatmap,
    compute_metrics,
    cross_validate,
    write_heatmap_csv,
    write_heatmap_pgm,
)
from .localizer import TrainConfig, finetune_oracle, predict, train_source
from .meanteacher import MeanTeacherConfig, adapt
from .shot import ShotConfig, run_shot
from .synthetic import SynthConfig, generate_synthetic

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

ADAPT_METHODS = ("mtloc", "mtloc-conf", "dann", "shot", "oracle")
SOURCE_FREE_METHODS = frozenset({"mtloc", "mtloc-conf", "shot"})


# ---------------------------------------------------------------- scenario

@dataclass
class SynthScenario:
    """Source/target pair sharing a room but differing in receiver layout
    (and optionally in shadowing), which is what creates the domain shift."""

    room: tuple[float, float] = (10.0, 10.0)
    tx: tuple[float, float] = (5.0, 5.0)
    source_rx: tuple = ((5.0, 1.0), (0.5, 6.0), (5.0, 9.5), (9.5, 6.2))
    target_rx: tuple = ((1.5, 1.5), (1.5, 8.5), (8.5, 8.5), (8.5, 1.5))
    path_loss_exponent: float = 2.0
    ref_power_dbm: float = -30.0
    source_shadowing_std_db: float = 0.5
    target_shadowing_std_db: float = 3.0
    pol_gain_db: tuple[float, float] = (0.0, -1.5)
    line_spacing: float = 1.0
    speed: float = 0.28
    sample_interval: float = 0.5
    seed: int = 0

    def source_config(self) -> SynthConfig:
        return SynthConfig(
            room=self.room,
            tx=self.tx,
            rx=self.source_rx,
            path_loss_exponent=self.path_loss_exponent,
            ref_power_dbm=self.ref_power_dbm,
            shadowing_std_db=self.source_shadowing_std_db,
            pol_gain_db=self.pol_gain_db,
            line_spacing=self.line_spacing,
            speed=self.speed,
            sample_interval=self.sample_interval,
            seed=self.seed,
            name="source",
        )

    def target_config(self) -> SynthConfig:
        return SynthConfig(
            room=self.room,
            tx=self.tx,
            rx=self.target_rx,
            path_loss_exponent=self.path_loss_exponent,
            ref_power_dbm=self.ref_power_dbm,
            shadowing_std_db=self.target_shadowing_std_db,
            pol_gain_db=self.pol_gain_db,
            line_spacing=self.line_spacing,
            speed=self.speed,
            sample_interval=self.sample_interval,
            seed=self.seed + 1,
            name="target",
        )


# ---------------------------------------------------------------- manifests

def _hash_file(path) -> str:
    h = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    except OSError as e:
        raise DataError(f"cannot read input {path}: {e}") from e
    return h.hexdigest()


def _make_run_id(command: str, config_kv: dict, input_hashes: dict, output_names: list) -> str:
    blob = json.dumps(
        {
            "command": command,
            "config": config_kv,
            "inputs": input_hashes,
            "outputs": sorted(output_names),
        },
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _write_manifest(
    path, command, run_id, config_kv, inputs, input_hashes, outputs, wall_time
) -> None:
    kv = {
        "command": command,
        "run_id": run_id,
        "version": __version__,
        "wall_time_s": f"{wall_time:.3f}",
    }
    for key, value in config_kv.items():
        kv[f"config.{key}"] = value
    for name, p in inputs.items():
        kv[f"input.{name}.path"] = str(p)
        kv[f"input.{name}.sha256"] = input_hashes[name]
    for name, p in outputs.items():
        kv[f"output.{name}"] = str(p)
    write_kv(path, kv, header="run manifest")


def read_manifest(path) -> dict:
    kv = read_kv(path)
    for required in ("command", "run_id"):
        if required not in kv:
            raise DataError(f"{path}: manifest is missing {required!r}")
    config_kv, inputs, hashes, outputs = {}, {}, {}, {}
    for key, value in kv.items():
        if key.startswith("config."):
            config_kv[key[len("config."):]] = value
        elif key.startswith("input.") and key.endswith(".path"):
            inputs[key[len("input."):-len(".path")]] = value
        elif key.startswith("input.") and key.endswith(".sha256"):
            hashes[key[len("input."):-len(".sha256")]] = value
        elif key.startswith("output."):
            outputs[key[len("output."):]] = value
    return {
        "command": kv["command"],
        "run_id": kv["run_id"],
        "config": config_kv,
        "inputs": inputs,
        "hashes": hashes,
        "outputs": outputs,
    }


def _run_command(command, config_kv, inputs, outputs, manifest_path) -> None:
    start = time.perf_counter()
    input_hashes = {name: _hash_file(p) for name, p in inputs.items()}
    run_id = _make_run_id(
        command, config_kv, input_hashes, [Path(p).name for p in outputs.values()]
    )
    _EXECUTORS[command](config_kv, inputs, outputs, run_id)
    wall = time.perf_counter() - start
    _write_manifest(
        manifest_path, command, run_id, config_kv, inputs, input_hashes, outputs, wall
    )
    for p in outputs.values():
        print(f"wrote {p}")
    print(f"manifest {manifest_path} (run {run_id})")


# ---------------------------------------------------------------- executors
# Each executor is a pure function of (config snapshot, inputs, outputs);
# replaying the same snapshot reproduces the artifacts byte for byte.

def _exec_gen_synth(config_kv, inputs, outputs, run_id) -> None:
    scenario = kv_to_dataclass(SynthScenario, config_kv)
    write_csv(generate_synthetic(scenario.source_config()), outputs["source_csv"], run_id=run_id)
    write_csv(generate_synthetic(scenario.target_config()), outputs["target_csv"], run_id=run_id)


def _exec_train(config_kv, inputs, outputs, run_id) -> None:
    cfg = kv_to_dataclass(TrainConfig, config_kv)
    source = load_csv(inputs["source_csv"])
    if not source.labeled:
        raise DataError("training data has no x,y label columns")
    model = train_source(source, cfg)
    model.meta["run_id"] = run_id
    save_model(model, outputs["model"])


def _write_diag_csv(path, header: str, rows, run_id: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"# run: {run_id}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join("" if v is None else repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def _exec_adapt(config_kv, inputs, outputs, run_id) -> None:
    method = config_kv.get("method")
    if method not in ADAPT_METHODS:
        raise ConfigError(f"unknown adaptation method {method!r}")
    method_kv = {k: v for k, v in config_kv.items() if k != "method"}
    model = load_model(inputs["model"])
    target = load_csv(inputs["target_csv"])
    diag_header, diag_rows = None, []
    if method in ("mtloc", "mtloc-conf"):
        cfg = kv_to_dataclass(MeanTeacherConfig, method_kv)
        adapted, diags = adapt(model, target.without_labels(), cfg)
        diag_header = "epoch,kd_loss,n_uncertain,t_x,t_y"
        diag_rows = [(d.epoch, d.kd_loss, d.n_uncertain, d.t_x, d.t_y) for d in diags]
    elif method == "dann":
        cfg = kv_to_dataclass(DannConfig, method_kv)
        source = load_csv(inputs["source_csv"])
        if not source.labeled:
            raise DataError("adversarial adaptation needs labeled source data")
        adapted, diags = run_dann(model, source, target.without_labels(), cfg)
        diag_header = "epoch,reg_loss,disc_loss,feat_loss"
        diag_rows = [(d.epoch, d.reg_loss, d.disc_loss, d.feat_loss) for d in diags]
    elif method == "shot":
        cfg = kv_to_dataclass(ShotConfig, method_kv)
        adapted, diags = run_shot(model, target.without_labels(), cfg)
        diag_header = "epoch,cons,teach,stat,coral,total"
        diag_rows = [(d.epoch, d.cons, d.teach, d.stat, d.coral, d.total) for d in diags]
    else:  # oracle
        cfg = kv_to_dataclass(TrainConfig, method_kv)
        if not target.labeled:
            raise DataError("oracle fine-tuning requires x,y labels in the target CSV")
        adapted = finetune_oracle(model, target, cfg)
    adapted.meta["run_id"] = run_id
    save_model(adapted, outputs["model"])
    if "diagnostics" in outputs:
        if diag_header is None:
            _write_diag_csv(outputs["diagnostics"], "epoch", [], run_id)
        else:
            _write_diag_csv(outputs["diagnostics"], diag_header, diag_rows, run_id)


def _exec_eval(config_kv, inputs, outputs, run_id) -> None:
    runs = int(config_kv.get("runs", "1"))
    if runs < 1:
        raise ConfigError("runs must be at least 1")
    data = load_csv(inputs["csv"])
    if not data.labeled:
        raise DataError("evaluation requires a labeled CSV")
    model_keys = sorted(k for k in inputs if k.startswith("model"))
    reports = []
    for key in model_keys:
        model = load_model(inputs[key])
        reports.append(compute_metrics(predict(model, data), data.labels))
    if len(reports) == 1 and runs > 1:
        reports = reports * runs
    report = aggregate_runs(reports)
    with open(outputs["report"], "w") as fh:
        fh.write(f"# run: {run_id}\n")
        run_cols = ",".join(f"run_{i + 1}" for i in range(report.n_runs))
        fh.write(f"metric,mean,std,{run_cols}\n")
        for m in METRIC_NAMES:
            vals = ",".join(repr(v) for v in report.per_run[m])
            fh.write(f"{m},{report.value(m)!r},{report.std[m]!r},{vals}\n")
    print(f"{'metric':<8}{'mean':>12}{'std':>12}   (n_runs={report.n_runs})")
    for m in METRIC_NAMES:
        print(f"{m:<8}{report.value(m):>12.4f}{report.std[m]:>12.4f}")


def _exec_heatmap(config_kv, inputs, outputs, run_id) -> None:
    cell = float(config_kv.get("cell", "1.0"))
    receivers = parse_pair_tuple(config_kv["receivers"]) if config_kv.get("receivers") else None
    data = load_csv(inputs["csv"])
    if not data.labeled:
        raise DataError("heatmaps require a labeled CSV")
    model = load_model(inputs["model"])
    grid = compute_heatmap(predict(model, data), data.labels, cell=cell)
    write_heatmap_csv(grid, outputs["grid_csv"], receivers=receivers, run_id=run_id)
    write_heatmap_pgm(grid, outputs["pgm"], outputs["scale"])


def _parse_grid(text: str) -> list[dict]:
    axes = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        key, sep, values = part.partition("=")
        if not sep or not values.strip():
            raise ConfigError(f"grid axis {part!r} is not of the form key=v1,v2,...")
        axes.append((key.strip(), [v.strip() for v in values.split(",")]))
    if not axes:
        raise ConfigError("empty hyperparameter grid")
    keys = [k for k, _ in axes]
    return [dict(zip(keys, combo)) for combo in itertools.product(*(v for _, v in axes))]


def _exec_cv(config_kv, inputs, outputs, run_id) -> None:
    method = config_kv.get("method")
    if method not in ("mtloc", "mtloc-conf"):
        raise ConfigError("fold selection supports the mtloc and mtloc-conf methods")
    n_folds = int(config_kv.get("folds", "5"))
    fold_seed = int(config_kv.get("fold_seed", "0"))
    grid_text = config_kv.get("grid", "")
    base_kv = {
        k: v
        for k, v in config_kv.items()
        if k not in ("method", "folds", "fold_seed", "grid")
    }
    grid = _parse_grid(grid_text)
    vary_keys = sorted(grid[0])
    configs = [{**base_kv, **entry} for entry in grid]
    model = load_model(inputs["model"])
    target = load_csv(inputs["target_csv"])
    if not target.labeled:
        raise DataError("fold selection requires a labeled target CSV")

    def recipe(train, val, config):
        cfg = kv_to_dataclass(MeanTeacherConfig, config)
        adapted, _ = adapt(model, train.without_labels(), cfg)
        return predict(adapted, val)

    best_config, results = cross_validate(target, recipe, configs, n_folds=n_folds, seed=fold_seed)
    with open(outputs["table"], "w") as fh:
        fh.write(f"# run: {run_id}\n")
        fh.write(",".join(vary_keys) + ",val_mae_d,best\n")
        for r in results:
            is_best = all(r[k] == best_config[k] for k in vary_keys)
            fh.write(
                ",".join(str(r[k]) for k in vary_keys)
                + f",{r['val_mae_d']!r},{int(is_best)}\n"
            )
    best_desc = ", ".join(f"{k}={best_config[k]}" for k in vary_keys)
    print(f"best config: {best_desc}")


_EXECUTORS = {
    "gen-synth": _exec_gen_synth,
    "train": _exec_train,
    "adapt": _exec_adapt,
    "eval": _exec_eval,
    "heatmap": _exec_heatmap,
    "cv": _exec_cv,
}


# ---------------------------------------------------------------- arg parsing

def _merge_config(defaults_kv: dict, config_path, set_items) -> dict:
    kv = dict(defaults_kv)

    def apply(key: str, value: str, origin: str) -> None:
        if key not in kv:
            raise ConfigError(f"{origin}: unknown config key {key!r}")
        kv[key] = value

    if config_path:
        for key, value in read_kv(config_path).items():
            apply(key, value, str(config_path))
    for item in set_items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        apply(key.strip(), value.strip(), "--set")
    return kv


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rfloc",
        description="Source-free domain adaptation for RF indoor localization.",
    )
    p.add_argument("--version", action="version", version=f"rfloc {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synth", help="generate a synthetic source/target CSV pair")
    g.add_argument("--config", help="scenario config file (key = value)")
    g.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    g.add_argument("--out-dir", required=True, help="directory for source.csv and target.csv")

    t = sub.add_parser("train", help="train the localizer on labeled source data")
    t.add_argument("--source-csv", required=True)
    t.add_argument("--config")
    t.add_argument("--set", action="append", metavar="KEY=VALUE")
    t.add_argument("--out", required=True, help="model artifact path")

    a = sub.add_parser("adapt", help="adapt a trained model to a target CSV")
    a.add_argument("--method", required=True, choices=ADAPT_METHODS)
    a.add_argument("--model", required=True, help="source model artifact")
    a.add_argument("--target-csv", required=True)
    a.add_argument("--source-csv", help="labeled source CSV (dann only)")
    a.add_argument("--config")
    a.add_argument("--set", action="append", metavar="KEY=VALUE")
    a.add_argument("--out", required=True, help="adapted model artifact path")
    a.add_argument("--diagnostics", help="per-epoch diagnostics CSV path")

    e = sub.add_parser("eval", help="evaluate model(s) on a labeled CSV")
    e.add_argument("--model", required=True, nargs="+", help="one or more model artifacts")
    e.add_argument("--csv", required=True, help="labeled CSV")
    e.add_argument("--runs", type=int, default=1, help="replicate a single-model run n times")
    e.add_argument("--out-report", required=True)

    h = sub.add_parser("heatmap", help="per-cell mean distance error by true location")
    h.add_argument("--model", required=True)
    h.add_argument("--csv", required=True, help="labeled CSV")
    h.add_argument("--cell", type=float, default=1.0, help="cell size in meters")
    h.add_argument("--receivers", default="", help='annotate receiver positions "x,y;x,y;..."')
    h.add_argument("--out-prefix", required=True, help="writes <prefix>.csv/.pgm/.scale.txt")

    c = sub.add_parser("cv", help="k-fold hyperparameter selection for mean-teacher adaptation")
    c.add_argument("--method", default="mtloc-conf", choices=("mtloc", "mtloc-conf"))
    c.add_argument("--model", required=True)
    c.add_argument("--target-csv", required=True, help="labeled target CSV")
    c.add_argument("--grid", required=True, help='e.g. "alpha=0.7,0.75,0.8,0.9;k=1,2,3,4"')
    c.add_argument("--folds", type=int, default=5)
    c.add_argument("--fold-seed", type=int, default=0)
    c.add_argument("--config")
    c.add_argument("--set", action="append", metavar="KEY=VALUE")
    c.add_argument("--out", required=True, help="per-config results table CSV")

    r = sub.add_parser("replay", help="re-run a recorded manifest")
    r.add_argument("--manifest", required=True)
    r.add_argument("--out-dir", help="redirect outputs into this directory")
    return p


_ADAPT_DEFAULTS = {
    "mtloc": lambda: MeanTeacherConfig(alpha=0.7, confidence=False),
    "mtloc-conf": lambda: MeanTeacherConfig(alpha=0.8, confidence=True),
    "dann": DannConfig,
    "shot": ShotConfig,
    "oracle": TrainConfig,
}


def _dispatch(args) -> int:
    if args.command == "gen-synth":
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        config_kv = _merge_config(dataclass_to_kv(SynthScenario()), args.config, args.set)
        kv_to_dataclass(SynthScenario, config_kv)  # validate early
        outputs = {
            "source_csv": str(out_dir / "source.csv"),
            "target_csv": str(out_dir / "target.csv"),
        }
        _run_command("gen-synth", config_kv, {}, outputs, out_dir / "manifest.txt")

    elif args.command == "train":
        config_kv = _merge_config(dataclass_to_kv(TrainConfig()), args.config, args.set)
        kv_to_dataclass(TrainConfig, config_kv)
        inputs = {"source_csv": args.source_csv}
        outputs = {"model": args.out}
        _run_command("train", config_kv, inputs, outputs, args.out + ".manifest")

    elif args.command == "adapt":
        defaults = _ADAPT_DEFAULTS[args.method]()
        config_kv = _merge_config(dataclass_to_kv(defaults), args.config, args.set)
        kv_to_dataclass(type(defaults), config_kv)
        config_kv["method"] = args.method
        inputs = {"model": args.model, "target_csv": args.target_csv}
        if args.method == "dann":
            if not args.source_csv:
                raise UsageError(
                    "method 'dann' requires access to source data: pass --source-csv"
                )
            inputs["source_csv"] = args.source_csv
        elif args.source_csv:
            # Source-free methods never read source data, even if offered.
            log.warning("method %r is source-free; ignoring --source-csv", args.method)
        outputs = {"model": args.out}
        if args.diagnostics:
            outputs["diagnostics"] = args.diagnostics
        _run_command("adapt", config_kv, inputs, outputs, args.out + ".manifest")

    elif args.command == "eval":
        config_kv = {"runs": str(args.runs)}
        inputs = {"csv": args.csv}
        for i, m in enumerate(args.model):
            inputs[f"model{i:03d}"] = m
        outputs = {"report": args.out_report}
        _run_command("eval", config_kv, inputs, outputs, args.out_report + ".manifest")

    elif args.command == "heatmap":
        if args.receivers:
            parse_pair_tuple(args.receivers)  # validate early
        config_kv = {"cell": repr(float(args.cell)), "receivers": args.receivers}
        inputs = {"model": args.model, "csv": args.csv}
        outputs = {
            "grid_csv": args.out_prefix + ".csv",
            "pgm": args.out_prefix + ".pgm",
            "scale": args.out_prefix + ".scale.txt",
        }
        _run_command("heatmap", config_kv, inputs, outputs, args.out_prefix + ".manifest")

    elif args.command == "cv":
        defaults = _ADAPT_DEFAULTS[args.method]()
        config_kv = _merge_config(dataclass_to_kv(defaults), args.config, args.set)
        base = kv_to_dataclass(MeanTeacherConfig, config_kv)
        for entry in _parse_grid(args.grid):
            kv_to_dataclass(MeanTeacherConfig, {**dataclass_to_kv(base), **entry})
        config_kv.update(
            {
                "method": args.method,
                "grid": args.grid,
                "folds": str(args.folds),
                "fold_seed": str(args.fold_seed),
            }
        )
        inputs = {"model": args.model, "target_csv": args.target_csv}
        outputs = {"table": args.out}
        _run_command("cv", config_kv, inputs, outputs, args.out + ".manifest")

    elif args.command == "replay":
        man = read_manifest(args.manifest)
        if man["command"] not in _EXECUTORS:
            raise DataError(f"manifest records unknown command {man['command']!r}")
        for name, path in man["inputs"].items():
            recorded = man["hashes"].get(name)
            if recorded and _hash_file(path) != recorded:
                raise DataError(
                    f"input {name!r} ({path}) changed since the recorded run; refusing to replay"
                )
        outputs = man["outputs"]
        manifest_path = Path(args.manifest)
        if args.out_dir:
            out_dir = Path(args.out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            outputs = {name: str(out_dir / Path(p).name) for name, p in outputs.items()}
            manifest_path = out_dir / Path(args.manifest).name
        _run_command(man["command"], man["config"], man["inputs"], outputs, manifest_path)

    return EXIT_OK


def main(argv=None) -> int:
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    try:
        return _dispatch(args)
    except (ConfigError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except RflocError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
