"""Command-line front end.

Every subcommand resolves its settings from, lowest precedence first: the
built-in defaults, a replayed ``--manifest``, a ``--config`` key=value file,
``--set key=value`` pairs and finally explicit flags. The resolved settings,
input hashes and output names are written to ``manifest.json`` in the output
directory; re-running with that manifest reproduces every other output file
byte for byte.

Exit codes
----------
0 success, 1 unexpected error, 2 usage, 3 config, 4 data format or schema,
5 numeric failure, 6 file system error.
"""

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
import warnings
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .benchmarks import FewShotScenario, default_scenario_path, run_scenario
from .config import build_dataclass, coerce, dataclass_keys, kind_for, parse_kv, read_kv
from .data import (LabeledSet, SynthConfig, load_csv, make_synth_config, save_csv,
                   split_labeled, synth_generate)
from .detector import DetectionConfig, detect
from .exceptions import ConfigError, DataFormatError, NumericError, SchemaError, ShapeError
from .gacn import GacnConfig, GacnModels, generate, train_gacn, write_history_csv
from .nn import TrainConfig
from .persistence import load_model, save_model
from .pointwalk import emit_histogram, point_walk
from .seeding import derive_seed
from .sfe import embed, train_embedding

log = logging.getLogger("sfegacn")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_IO = range(7)


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# settings

def _gacn_keys(prefix=""):
    skip = {"target_label", "seed"}
    return {prefix + f.name: (kind_for(f), f.default) for f in fields(GacnConfig)
            if f.name not in skip}


def _flag(key):
    return "--" + key.replace("_", "-")


COMMON = {"seed": (int, 0), "label_column": (str, "label")}

# key -> (kind, default); a default of None with kind in REQUIRED means required
COMMANDS = {
    "embed": {
        "input": (str, None), "apply": ("optional_str", None),
        "embedding_dim": (int, None), "window": (int, 2), "learning_rate": (float, 0.5),
        "batch_size": (int, 32), "epochs": (int, 50), "max_bits": ("optional_int", None),
    },
    "train-gacn": {"input": (str, None), "target": (str, None), **_gacn_keys()},
    "generate": {"model": (str, None), "count": (int, 100)},
    "detect": {
        "labeled": (str, None), "unlabeled": (str, None),
        **{k: (kind_for(f), f.default) for f in fields(DetectionConfig)
           if (k := f.name) not in ("gacn", "seed")},
        **_gacn_keys("gacn."),
    },
    "pointwalk": {"input": (str, None), "window_size": (int, 10),
                  "start": ("optional_int", None)},
    "synth": {
        "classes": (int, 2), "features": (int, 2), "count": (int, 100),
        "separation": (float, 10.0), "spread": (float, 1.0), "overlap": (float, 0.0),
        "distribution": (str, "normal"), "prefix": (str, "c"),
        "label_rate": ("optional_float", None), "holdout": ("strs", ()),
    },
    # an explicit seed replaces the scenario's seed list with that one seed
    "eval": {"scenario": ("optional_str", None), "seed": ("optional_int", None)},
}
REQUIRED = {
    "embed": ("input", "embedding_dim"), "train-gacn": ("input", "target"),
    "generate": ("model",), "detect": ("labeled", "unlabeled"), "pointwalk": ("input",),
    "synth": (), "eval": (),
}
EXIT_CODES = {
    "ok": EXIT_OK, "error": EXIT_ERROR, "usage": EXIT_USAGE, "config": EXIT_CONFIG,
    "data": EXIT_DATA, "numeric": EXIT_NUMERIC, "io": EXIT_IO,
}


def _scenario_spec():
    base = FewShotScenario()
    spec = {}
    for key, value in base.as_dict().items():
        spec[key] = (_kind_of_value(value), value)
    return spec


def _kind_of_value(value):
    if isinstance(value, bool):
        return bool
    if isinstance(value, tuple):
        return "ints"
    if value is None:
        return "optional_str"
    return type(value)


def _to_text(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return str(value)


def _to_json(value):
    if isinstance(value, tuple):
        return list(value)
    if isinstance(value, float) and not math.isfinite(value):
        return _to_text(value)
    return value


def command_spec(command):
    spec = {**COMMON, **COMMANDS[command]}
    if command == "eval":
        spec.update(_scenario_spec())
    return spec


def resolve(command, args):
    """Merge defaults, manifest, config file, ``--set`` pairs and flags."""
    spec = command_spec(command)
    layers = []
    if args.manifest:
        manifest = _read_manifest(args.manifest)
        if manifest.get("subcommand") != command:
            raise ConfigError(f"manifest {args.manifest} records subcommand "
                              f"{manifest.get('subcommand')!r}, not {command!r}")
        layers.append(("manifest", {k: _to_text(v) for k, v in manifest["config"].items()}))
    if command == "eval":
        # the scenario file sits just above the defaults
        scenario = getattr(args, "scenario", None) or _layer_value(layers, "scenario")
        path = scenario if scenario not in (None, "none") else default_scenario_path()
        layers.insert(0, ("scenario", read_kv(path)))
    if args.config:
        layers.append(("config", read_kv(args.config)))
    if args.set:
        text = "\n".join(args.set)
        layers.append(("--set", parse_kv(text, "--set")))
    flags = {}
    for key in spec:
        if "." in key:
            continue
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            flags[key] = _to_text(value)
    layers.append(("flags", flags))

    resolved = {key: default for key, (_, default) in spec.items()}
    for name, layer in layers:
        for key, value in layer.items():
            norm = key.replace("-", "_")
            if norm not in spec:
                raise ConfigError(f"{name}: unknown setting {key!r} for {command}")
            resolved[norm] = coerce(norm, value, spec[norm][0])
    missing = [k for k in REQUIRED[command] if resolved.get(k) is None]
    if missing:
        raise UsageError(f"{command}: missing required " + ", ".join(_flag(k) for k in missing))
    return resolved


def _layer_value(layers, key):
    for _, layer in reversed(layers):
        if key in layer:
            return layer[key]
    return None


def _read_manifest(path):
    try:
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from None
    if not isinstance(manifest, dict) or not isinstance(manifest.get("config"), dict):
        raise ConfigError(f"{path}: manifest lacks a config section")
    return manifest


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _load(path, s, what):
    if path is None:
        raise UsageError(f"missing {what} file")
    return load_csv(path, label_column=s["label_column"], generated_column="generated")


# --------------------------------------------------------------------------
# subcommands; each returns {output name: writer callable}


def cmd_embed(s, out):
    train = _load(s["input"], s, "input")
    cfg = TrainConfig(s["learning_rate"], s["batch_size"], s["epochs"], s["seed"])
    model = train_embedding(train, s["embedding_dim"], s["window"], cfg, s["max_bits"])
    target = train
    if s["apply"]:
        target = _load(s["apply"], s, "apply")
        if list(target.columns) != list(train.columns):
            raise SchemaError(f"apply columns {target.columns} differ from training columns "
                              f"{train.columns}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        embedded = embed(target, model)
    for w in caught:
        log.warning("%s", w.message)
    save_model(model, out / "embedding.sfeg")
    save_csv(embedded, out / "embedded.csv", s["label_column"])
    return ["embedding.sfeg", "embedded.csv"]


def _gacn_config(s, prefix=""):
    settings = {k[len(prefix):]: _to_text(v) for k, v in s.items() if k.startswith(prefix)
                and k[len(prefix):] in dataclass_keys(GacnConfig)}
    return build_dataclass(GacnConfig, settings)


def cmd_train_gacn(s, out):
    data = _load(s["input"], s, "input")
    cfg = _gacn_config(s)
    cfg = replace(cfg, target_label=s["target"], seed=s["seed"])
    models = train_gacn(data.X, data.labels, cfg)
    save_model(models, out / "gacn.sfeg")
    write_history_csv(models.history, out / "history.csv")
    return ["gacn.sfeg", "history.csv"]


def cmd_generate(s, out):
    models = load_model(s["model"])
    if not isinstance(models, GacnModels):
        raise DataFormatError(f"{s['model']}: not a GACN model container")
    rows = generate(models, s["count"], seed=s["seed"])
    n = len(rows)
    data = LabeledSet(rows, [models.config.target_label] * n, generated=np.ones(n, dtype=bool))
    save_csv(data, out / "generated.csv", s["label_column"], generated_column="generated")
    return ["generated.csv"]


def cmd_detect(s, out):
    labeled = _load(s["labeled"], s, "labeled")
    unlabeled = _load(s["unlabeled"], s, "unlabeled")
    settings = {k: _to_text(v) for k, v in s.items() if k in dataclass_keys(DetectionConfig)}
    cfg = build_dataclass(DetectionConfig, settings, gacn=_gacn_config(s, "gacn."))
    report = detect(labeled, unlabeled, cfg)
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    (out / "h1.txt").write_text("".join(f"{int(i)}\n" for i in report.H1), encoding="utf-8")
    (out / "h2.txt").write_text("".join(f"{int(i)}\n" for i in report.H2), encoding="utf-8")
    names = ["report.txt", "h1.txt", "h2.txt"]
    if report.metrics is not None:
        lines = ["stage,tpr,fpr,f1,precision,tp,fp,fn,tn"]
        for stage, m in (("first_step", report.baseline_metrics), ("detector", report.metrics)):
            vals = [m.tpr, m.fpr, m.f1, m.precision]
            lines.append(",".join([stage] + ["NA" if v is None else repr(float(v)) for v in vals]
                                  + [str(m.tp), str(m.fp), str(m.fn), str(m.tn)]))
        (out / "metrics.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        names.append("metrics.csv")
    return names


def cmd_pointwalk(s, out):
    data = _load(s["input"], s, "input")
    hist = point_walk(data.X, data.labels, s["window_size"], seed=s["seed"], start=s["start"])
    emit_histogram(hist, out / "histogram.csv", out / "histogram.svg")
    return ["histogram.csv", "histogram.svg"]


def cmd_synth(s, out):
    cfg = make_synth_config(s["classes"], s["features"], s["count"], s["separation"],
                            s["spread"], s["overlap"], s["seed"], s["prefix"], s["distribution"])
    data = synth_generate(SynthConfig(cfg.classes, cfg.overlap, cfg.seed, cfg.distribution))
    save_csv(data, out / "synth.csv", s["label_column"])
    names = ["synth.csv"]
    if s["label_rate"] is not None:
        labeled, unlabeled = split_labeled(data, s["label_rate"], s["holdout"],
                                           derive_seed(s["seed"], "label-split"))
        save_csv(labeled, out / "labeled.csv", s["label_column"])
        save_csv(unlabeled, out / "unlabeled.csv", s["label_column"])
        names += ["labeled.csv", "unlabeled.csv"]
    elif s["holdout"]:
        raise ConfigError("holdout needs label_rate")
    return names


def cmd_eval(s, out):
    settings = {k: _to_text(v) for k, v in s.items() if k not in COMMON and k != "scenario"}
    if s["seed"] is not None:
        settings["seeds"] = str(s["seed"])
    scenario = FewShotScenario.from_settings(settings)
    results = run_scenario(scenario)
    lines = ["variant,f1,f1_per_seed"]
    timing = ["variant,seconds"]
    for r in results:
        per_seed = ";".join(repr(v) for v in r.f1_per_seed)
        lines.append(f"{r.variant},{r.f1!r},{per_seed}")
        timing.append(f"{r.variant},{r.seconds:.3f}")
    (out / "eval.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    # wall-clock lives apart so eval.csv stays byte-identical across runs
    (out / "eval_timing.csv").write_text("\n".join(timing) + "\n", encoding="utf-8")
    return ["eval.csv"], ["eval_timing.csv"]


HANDLERS = {
    "embed": cmd_embed, "train-gacn": cmd_train_gacn, "generate": cmd_generate,
    "detect": cmd_detect, "pointwalk": cmd_pointwalk, "synth": cmd_synth, "eval": cmd_eval,
}

HELP = {
    "embed": "fit a session feature embedding and embed a CSV",
    "train-gacn": "train a GACN for one target label",
    "generate": "sample rows from a trained GACN model",
    "detect": "mine unknown attacks from unlabeled rows",
    "pointwalk": "nearest-neighbour walk label histogram",
    "synth": "write a seeded synthetic Gaussian data set",
    "eval": "compare no / plain-GAN / GACN augmentation on a few-shot scenario",
}


# --------------------------------------------------------------------------
# entry point


def build_parser():
    parser = argparse.ArgumentParser(prog="sfegacn", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    for command, keys in COMMANDS.items():
        p = sub.add_parser(command, help=HELP[command])
        p.add_argument("--out", help="output directory (default: current directory)")
        p.add_argument("--config", help="key=value settings file")
        p.add_argument("--manifest", help="replay the settings of an earlier run")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one setting (repeatable)")
        p.add_argument("--seed", type=int, help="root seed of all random streams")
        p.add_argument("--label-column", help="name of the label column (default: label)")
        for key, (kind, default) in keys.items():
            if "." in key or key == "seed":
                continue
            if kind is bool:
                p.add_argument(_flag(key), action="store_true", default=None)
            else:
                help_text = None if default in (None, ()) else f"default: {_to_text(default)}"
                p.add_argument(_flag(key), help=help_text)
    return parser


def _configure_logging():
    level = os.environ.get("SFEGACN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    command = args.command
    start = time.perf_counter()
    try:
        s = resolve(command, args)
        out = Path(args.out or ".")
        if out.exists() and not out.is_dir():
            raise OSError(f"{out} exists and is not a directory")
        out.mkdir(parents=True, exist_ok=True)
        result = HANDLERS[command](s, out)
        outputs, extra = result if isinstance(result, tuple) else (result, [])
        inputs = {k: {"path": str(s[k]), "sha256": _sha256(s[k])}
                  for k in ("input", "apply", "labeled", "unlabeled", "model", "scenario")
                  if s.get(k)}
        manifest = {
            "tool": "sfegacn", "version": __version__, "subcommand": command,
            "config": {k: _to_json(v) for k, v in sorted(s.items())},
            "seed": s["seed"], "inputs": inputs, "outputs": outputs, "side_outputs": extra,
            "timings": {"total_seconds": round(time.perf_counter() - start, 3)},
        }
        with open(out / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"sfegacn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"sfegacn: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, ShapeError) as exc:
        print(f"sfegacn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"sfegacn: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"sfegacn: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main(argv=None):
    _configure_logging()
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
