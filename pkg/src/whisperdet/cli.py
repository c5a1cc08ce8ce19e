"""``whisperdet`` command-line entry point.

Subcommands chain: ``synth -> extract -> train -> tune -> eval``, plus
``classify`` for a single WAV file. Every subcommand reads the same JSON
config document (``--config``); individual keys can be overridden with
``--set section.key=value`` and the common ones have dedicated flags.
Log verbosity comes from the ``WHISPERDET_LOG`` environment variable.

Exit codes: 0 ok, 2 config, 3 IO/data, 4 numeric, 5 usage.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .audio_io import Label, Split, decode_wav, load_manifest
from .config import config_to_dict, load_config
from .errors import ConfigError, DataError, UsageError, WhisperDetError
from .features.extract import (
    FeatureConfig,
    FeatureMode,
    channel_mean_subtract,
    extract_features,
    layout_for,
    layout_to_string,
)
from .inference import STUDY_MODULES, build_result, parse_module
from .metrics import OperatingPoint, comparison_grid, evaluate, posterior_dump, tune_threshold
from .neural import ModelBundle, build_model, load_model, save_model, train
from .synth import generate_corpus

log = logging.getLogger("whisperdet")

LOG_ENV = "WHISPERDET_LOG"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- helpers ---------------------------------------------------------------------

def _config(args, extra=()):
    overrides = list(args.set or []) + list(extra)
    return load_config(args.config, overrides)


def _flag_overrides(args, mapping):
    """``--set`` style overrides for the dedicated flags that were given."""
    out = []
    for attr, key in mapping.items():
        v = getattr(args, attr, None)
        if v is not None:
            out.append(f"{key}={json.dumps(v)}")
    return out


def _load_manifests(paths):
    return [load_manifest(p) for p in paths]


def _require_file(path, what):
    if not Path(path).is_file():
        raise DataError(f"{what} {path} not found")


def _feature_config_of(bundle):
    snap = bundle.meta.get("feature_config")
    if snap is None:
        raise DataError("model file has no embedded feature config")
    return FeatureConfig.from_snapshot(snap)


def _check_feature_dir(bundle, feature_dir):
    """Refuse to score features that were computed differently from the training set."""
    index = pipeline.read_feature_index(feature_dir)
    layout = layout_for(FeatureMode(index["mode"]), index["config"]["lfbe"]["num_filters"])
    if tuple(layout) != tuple(bundle.layout):
        raise ConfigError(f"feature layout {layout_to_string(layout)!r} does not match the "
                          f"model's {layout_to_string(bundle.layout)!r}")
    if index["config"] != bundle.meta.get("feature_config"):
        raise ConfigError("feature config in the feature directory differs from the one "
                          "embedded in the model")


def _write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _model_name(path):
    return Path(path).stem


def _trajectory_svg(p, path, title=""):
    """Minimal SVG line plot of one posterior trajectory."""
    w, h, pad = 640, 240, 30
    p = np.asarray(p, dtype=np.float64)
    xs = pad + (w - 2 * pad) * np.arange(p.size) / max(p.size - 1, 1)
    ys = h - pad - (h - 2 * pad) * p
    pts = " ".join(f"{x:.1f},{y:.1f}" for x, y in zip(xs, ys))
    mid = h - pad - (h - 2 * pad) * 0.5
    svg = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">\n'
        f'<rect x="{pad}" y="{pad}" width="{w - 2 * pad}" height="{h - 2 * pad}" '
        f'fill="none" stroke="#999"/>\n'
        f'<line x1="{pad}" y1="{mid:.1f}" x2="{w - pad}" y2="{mid:.1f}" stroke="#ccc" '
        f'stroke-dasharray="4"/>\n'
        f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>\n'
        f'<text x="{pad}" y="{pad - 8}" font-size="12">{title} p(whisper) per frame</text>\n'
        f"</svg>\n"
    )
    Path(path).write_text(svg, encoding="utf-8")


# -- subcommands -----------------------------------------------------------------

def cmd_synth(args):
    extra = _flag_overrides(args, {"n_per_class": "corpus.n_per_class", "seed": "corpus.seed"})
    if args.splits is not None:
        extra.append(f"corpus.split_fractions={json.dumps(args.splits)}")
    cfg = _config(args, extra)
    out = Path(args.out or cfg.paths.corpus)
    try:
        corpus = generate_corpus(out, cfg.corpus)
    except OSError as e:
        raise DataError(f"cannot write corpus: {e}") from None
    for split in Split:
        print(f"{split.value}: {corpus.counts[split]} utterances, "
              f"{len(corpus.speakers[split])} speakers -> {corpus.manifests[split]}")
    return 0


def cmd_extract(args):
    cfg = _config(args, _flag_overrides(args, {"workers": "workers"}))
    mode = FeatureMode(args.mode)
    out = Path(args.out or cfg.paths.features)
    failed = 0
    written = 0
    for mpath in args.manifest:
        manifest = load_manifest(mpath)
        feats = []
        for entry in manifest:
            try:
                feats.append(extract_features(manifest.load_audio(entry), mode, cfg.features))
            except (DataError, OSError) as e:
                failed += 1
                log.error("%s: %s", entry.utterance_id, e)
        feats = channel_mean_subtract(feats) if feats else []
        pipeline.write_feature_dir(out, feats, mode, cfg.features)
        written += len(feats)
    dim = layout_for(mode, cfg.features.lfbe.num_filters)
    print(f"wrote {written} feature files (dim {sum(n for _, n in dim)}) to {out}"
          + (f"; {failed} failed" if failed else ""))
    return DataError.exit_code if failed else 0


def cmd_train(args):
    extra = _flag_overrides(args, {"epochs": "train.epochs", "seed": "train.seed",
                                   "learning_rate": "train.learning_rate"})
    cfg = _config(args, extra)
    feature_dir = Path(args.features or cfg.paths.features)
    index = pipeline.read_feature_index(feature_dir)
    train_set = [f for m in _load_manifests(args.train) for f in pipeline.load_features(feature_dir, m)]
    cv_set = [f for m in _load_manifests(args.cv) for f in pipeline.load_features(feature_dir, m)]
    if not train_set:
        raise DataError("training manifest is empty")
    layout = train_set[0].layout
    model = build_model(args.kind, train_set[0].dim, seed=cfg.train.seed,
                        mlp_hidden=cfg.model.mlp_hidden, lstm_hidden=cfg.model.lstm_hidden,
                        lstm_layers=cfg.model.lstm_layers)
    result = train(model, train_set, cv_set, cfg.train)
    meta = {
        "feature_mode": index["mode"],
        "feature_config": index["config"],
        "config": config_to_dict(cfg),
        "history": [[s.epoch, s.train_loss, s.cv_frame_accuracy, s.learning_rate]
                    for s in result.history],
        "inference": cfg.inference,
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(out, ModelBundle(result.model, layout, None, meta))
    curve = Path(args.loss_curve) if args.loss_curve else out.with_suffix(".loss.csv")
    with open(curve, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "cv_frame_accuracy", "learning_rate"])
        for s in result.history:
            w.writerow([s.epoch, f"{s.train_loss:.9g}", f"{s.cv_frame_accuracy:.9g}",
                        f"{s.learning_rate:.9g}"])
    print(f"saved {args.kind} model to {out} ({len(result.history)} epochs)")
    return 0


def cmd_tune(args):
    extra = _flag_overrides(args, {"target_fpr": "target_fpr", "inference": "inference"})
    cfg = _config(args, extra)
    _require_file(args.model, "model")
    bundle = load_model(args.model)
    feature_dir = Path(args.features or cfg.paths.features)
    _check_feature_dir(bundle, feature_dir)
    manifests = _load_manifests(args.manifest)
    for m in manifests:
        if any(e.label is Label.WHISPER for e in m):
            raise ConfigError("tuning manifest must contain only normal-labelled utterances")
    feats = [f for m in manifests for f in pipeline.load_features(feature_dir, m)]
    module = cfg.inference_spec
    scored = pipeline.score(bundle.model, feats, module).scores
    op = tune_threshold([s.score for s in scored], cfg.target_fpr,
                        tuned_on=",".join(Path(p).name for p in args.manifest))
    bundle.threshold = op.threshold
    bundle.meta["operating_point"] = {"threshold": op.threshold, "target_fpr": op.target_fpr,
                                      "achieved_fpr": op.achieved_fpr, "tuned_on": op.tuned_on}
    bundle.meta["inference"] = module.name
    save_model(args.model, bundle)
    print(f"threshold {op.threshold:.9g} (achieved FPR {op.achieved_fpr:.4g}, "
          f"target {op.target_fpr:.4g}, module {module.name})")
    return 0


def _eval_rows(args, cfg):
    modules = [parse_module(n) for n in args.inference] if args.inference else None
    feature_dir = Path(args.features or cfg.paths.features)
    manifests = _load_manifests(args.manifest)
    tune_manifests = _load_manifests(args.tune_on) if args.tune_on else []
    rows = []
    for mpath in args.model:
        _require_file(mpath, "model")
        bundle = load_model(mpath)
        _check_feature_dir(bundle, feature_dir)
        feats = [f for m in manifests for f in pipeline.load_features(feature_dir, m)]
        trajs = [bundle.model.posteriors(f) for f in feats]
        tune_trajs = None
        if tune_manifests:
            tune_feats = [f for m in tune_manifests for f in pipeline.load_features(feature_dir, m)
                          if f.label is Label.NORMAL]
            tune_trajs = [bundle.model.posteriors(f) for f in tune_feats]
        for module in modules or [parse_module(bundle.meta.get("inference", cfg.inference))]:
            if tune_trajs is not None:
                rep = pipeline.tune_and_evaluate(trajs, module, cfg.target_fpr, tune_trajs,
                                                 _model_name(mpath))
                rep.operating_point.tuned_on = ",".join(Path(p).name for p in args.tune_on)
            else:
                thr = args.threshold if args.threshold is not None else bundle.threshold
                if thr is None:
                    raise UsageError(f"{mpath} has no tuned threshold; pass --threshold "
                                     "or --tune-on")
                op = bundle.meta.get("operating_point") if args.threshold is None else None
                op = (OperatingPoint(**op) if op else
                      OperatingPoint(float(thr), float("nan"), float("nan"), "cli"))
                rep = evaluate(pipeline.rescore(trajs, module), op, trajs, module.name,
                               _model_name(mpath))
            rows.append((_model_name(mpath), module, rep))
        if args.dump_posteriors:
            d = Path(args.dump_posteriors) / _model_name(mpath)
            d.mkdir(parents=True, exist_ok=True)
            for t in trajs:
                posterior_dump(t, d / f"{t.utterance_id}.csv")
    return rows


def cmd_eval(args):
    cfg = _config(args, _flag_overrides(args, {"target_fpr": "target_fpr"}))
    if args.study_modules:
        args.inference = [m.name for m in STUDY_MODULES]
    rows = _eval_rows(args, cfg)
    out = Path(args.report) if args.report else Path(cfg.paths.reports) / "report.json"
    if args.compare or len(rows) > 1:
        grid = {"rows": [{"model": name, "inference_module": mod.name, "report": rep.to_dict()}
                         for name, mod, rep in rows]}
        _write_json(out, grid)
        labelled = [(f"{name}:{mod.name}" if len(args.model) > 1 else mod.name, rep)
                    for name, mod, rep in rows]
        print(comparison_grid(labelled))
    else:
        _, _, rep = rows[0]
        _write_json(out, rep.to_dict())
        print(f"recall {rep.recall:.4f} fpr {rep.fpr:.4f} f1 {rep.f1:.4f} "
              f"frame accuracy {rep.frame_accuracy:.4f}")
    return 0


def cmd_classify(args):
    _require_file(args.model, "model")
    bundle = load_model(args.model)
    threshold = args.threshold if args.threshold is not None else bundle.threshold
    if threshold is None:
        raise UsageError("model has no tuned threshold; pass --threshold")
    fcfg = _feature_config_of(bundle)
    mode = FeatureMode(bundle.meta.get("feature_mode", "lfbe"))
    if tuple(layout_for(mode, fcfg.lfbe.num_filters)) != tuple(bundle.layout):
        raise ConfigError("model layout disagrees with its embedded feature config")
    u = decode_wav(args.wav, utterance_id=Path(args.wav).stem)
    # a lone file is its own (speaker, device) group
    fm = channel_mean_subtract([extract_features(u, mode, fcfg)])[0]
    module = parse_module(args.inference or bundle.meta.get("inference", "mean"))
    traj = bundle.model.posteriors(fm)
    score = build_result(traj, module).score
    label = Label.WHISPER if score >= threshold else Label.NORMAL
    print(json.dumps({"label": label.value, "score": round(score, 9),
                      "threshold": float(threshold)}, sort_keys=True))
    if args.dump_posteriors:
        posterior_dump(traj, args.dump_posteriors)
    if args.plot:
        _trajectory_svg(traj.p_whisper, args.plot, Path(args.wav).name)
    return 0


# -- argument parsing ------------------------------------------------------------

def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("-c", "--config", help="JSON config document")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config key, e.g. train.epochs=5 (repeatable)")

    p = _Parser(prog="whisperdet", description="Whispered-speech detection toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    s.add_argument("--out", help="output directory (default: paths.corpus)")
    s.add_argument("--n-per-class", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--splits", type=float, nargs=3, metavar=("TRAIN", "CV", "TEST"))
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("extract", parents=[common], help="compute feature files")
    s.add_argument("--manifest", action="append", required=True)
    s.add_argument("--mode", choices=[m.value for m in FeatureMode], default="lfbe")
    s.add_argument("--out", help="feature directory (default: paths.features)")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("train", parents=[common], help="train a frame classifier")
    s.add_argument("--kind", choices=["mlp", "lstm"], required=True)
    s.add_argument("--features")
    s.add_argument("--train", action="append", required=True, help="training manifest")
    s.add_argument("--cv", action="append", required=True, help="cross-validation manifest")
    s.add_argument("--out", required=True, help="model file to write")
    s.add_argument("--loss-curve", help="CSV path (default: <out>.loss.csv)")
    s.add_argument("--epochs", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--learning-rate", type=float)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("tune", parents=[common], help="set the operating-point threshold")
    s.add_argument("--model", required=True)
    s.add_argument("--features")
    s.add_argument("--manifest", action="append", required=True,
                   help="manifest of normal-labelled utterances")
    s.add_argument("--target-fpr", type=float)
    s.add_argument("--inference")
    s.set_defaults(func=cmd_tune)

    s = sub.add_parser("eval", parents=[common], help="evaluate on test manifests")
    s.add_argument("--model", action="append", required=True)
    s.add_argument("--features")
    s.add_argument("--manifest", action="append", required=True)
    s.add_argument("--inference", action="append", help="inference module (repeatable)")
    s.add_argument("--study-modules", action="store_true",
                   help="use the four standard result builders")
    s.add_argument("--compare", action="store_true", help="emit a comparison grid")
    s.add_argument("--tune-on", action="append",
                   help="re-tune each row at target_fpr on these manifests' normal utterances")
    s.add_argument("--target-fpr", type=float)
    s.add_argument("--threshold", type=float)
    s.add_argument("--report", help="report JSON path (default: paths.reports/report.json)")
    s.add_argument("--dump-posteriors", metavar="DIR")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("classify", parents=[common], help="classify one WAV file")
    s.add_argument("--model", required=True)
    s.add_argument("wav")
    s.add_argument("--threshold", type=float)
    s.add_argument("--inference")
    s.add_argument("--dump-posteriors", metavar="CSV")
    s.add_argument("--plot", metavar="SVG", help="write the posterior trajectory as SVG")
    s.set_defaults(func=cmd_classify)
    return p


def _setup_logging():
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None):
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except WhisperDetError as e:
        print(f"whisperdet: error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"whisperdet: error: {e}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
