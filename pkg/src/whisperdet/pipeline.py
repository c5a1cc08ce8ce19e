"""End-to-end workflow helpers shared by the CLI and the acceptance suite."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .audio_io import Label
from .errors import DataError
from .features.extract import (
    FeatureConfig,
    FeatureMode,
    channel_mean_subtract,
    extract_features,
    read_feature_file,
    write_feature_file,
)
from .inference import InferenceModuleSpec, build_result
from .metrics import ScoredUtterance, evaluate, tune_threshold

log = logging.getLogger(__name__)

FEATURE_SUFFIX = ".wdft"
FEATURE_INDEX = "features.json"


def _extract_one(args):
    manifest, entry, mode, cfg = args
    return extract_features(manifest.load_audio(entry), mode, cfg)


def extract_manifest(manifest, mode=FeatureMode.LFBE, cfg=FeatureConfig(), workers=1):
    """Features for every manifest entry, with CMS applied per (speaker, device).

    Results come back in manifest order regardless of *workers*.
    """
    jobs = [(manifest, e, FeatureMode(mode), cfg) for e in manifest]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            feats = list(pool.map(_extract_one, jobs, chunksize=4))
    else:
        feats = [_extract_one(j) for j in jobs]
    return channel_mean_subtract(feats)


def write_feature_dir(out_dir, features, mode, cfg):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for fm in features:
        write_feature_file(out_dir / f"{fm.utterance_id}{FEATURE_SUFFIX}", fm)
    index = {"mode": FeatureMode(mode).value, "config": cfg.snapshot()}
    (out_dir / FEATURE_INDEX).write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")


def read_feature_index(feature_dir):
    path = Path(feature_dir) / FEATURE_INDEX
    if not path.exists():
        raise DataError(f"{path} not found; run extract first")
    return json.loads(path.read_text())


def load_features(feature_dir, manifest):
    """Feature matrices for each manifest entry, tagged with its metadata."""
    out = []
    for e in manifest:
        path = Path(feature_dir) / f"{e.utterance_id}{FEATURE_SUFFIX}"
        if not path.exists():
            raise DataError(f"missing feature file {path}")
        out.append(read_feature_file(path, utterance_id=e.utterance_id,
                                     speaker_id=e.speaker_id, device_id=e.device_id,
                                     label=e.label))
    return out


@dataclass
class Scored:
    trajectories: list
    scores: list  # ScoredUtterance


def score(model, features, module=InferenceModuleSpec()):
    trajs = [model.posteriors(fm) for fm in features]
    scores = [ScoredUtterance(t.utterance_id, build_result(t, module).score, t.label)
              for t in trajs]
    return Scored(trajs, scores)


def rescore(trajs, module):
    return [ScoredUtterance(t.utterance_id, build_result(t, module).score, t.label)
            for t in trajs]


def negatives(scored):
    return [u.score for u in scored if Label(u.label) is Label.NORMAL]


def tune_and_evaluate(trajs, module, target_fpr, tune_on=None, model_name=""):
    """Tune on the normal-labelled utterances of *tune_on* (default: *trajs*), then evaluate."""
    scored = rescore(trajs, module)
    tune_scores = rescore(tune_on, module) if tune_on is not None else scored
    op = tune_threshold(negatives(tune_scores), target_fpr)
    return evaluate(scored, op, trajs, module.name, model_name)
