"""Frame accuracy, utterance recall / FPR / F1, and operating-point tuning.

Verdicts use ``score >= threshold -> whisper`` everywhere, including the
fixed 0.5 threshold of frame accuracy.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np

from .audio_io import Label
from .errors import EmptySet

FRAME_THRESHOLD = 0.5


def _is_whisper(label):
    return Label(label) is Label.WHISPER


def frame_accuracy(trajs):
    """Micro-averaged frame accuracy over labelled posterior trajectories."""
    hits = total = 0
    for tr in trajs:
        p = np.asarray(tr.p_whisper)
        hits += int(((p >= FRAME_THRESHOLD) == _is_whisper(tr.label)).sum())
        total += p.size
    if total == 0:
        raise EmptySet("no frames to score")
    return hits / total


@dataclass
class OperatingPoint:
    threshold: float
    target_fpr: float
    achieved_fpr: float
    tuned_on: str = ""


def tune_threshold(negative_scores, target_fpr, tuned_on=""):
    """Smallest threshold whose false-positive rate on the negatives is <= target.

    Candidates are 0, every observed score, and the next float above the
    largest score (which admits no false positives).
    """
    s = np.sort(np.asarray(negative_scores, dtype=np.float64))
    if s.size == 0:
        raise EmptySet("need at least one negative score")
    if not 0 <= target_fpr <= 1:
        raise ValueError("target_fpr must lie in [0, 1]")
    candidates = np.concatenate([[0.0], np.unique(s), [np.nextafter(s[-1], np.inf)]])
    # count of scores >= t for each candidate t
    fp = s.size - np.searchsorted(s, candidates, side="left")
    ok = fp / s.size <= target_fpr
    thr = float(candidates[np.argmax(ok)])
    achieved = float(np.count_nonzero(s >= thr) / s.size)
    return OperatingPoint(thr, float(target_fpr), achieved, tuned_on)


@dataclass
class ScoredUtterance:
    utterance_id: str
    score: float
    label: Label


@dataclass
class EvalReport:
    frame_accuracy: float | None
    recall: float
    fpr: float
    precision: float
    f1: float
    counts: dict
    verdicts: list
    operating_point: OperatingPoint
    inference_module: str = ""
    model: str = ""

    def to_dict(self):
        """Plain dict; undefined (NaN) ratios become ``None``."""
        return _nan_to_none(asdict(self))

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _nan_to_none(obj):
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    if isinstance(obj, float) and math.isnan(obj):
        return None
    return obj


def _ratio(num, den):
    return num / den if den else float("nan")


def confusion(scores, labels, threshold):
    pred = np.asarray(scores, dtype=np.float64) >= threshold
    pos = np.array([_is_whisper(lb) for lb in labels], dtype=bool)
    return {
        "tp": int(np.count_nonzero(pred & pos)),
        "fp": int(np.count_nonzero(pred & ~pos)),
        "tn": int(np.count_nonzero(~pred & ~pos)),
        "fn": int(np.count_nonzero(~pred & pos)),
    }


def f1_score(tp, fp, fn):
    p = _ratio(tp, tp + fp)
    r = _ratio(tp, tp + fn)
    if math.isnan(p) or math.isnan(r) or p + r == 0:
        return 0.0
    return 2 * p * r / (p + r)


def evaluate(scored, op, trajs=None, inference_module="", model=""):
    """Utterance-level report at ``op.threshold`` over all *scored* utterances.

    *scored* may pool several test sets; *trajs*, when given, adds pooled
    frame accuracy.
    """
    if isinstance(op, (int, float)):
        op = OperatingPoint(float(op), float("nan"), float("nan"))
    scored = list(scored)
    c = confusion([u.score for u in scored], [u.label for u in scored], op.threshold)
    verdicts = [
        {"utterance_id": u.utterance_id, "label": Label(u.label).value, "score": float(u.score),
         "verdict": (Label.WHISPER if u.score >= op.threshold else Label.NORMAL).value}
        for u in scored
    ]
    return EvalReport(
        frame_accuracy=frame_accuracy(trajs) if trajs else None,
        recall=_ratio(c["tp"], c["tp"] + c["fn"]),
        fpr=_ratio(c["fp"], c["fp"] + c["tn"]),
        precision=_ratio(c["tp"], c["tp"] + c["fp"]),
        f1=f1_score(c["tp"], c["fp"], c["fn"]),
        counts=c,
        verdicts=verdicts,
        operating_point=op,
        inference_module=str(inference_module),
        model=model,
    )


def report_schema():
    """JSON Schema for :meth:`EvalReport.to_dict` output."""
    text = resources.files("whisperdet").joinpath("report_schema.json").read_text("utf-8")
    return json.loads(text)


# -- posterior dumps ---------------------------------------------------------------

def posterior_dump(traj, path):
    """CSV with header ``frame_index,p_whisper`` and one row per frame."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_index", "p_whisper"])
        for i, p in enumerate(np.asarray(traj.p_whisper)):
            w.writerow([i, f"{float(p):.9g}"])


def read_posterior_dump(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["p_whisper"]) for r in rows])


def comparison_grid(rows):
    """Plain-text table of ``(name, EvalReport)`` pairs, one row per entry."""
    head = f"{'result builder':<28} {'frame acc':>9} {'FPR':>8} {'recall':>8} {'F1':>8} {'thr':>10}"
    lines = [head, "-" * len(head)]
    for name, r in rows:
        fa = "-" if r.frame_accuracy is None else f"{100 * r.frame_accuracy:8.2f}%"
        lines.append(f"{name:<28} {fa:>9} {100 * r.fpr:7.2f}% {100 * r.recall:7.2f}% "
                     f"{100 * r.f1:7.2f}% {r.operating_point.threshold:10.4g}")
    return "\n".join(lines)

