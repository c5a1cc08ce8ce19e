import json

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from whisperdet.audio_io import Label
from whisperdet.errors import EmptySet
from whisperdet.metrics import (
    OperatingPoint,
    ScoredUtterance,
    comparison_grid,
    evaluate,
    f1_score,
    frame_accuracy,
    posterior_dump,
    read_posterior_dump,
    report_schema,
    tune_threshold,
)
from whisperdet.neural import PosteriorTrajectory

W, N = Label.WHISPER, Label.NORMAL


def _scored(scores, labels):
    return [ScoredUtterance(f"u{i}", float(s), lb) for i, (s, lb) in enumerate(zip(scores, labels))]


def _random_set(rng, n):
    labels = [W if b else N for b in rng.random(n) < 0.5]
    scores = rng.random(n)
    return _scored(scores, labels)


def recount(scored, thr):
    tp = fp = tn = fn = 0
    for u in scored:
        pos = u.score >= thr
        if u.label is W:
            tp, fn = tp + pos, fn + (not pos)
        else:
            fp, tn = fp + pos, tn + (not pos)
    return tp, fp, tn, fn


# -- frame accuracy -------------------------------------------------------------

def test_frame_accuracy_examples():
    assert frame_accuracy([PosteriorTrajectory([0.6, 0.4, 0.7], label=W)]) == pytest.approx(2 / 3)
    assert frame_accuracy([PosteriorTrajectory([0.5] * 5, label=W)]) == 1.0
    assert frame_accuracy([PosteriorTrajectory([0.5] * 5, label=N)]) == 0.0
    with pytest.raises(EmptySet):
        frame_accuracy([])


def test_frame_accuracy_pools_frames():
    a = PosteriorTrajectory([0.9] * 9 + [0.1], label=W)
    b = PosteriorTrajectory([0.9, 0.9], label=N)
    assert frame_accuracy([a, b]) == pytest.approx(9 / 12)


def test_frame_accuracy_count_oracle(rng):
    trajs, hits, total = [], 0, 0
    for i in range(100):
        p = rng.random(100)
        lb = W if i % 3 else N
        trajs.append(PosteriorTrajectory(p, label=lb))
        for v in p:
            hits += (v >= 0.5) == (lb is W)
            total += 1
    assert total == 10_000
    assert frame_accuracy(trajs) == hits / total


# -- threshold tuning ----------------------------------------------------------------

def test_tune_small_sample_floor(rng):
    s = rng.random(10)
    op = tune_threshold(s, 0.001)
    assert op.threshold > s.max()
    assert op.threshold == np.nextafter(s.max(), np.inf)
    assert op.achieved_fpr == 0.0


def test_tune_order_statistics():
    op = tune_threshold([0.1, 0.2, 0.9, 0.95], 0.25)
    assert op.threshold == 0.95 and op.achieved_fpr == 0.25


def test_tune_degenerate_targets():
    assert tune_threshold([0.0] * 5, 0.001).threshold == np.nextafter(0.0, 1.0)
    assert tune_threshold([0.3, 0.6], 1.0).threshold == 0.0
    with pytest.raises(EmptySet):
        tune_threshold([], 0.1)


def test_tune_quantile_oracle():
    s = np.random.default_rng(9).random(10_000)
    op = tune_threshold(s, 0.01)
    assert 0.009 < op.achieved_fpr <= 0.01
    srt = np.sort(s)
    # the 100 largest are allowed, so the threshold is the 100th largest score
    assert op.threshold == srt[-100]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=200), st.floats(0, 1))
def test_tune_property(neg, target):
    op = tune_threshold(neg, target)
    s = np.asarray(neg)
    assert op.achieved_fpr <= target
    assert op.achieved_fpr == np.mean(s >= op.threshold)
    smaller = np.unique(np.r_[0.0, s])
    smaller = smaller[smaller < op.threshold]
    assert all(np.mean(s >= t) > target for t in smaller)


# -- evaluate ------------------------------------------------------------------------

def test_evaluate_perfect():
    r = evaluate(_scored([1, 1, 0, 0], [W, W, N, N]), 0.5)
    assert (r.recall, r.fpr, r.f1) == (1.0, 0.0, 1.0)


def test_evaluate_formula():
    scored = _scored([1] * 97 + [0] * 3 + [1] + [0] * 99, [W] * 100 + [N] * 100)
    r = evaluate(scored, 0.5)
    assert r.counts == {"tp": 97, "fp": 1, "tn": 99, "fn": 3}
    assert r.recall == 0.97 and r.fpr == 0.01
    p = 97 / 98
    assert r.f1 == pytest.approx(2 * p * 0.97 / (p + 0.97))
    assert r.f1 == pytest.approx(0.97980, abs=1e-5)


def test_evaluate_matches_recount_oracle():
    rng = np.random.default_rng(21)
    scored = _random_set(rng, 1000)
    thr = 0.5
    r = evaluate(scored, OperatingPoint(thr, 0.001, 0.0))
    tp, fp, tn, fn = recount(scored, thr)
    assert r.counts == {"tp": tp, "fp": fp, "tn": tn, "fn": fn}
    assert r.recall == tp / (tp + fn)
    assert r.fpr == fp / (fp + tn)
    assert r.precision == tp / (tp + fp)
    p, rc = tp / (tp + fp), tp / (tp + fn)
    assert r.f1 == 2 * p * rc / (p + rc)
    assert [v["verdict"] for v in r.verdicts] == \
        ["whisper" if u.score >= thr else "normal" for u in scored]


def test_evaluate_order_invariant(rng):
    scored = _random_set(rng, 300)
    a = evaluate(scored, 0.4)
    b = evaluate(scored[::-1], 0.4)
    assert (a.counts, a.recall, a.fpr, a.f1) == (b.counts, b.recall, b.fpr, b.f1)


def test_undefined_ratios():
    r = evaluate(_scored([0.2, 0.9], [N, N]), 0.5)
    assert np.isnan(r.recall) and r.f1 == 0.0
    assert r.to_dict()["recall"] is None
    assert f1_score(0, 0, 0) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.booleans()), min_size=2, max_size=100),
       st.floats(0, 1), st.floats(0, 1))
def test_threshold_monotonicity(pairs, t1, t2):
    lo, hi = sorted((t1, t2))
    scored = _scored([p[0] for p in pairs], [W if p[1] else N for p in pairs])
    a, b = evaluate(scored, lo), evaluate(scored, hi)
    assert b.counts["fp"] <= a.counts["fp"]
    assert b.counts["tp"] <= a.counts["tp"]


def test_report_schema_validates(rng):
    scored = _random_set(rng, 40)
    trajs = [PosteriorTrajectory(rng.random(5), u.utterance_id, u.label) for u in scored]
    op = tune_threshold([u.score for u in scored if u.label is N], 0.05, "cv")
    rep = evaluate(scored, op, trajs, "mean", "m")
    doc = json.loads(rep.to_json())
    jsonschema.validate(doc, report_schema())
    doc["extra"] = 1
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(doc, report_schema())
    # undefined ratios serialise as null and still validate
    jsonschema.validate(evaluate(_scored([0.1], [N]), 0.5).to_dict(), report_schema())


# -- dumps ---------------------------------------------------------------------------

def test_posterior_dump(tmp_path):
    p = tmp_path / "t.csv"
    posterior_dump(PosteriorTrajectory([0.1, 0.123456789, 1.0]), p)
    lines = p.read_text().splitlines()
    assert lines[0] == "frame_index,p_whisper" and len(lines) == 4
    np.testing.assert_allclose(read_posterior_dump(p), [0.1, 0.123456789, 1.0], rtol=1e-7)
    posterior_dump(PosteriorTrajectory([]), p)
    assert p.read_text().splitlines() == ["frame_index,p_whisper"]


def test_comparison_grid_rows(rng):
    scored = _random_set(rng, 20)
    rows = [(n, evaluate(scored, 0.5)) for n in ("last-frame", "mean")]
    text = comparison_grid(rows)
    assert len(text.splitlines()) == 4
    assert "last-frame" in text and "mean" in text
