"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``python -m pytest tests/test_acceptance.py -v -s`` or
``python tests/test_acceptance.py``. Criteria 4, 5 and 7 train models and
are marked slow (about four minutes together on one core).
"""

import dataclasses
import json
import math
import time

import numpy as np
import pytest

from conftest import speech_frames, voiced_frame
from test_spectral import dft_power_oracle, filterbank_oracle
from whisperdet.audio_io import Label, Split, load_manifest
from whisperdet.cli import main as cli_main
from whisperdet.features import (
    FeatureMode,
    extract_features,
    layout_for,
    lfbe_values,
    mel_filterbank,
    parseval_weights,
    power_spectrum,
)
from whisperdet.features.engineered import SrhConfig, acmax, hfe, srh, srh_spectrum
from whisperdet.features.extract import channel_mean_subtract
from whisperdet.inference import STUDY_MODULES, InferenceModuleSpec
from whisperdet.metrics import (
    FRAME_THRESHOLD,
    ScoredUtterance,
    evaluate,
    frame_accuracy,
    tune_threshold,
)
from whisperdet.neural import TrainConfig, build_model, gradient_check, train
from whisperdet.neural.models import PosteriorTrajectory
from whisperdet.pipeline import extract_manifest, rescore, score
from whisperdet.synth import (
    CorpusConfig,
    SynthMode,
    generate_corpus,
    generate_utterance,
    plan_corpus,
)

SEED = 2024


def report(capsys, criterion, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# -- 1. numerical core -------------------------------------------------------------

def test_criterion_1_gradient_checks(capsys):
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    errors = {
        "mlp": gradient_check(build_model("mlp", 5, seed=1, mlp_hidden=(6, 5, 4)),
                              rng.standard_normal((7, 5)), Label.WHISPER).max_rel_error,
        "lstm-1": gradient_check(build_model("lstm", 3, seed=2, lstm_hidden=4, lstm_layers=1),
                                 rng.standard_normal((9, 3)), Label.NORMAL).max_rel_error,
        "lstm-2": gradient_check(build_model("lstm", 3, seed=3, lstm_hidden=3, lstm_layers=2),
                                 rng.standard_normal((8, 3)), Label.WHISPER).max_rel_error,
    }
    elapsed = time.perf_counter() - t0
    ok = max(errors.values()) < 1e-4 and elapsed < 30
    detail = ", ".join(f"{k} {v:.2e}" for k, v in errors.items())
    report(capsys, 1, ok, f"max rel error {detail}; {elapsed:.2f} s")


# -- 2. DSP oracles ----------------------------------------------------------------

def test_criterion_2_dsp_oracles(capsys):
    rng = np.random.default_rng(SEED)
    frames = rng.standard_normal((100, 400)) * np.hanning(400)
    fb = filterbank_oracle(64, 512, 16000)
    fb_err = np.max(np.abs(mel_filterbank(64, 512, 16000) - fb))
    want = np.array([np.log(np.maximum(fb @ dft_power_oracle(f, 512), 1e-10)) for f in frames])
    lfbe_err = np.max(np.abs(lfbe_values(frames, 16000) - want))

    x = rng.standard_normal((100, 400))
    energy = np.sum(x ** 2, axis=1)
    parseval = np.max(np.abs(power_spectrum(x, 512) @ parseval_weights(512) - energy) / energy)

    f0s = np.linspace(90, 300, 50)
    voiced = np.array([voiced_frame(f, 1024, seed=i) for i, f in enumerate(f0s)])
    f0_err = np.max(np.abs(srh_spectrum(voiced, SrhConfig()).argmax_hz - f0s))

    ok = fb_err < 1e-9 and lfbe_err < 1e-9 and parseval < 1e-6 and f0_err <= 10
    report(capsys, 2, ok, f"filterbank {fb_err:.1e}, LFBE {lfbe_err:.1e}, Parseval rel "
                          f"{parseval:.1e}, SRH worst |f0 error| {f0_err:.2f} Hz over 50 frames")


# -- 3. engineered-feature separation ----------------------------------------------

def test_criterion_3_feature_separation(capsys):
    n = 1000
    voiced = speech_frames(SynthMode.VOICED, n, seed=SEED, n=1024)
    whisper = speech_frames(SynthMode.WHISPER, n, seed=SEED + 1, n=1024)
    mid = slice(312, 712)
    means = {}
    for name, frames in (("voiced", voiced), ("whisper", whisper)):
        ratio, entropy = hfe(frames[:, mid])
        means[name] = {"srh": srh(frames).mean(), "acmax": acmax(frames[:, mid])[:, 0].mean(),
                       "hfe_ratio": ratio.mean(), "entropy": entropy.mean()}
    v, w = means["voiced"], means["whisper"]
    folds = {"srh": v["srh"] / w["srh"], "acmax": v["acmax"] / w["acmax"],
             "hfe_ratio": w["hfe_ratio"] / v["hfe_ratio"], "entropy": w["entropy"] / v["entropy"]}
    lines = [f"{k}: voiced {v[k]:.4g} whisper {w[k]:.4g} fold {folds[k]:.3f} "
             f"[{'ok' if folds[k] >= 2 else 'below 2'}]" for k in folds]
    ok = all(f >= 2 for f in folds.values())
    report(capsys, 3, ok, "; ".join(lines))


# -- 4 / 5. end-to-end on a synthetic corpus ----------------------------------------

def lfbe_only(fm):
    return dataclasses.replace(fm, values=fm.values[:, fm.block("lfbe")],
                               layout=layout_for(FeatureMode.LFBE))


@pytest.fixture(scope="module")
def desk_study(tmp_path_factory):
    """400-utterance test set and three models trained for 10 epochs each."""
    t0 = time.perf_counter()
    cfg = CorpusConfig(n_per_class=400, split_fractions=(0.4, 0.1, 0.5), seed=SEED)
    corpus = generate_corpus(tmp_path_factory.mktemp("desk"), cfg)
    eng = {s: extract_manifest(load_manifest(corpus.manifests[s]), FeatureMode.LFBE_ENG)
           for s in Split}
    lfb = {s: [lfbe_only(f) for f in v] for s, v in eng.items()}
    models = {}
    for name, kind, feats in (("MLP(LFBE)", "mlp", lfb), ("LSTM(LFBE)", "lstm", lfb),
                              ("LSTM(LFBE+eng)", "lstm", eng)):
        m = build_model(kind, feats[Split.TRAIN][0].dim, seed=0)
        models[name] = train(m, feats[Split.TRAIN], feats[Split.CV], TrainConfig(epochs=10)).model
    test = {"MLP(LFBE)": lfb[Split.TEST], "LSTM(LFBE)": lfb[Split.TEST],
            "LSTM(LFBE+eng)": eng[Split.TEST]}
    return {"cfg": cfg, "models": models, "test": test, "seconds": time.perf_counter() - t0}


def utterance_accuracy(scored, threshold):
    hits = [(u.score >= threshold) == (Label(u.label) is Label.WHISPER) for u in scored]
    return float(np.mean(hits))


@pytest.mark.slow
def test_criterion_4_model_ordering(desk_study, capsys):
    mean = InferenceModuleSpec()
    res = {}
    for name, model in desk_study["models"].items():
        s = score(model, desk_study["test"][name], mean)
        neg = [u.score for u in s.scores if Label(u.label) is Label.NORMAL]
        op = tune_threshold(neg, 0.001, tuned_on="test negatives")
        res[name] = {"fa": frame_accuracy(s.trajectories), "rep": evaluate(s.scores, op),
                     "acc": utterance_accuracy(s.scores, FRAME_THRESHOLD), "n": len(s.scores)}
    a = res["LSTM(LFBE)"]["fa"] > res["MLP(LFBE)"]["fa"]
    e, l = res["LSTM(LFBE+eng)"]["rep"], res["LSTM(LFBE)"]["rep"]
    b = e.fpr == l.fpr and e.recall >= l.recall
    c = all(r["acc"] >= 0.9 for r in res.values())
    n_test = {r["n"] for r in res.values()}
    ok = a and b and c and n_test == {400} and desk_study["seconds"] < 15 * 60
    rows = "; ".join(f"{k} frame acc {r['fa']:.4f} recall {r['rep'].recall:.4f} at FPR "
                     f"{r['rep'].fpr:.4f} utt acc {r['acc']:.4f}" for k, r in res.items())
    report(capsys, 4, ok, f"(a) {a} (b) {b} (c) {c}; {rows}; "
                          f"{desk_study['seconds']:.0f} s build")


def silence_padded_test_set(cfg, trail_s=0.5):
    """The test-split utterances of *cfg* re-synthesised with *trail_s* of trailing silence."""
    feats = []
    for split, spk, spec, uid in plan_corpus(cfg):
        if split is not Split.TEST:
            continue
        u = generate_utterance(dataclasses.replace(spec, trail_silence_s=trail_s), uid,
                               spk.speaker_id, spk.device_id)
        feats.append(extract_features(u, FeatureMode.LFBE))
    return channel_mean_subtract(feats)


@pytest.mark.slow
def test_criterion_5_inference_modules(desk_study, capsys):
    model = desk_study["models"]["LSTM(LFBE)"]
    trajs = score(model, silence_padded_test_set(desk_study["cfg"])).trajectories
    reps = {m.name: evaluate(rescore(trajs, m), FRAME_THRESHOLD) for m in STUDY_MODULES}
    best = max(r.f1 for r in reps.values())
    ok = reps["mean"].recall >= reps["last-frame"].recall and reps["mean"].f1 == best
    rows = "; ".join(f"{k} recall {r.recall:.4f} FPR {r.fpr:.4f} F1 {r.f1:.4f}"
                     for k, r in reps.items())
    report(capsys, 5, ok, f"threshold {FRAME_THRESHOLD}; {rows}")


# -- 6. metrics exactness ----------------------------------------------------------

def recount(scores, labels, trajs, threshold):
    tp = fp = tn = fn = 0
    for s, lab in zip(scores, labels):
        flagged = s >= threshold
        if lab == "whisper":
            tp, fn = tp + flagged, fn + (not flagged)
        else:
            fp, tn = fp + flagged, tn + (not flagged)
    recall = tp / (tp + fn) if tp + fn else math.nan
    fpr = fp / (fp + tn) if fp + tn else math.nan
    prec = tp / (tp + fp) if tp + fp else math.nan
    f1 = 0.0 if math.isnan(prec) or math.isnan(recall) or prec + recall == 0 else \
        2 * prec * recall / (prec + recall)
    hits = total = 0
    for t, lab in zip(trajs, labels):
        for p in t:
            hits += (p >= 0.5) == (lab == "whisper")
            total += 1
    return recall, fpr, f1, hits / total


def same(a, b):
    return (math.isnan(a) and math.isnan(b)) or a == b


def test_criterion_6_metrics_exact(capsys):
    rng = np.random.default_rng(SEED)
    n = 1000
    labels = rng.choice(["whisper", "normal"], size=n)
    # quantised scores so ties with the threshold occur
    scores = np.round(rng.uniform(0, 1, n), 2)
    trajs = [np.round(rng.uniform(0, 1, rng.integers(1, 40)), 2) for _ in range(n)]
    scored = [ScoredUtterance(f"u{i}", float(s), Label(lab))
              for i, (s, lab) in enumerate(zip(scores, labels))]
    ptrajs = [PosteriorTrajectory(t, f"u{i}", Label(lab))
              for i, (t, lab) in enumerate(zip(trajs, labels))]
    mismatches = 0
    for thr in (0.0, 0.25, 0.5, 0.73, 1.0, 1.5):
        rep = evaluate(scored, thr, ptrajs)
        want = recount(scores, labels, trajs, thr)
        got = (rep.recall, rep.fpr, rep.f1, rep.frame_accuracy)
        mismatches += sum(not same(g, w) for g, w in zip(got, want))

    violations = 0
    for trial in range(100):
        neg = np.round(rng.uniform(0, 1, rng.integers(1, 300)), int(rng.integers(1, 4)))
        target = float(rng.choice([0.0, 0.001, 0.01, 0.1, rng.uniform(0, 1), 1.0]))
        op = tune_threshold(neg, target)
        violations += not (op.achieved_fpr <= target
                           and op.achieved_fpr == np.mean(neg >= op.threshold))
    ok = mismatches == 0 and violations == 0
    report(capsys, 6, ok, f"{mismatches} metric mismatches over 1000 utterances x 6 thresholds; "
                          f"{violations}/100 tuning trials violating achieved_fpr <= target")


# -- 7. determinism ----------------------------------------------------------------

def run_pipeline(root):
    def cli(*argv):
        assert cli_main([str(a) for a in argv]) == 0

    corpus, feats = root / "corpus", root / "feats"
    cli("synth", "--out", corpus, "--n-per-class", 20, "--seed", 5)
    manifests = [corpus / f"{s}.jsonl" for s in ("train", "cv", "test")]
    cli("extract", "--mode", "lfbe+eng", "--out", feats, *sum([["--manifest", m] for m in manifests], []))
    cli("train", "--kind", "lstm", "--features", feats, "--train", manifests[0], "--cv", manifests[1],
        "--out", root / "model.wdmd", "--epochs", 3, "--seed", 5)
    cli("tune", "--model", root / "model.wdmd", "--features", feats,
        "--manifest", corpus / "cv_normal.jsonl")
    cli("eval", "--model", root / "model.wdmd", "--features", feats, "--manifest", manifests[2],
        "--report", root / "report.json")
    return (root / "model.wdmd").read_bytes(), (root / "report.json").read_bytes()


@pytest.mark.slow
def test_criterion_7_determinism(tmp_path, capsys):
    model_a, report_a = run_pipeline(tmp_path / "a")
    model_b, report_b = run_pipeline(tmp_path / "b")
    ok = model_a == model_b and report_a == report_b
    recall = json.loads(report_a)["recall"]
    report(capsys, 7, ok, f"model {len(model_a)} bytes identical: {model_a == model_b}; "
                          f"report identical: {report_a == report_b} (recall {recall})")


# -- 8. invariances ----------------------------------------------------------------

def test_criterion_8_invariances(capsys):
    rng = np.random.default_rng(SEED)
    frames = np.concatenate([speech_frames(SynthMode.VOICED, 20, seed=1, n=1024),
                             speech_frames(SynthMode.WHISPER, 20, seed=2, n=1024)])
    short = frames[:, 312:712]
    base_hfe, base_ac = np.stack(hfe(short), axis=-1), acmax(short)
    base_srh = np.argmax(srh_spectrum(frames).values, axis=-1)
    base_lfbe = lfbe_values(short * np.hanning(400), 16000)
    worst = {"hfe": 0.0, "acmax": 0.0, "lfbe": 0.0}
    srh_moves = floored = 0
    floor = np.log(1e-10)
    for c in np.concatenate([[1e-3, 0.5, 3.0, 1e3], rng.uniform(0.01, 100, 6)]):
        rel = lambda a, b: np.max(np.abs(a - b) / np.maximum(np.abs(b), 1.0))  # noqa: E731
        worst["hfe"] = max(worst["hfe"], rel(np.stack(hfe(c * short), axis=-1), base_hfe))
        worst["acmax"] = max(worst["acmax"], rel(acmax(c * short), base_ac))
        srh_moves += int(np.sum(np.argmax(srh_spectrum(c * frames).values, axis=-1) != base_srh))
        scaled = lfbe_values(c * short * np.hanning(400), 16000)
        # the law holds wherever neither value sits on the log floor
        live = (scaled > floor) & (base_lfbe > floor)
        floored += int(np.sum(~live))
        shift = (scaled - base_lfbe)[live]
        worst["lfbe"] = max(worst["lfbe"], np.max(np.abs(shift - 2 * np.log(c))))
    ok = worst["hfe"] <= 1e-9 and worst["acmax"] <= 1e-9 and srh_moves == 0 and worst["lfbe"] <= 1e-6
    report(capsys, 8, ok, f"HFE {worst['hfe']:.1e}, ACMAX {worst['acmax']:.1e}, "
                          f"SRH argmax bin changes {srh_moves}, LFBE 2 ln c residual {worst['lfbe']:.1e} "
                          f"({floored} of {10 * base_lfbe.size} values on the floor)")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v", "-s", *sys.argv[1:]]))
