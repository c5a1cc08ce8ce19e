"""
Training a small whisper detector end to end
============================================

Builds a synthetic corpus, extracts LFBE plus engineered features with
channel mean subtraction, trains an LSTM for a few epochs, tunes the
operating point on normal-only utterances and scores the test split with
each of the four result builders. Runs in well under a minute.
"""

import tempfile
from pathlib import Path

from whisperdet.audio_io import Label, Split, load_manifest
from whisperdet.features import FeatureMode
from whisperdet.inference import STUDY_MODULES
from whisperdet.metrics import comparison_grid
from whisperdet.neural import TrainConfig, build_model, train
from whisperdet.pipeline import extract_manifest, score, tune_and_evaluate
from whisperdet.synth import CorpusConfig, generate_corpus

work = Path(tempfile.mkdtemp(prefix="whisperdet-demo-"))
corpus = generate_corpus(work / "corpus", CorpusConfig(n_per_class=40, seed=7))
print("corpus:", {s.value: n for s, n in corpus.counts.items()}, "in", work)

# CMS is applied per (speaker, device) within each manifest
feats = {s: extract_manifest(load_manifest(corpus.manifests[s]), FeatureMode.LFBE_ENG)
         for s in Split}
print("feature dim:", feats[Split.TRAIN][0].dim)

model = build_model("lstm", feats[Split.TRAIN][0].dim, seed=0)
result = train(model, feats[Split.TRAIN], feats[Split.CV], TrainConfig(epochs=4))
for h in result.history:
    print(f"epoch {h.epoch}: loss {h.train_loss:.4f}  cv frame acc {h.cv_frame_accuracy:.4f}  lr {h.learning_rate:g}")

# the operating point comes from normal cv utterances only
test = score(result.model, feats[Split.TEST]).trajectories
cv_normal = [t for t in score(result.model, feats[Split.CV]).trajectories
             if Label(t.label) is Label.NORMAL]
rows = [(m.name, tune_and_evaluate(test, m, target_fpr=0.01, tune_on=cv_normal))
        for m in STUDY_MODULES]
print()
print(comparison_grid(rows))
