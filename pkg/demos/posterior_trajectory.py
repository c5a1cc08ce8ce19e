"""
What the LSTM sees across an utterance
======================================

A frame classifier is trained briefly, then run over one whispered and one
voiced utterance that both end in half a second of near silence. The
per-frame whisper posterior is printed as a coarse strip chart, followed by
the utterance score from the last frame alone and from the mean. The
silent tail is where the last-frame rule goes wrong.
"""

import numpy as np

from whisperdet.audio_io import Split
from whisperdet.features import FeatureMode, extract_features
from whisperdet.features.extract import channel_mean_subtract
from whisperdet.inference import build_result, parse_module
from whisperdet.neural import TrainConfig, build_model, train
from whisperdet.synth import CorpusConfig, SynthMode, SynthSpec, generate_utterance, plan_corpus

cfg = CorpusConfig(n_per_class=30, seed=11)
by_split = {s: [] for s in Split}
for split, spk, spec, uid in plan_corpus(cfg):
    u = generate_utterance(spec, uid, spk.speaker_id, spk.device_id)
    by_split[split].append(extract_features(u, FeatureMode.LFBE))
feats = {s: channel_mean_subtract(v) for s, v in by_split.items()}
model = train(build_model("lstm", 64, seed=0), feats[Split.TRAIN], feats[Split.CV],
              TrainConfig(epochs=4)).model

BARS = " .:-=+*#%@"


def strip(p, width=60):
    cols = np.array_split(p, width)
    return "".join(BARS[min(int(c.mean() * len(BARS)), len(BARS) - 1)] for c in cols)


# both test utterances share a speaker, so CMS is computed over the pair
utts = [generate_utterance(SynthSpec(mode=m, duration_s=1.5, f0_hz=150.0, seed=5,
                                     trail_silence_s=0.5), m.value, "demo", "dev")
        for m in (SynthMode.WHISPER, SynthMode.VOICED)]
pair = channel_mean_subtract([extract_features(u, FeatureMode.LFBE) for u in utts])
for u, fm in zip(utts, pair):
    traj = model.posteriors(fm)
    last = build_result(traj, parse_module("last-frame")).score
    mean = build_result(traj, parse_module("mean")).score
    print(f"{u.utterance_id:<8} |{strip(traj.p_whisper)}|  last-frame {last:.3f}  mean {mean:.3f}")
