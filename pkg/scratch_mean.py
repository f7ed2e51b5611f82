"""Scratch: MEAN-baseline score distributions across seeds."""
import numpy as np

from scratch_bench import build_dataset
from adhocsv.trainer import Model, ModelConfig, Utterance, embed, generate_trials, cosine_score, eer_from_scores

for seed in range(5):
    train, test = build_dataset(seed)
    trials = generate_trials(test, 100, 100, np.random.default_rng([seed, 14]))
    model = Model.init(ModelConfig(mechanism="mean", d=16), n_speakers=20)
    embs = {u.utt_id: embed(model, u.features) for u in test}
    tar, non = [], []
    for t in trials.trials:
        s = cosine_score(embs[t.enroll_id], embs[t.test_id])
        (tar if t.label == "target" else non).append(s)
    eer, _ = eer_from_scores(tar, non)
    snrs = [u.scene.snr_db for u in test]
    print(f"seed={seed} MEAN eer={eer:.4f}  tar[min={min(tar):.3f} mean={np.mean(tar):.3f}] "
          f"non[max={max(non):.3f} mean={np.mean(non):.3f}] snr[min={min(snrs):.1f}]")
