"""Scratch: MEAN baseline EER vs SNR range."""
import numpy as np

from adhocsv.scenesim import SimConfig, make_codebook, sample_scene, synth_features
from adhocsv.trainer import Model, ModelConfig, Utterance, embed, generate_trials, cosine_score, eer_from_scores

C, T, D, N_SPK = 8, 20, 16, 20


def build_test(seed, snr_range):
    sim = SimConfig(n_nodes=C, d=D, t=T, n_speakers=N_SPK, seed=seed,
                    with_noise_source=True, snr_range_db=snr_range)
    codebook = make_codebook(N_SPK, D, seed=[seed, 10])
    test = []
    for i in range(50):
        scene = sample_scene(np.random.default_rng([seed, 11, 1, i]), sim)
        spk = i % N_SPK
        ft = synth_features(scene, spk, codebook, np.random.default_rng([seed, 12, 1, i]), sim)
        test.append(Utterance(f"test_{i}", spk, ft, scene))
    return test


for snr_range in [(-5.0, 0.0), (-10.0, -5.0), (-10.0, 0.0), (-15.0, -5.0)]:
    eers = []
    for seed in range(5):
        test = build_test(seed, snr_range)
        trials = generate_trials(test, 100, 100, np.random.default_rng([seed, 14]))
        model = Model.init(ModelConfig(mechanism="mean", d=16), n_speakers=N_SPK)
        embs = {u.utt_id: embed(model, u.features) for u in test}
        tar = [cosine_score(embs[t.enroll_id], embs[t.test_id]) for t in trials.trials if t.label == "target"]
        non = [cosine_score(embs[t.enroll_id], embs[t.test_id]) for t in trials.trials if t.label == "nontarget"]
        eers.append(eer_from_scores(tar, non)[0])
    print(f"snr={snr_range}: MEAN eers={[f'{e:.3f}' for e in eers]}")
