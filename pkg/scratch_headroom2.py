import warnings
import numpy as np

from adhocsv.scenesim import SimConfig, channel_noise_sigma, make_codebook, sample_scene, synth_features
from adhocsv.graphs import build_prior
from adhocsv.trainer import Utterance, cosine_score, eer_from_scores, generate_trials

warnings.filterwarnings("ignore")
C, T, D, N_SPK = 8, 20, 16, 20


def build_test(seed, sim):
    codebook = make_codebook(N_SPK, D, seed=[seed, 10])
    test = []
    for i in range(50):
        scene = sample_scene(np.random.default_rng([seed, 11, 1, i]), sim)
        ft = synth_features(scene, i % N_SPK, codebook, np.random.default_rng([seed, 12, 1, i]), sim)
        test.append(Utterance(f"t{i}", i % N_SPK, ft, scene))
    return test


def eer_for(test, trials, embed_fn):
    embs = {u.utt_id: embed_fn(u) for u in test}
    tar = [cosine_score(embs[t.enroll_id], embs[t.test_id]) for t in trials.trials if t.label == "target"]
    non = [cosine_score(embs[t.enroll_id], embs[t.test_id]) for t in trials.trials if t.label == "nontarget"]
    return eer_from_scores(tar, non)[0]


for base, snr in [(0.05, (-8.0, -2.0)), (0.05, (-10.0, -2.0)), (0.02, (-8.0, -2.0)),
                  (0.05, (-5.0, 0.0)), (0.1, (-10.0, -2.0))]:
    sim = SimConfig(n_nodes=C, d=D, t=T, n_speakers=N_SPK, snr_range_db=snr, base_sigma=base)
    rows = []
    for seed in range(5):
        test = build_test(seed, sim)
        trials = generate_trials(test, 100, 100, np.random.default_rng([seed, 14]))

        def mean_embed(u):
            return u.features.data.mean(axis=(0, 1))

        def invvar_embed(u):
            s = channel_noise_sigma(u.scene, sim)
            w = 1.0 / s ** 2
            w /= w.sum()
            return (u.features.data.mean(axis=1) * w[:, None]).sum(axis=0)

        def prior_embed(u):
            _, mask = build_prior(u.scene, 0.6)
            return u.features.data[mask.indices()].mean(axis=(0, 1))

        rows.append((eer_for(test, trials, mean_embed), eer_for(test, trials, invvar_embed),
                     eer_for(test, trials, prior_embed)))
    arr = np.array(rows)
    print(f"base={base} snr={snr}: MEAN={arr[:,0].round(2)} INV={arr[:,1].round(2)} PRIORMEAN={arr[:,2].round(2)}")
