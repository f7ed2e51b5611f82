"""Oracle headroom: MEAN vs inverse-variance vs prior-masked mean."""
import numpy as np

from scratch_common import build
from adhocsv.scenesim import SimConfig, channel_noise_sigma
from adhocsv.graphs import build_prior
from adhocsv.trainer import cosine_score, eer_from_scores, generate_trials

SIM = SimConfig(n_nodes=8, d=16, t=20, n_speakers=20)

def eer_for(test, trials, embed_fn):
    embs = {u.utt_id: embed_fn(u) for u in test}
    tar = [cosine_score(embs[t.enroll_id], embs[t.test_id]) for t in trials.trials if t.label == "target"]
    non = [cosine_score(embs[t.enroll_id], embs[t.test_id]) for t in trials.trials if t.label == "nontarget"]
    return eer_from_scores(tar, non)[0]

def mean_embed(u):
    return u.features.data.mean(axis=(0, 1))

def invvar_embed(u):
    sigma = channel_noise_sigma(u.scene, SIM)
    w = 1.0 / sigma ** 2
    w /= w.sum()
    return (u.features.data.mean(axis=1) * w[:, None]).sum(axis=0)

def prior_embed(u):
    _, mask = build_prior(u.scene, 0.6)
    return u.features.data[mask.indices()].mean(axis=(0, 1))

import warnings
warnings.filterwarnings("ignore")
for snr in [(-15.0, -5.0), (-10.0, -5.0)]:
    rows = []
    for seed in range(3):
        _, test = build(seed, snr=snr)
        trials = generate_trials(test, 100, 100, np.random.default_rng([seed, 14]))
        rows.append((eer_for(test, trials, mean_embed),
                     eer_for(test, trials, invvar_embed),
                     eer_for(test, trials, prior_embed)))
    arr = np.array(rows)
    print(f"snr={snr}: MEAN={arr[:,0].round(3)} INVVAR={arr[:,1].round(3)} PRIOR={arr[:,2].round(3)}")
