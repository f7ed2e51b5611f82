import sys
import time
import numpy as np

from adhocsv.scenesim import SimConfig, make_codebook, sample_scene, synth_features
from adhocsv.trainer import (Model, ModelConfig, SelectionConfig, TrainHyper, Utterance,
                             evaluate, generate_trials, train_second_stage)

C, T, D = 8, 20, 16
N_SPK, N_TRAIN_SPK = 20, 14
N_TRAIN, N_TEST = 200, 50


def build(seed, snr):
    sim = SimConfig(n_nodes=C, d=D, t=T, n_speakers=N_SPK, snr_range_db=snr)
    codebook = make_codebook(N_SPK, D, seed=[seed, 10])
    train, test = [], []
    for i in range(N_TRAIN):
        spk = i % N_TRAIN_SPK
        scene = sample_scene(np.random.default_rng([seed, 11, 0, i]), sim)
        ft = synth_features(scene, spk, codebook, np.random.default_rng([seed, 12, 0, i]), sim)
        train.append(Utterance(f"train_{i}", spk, ft, scene))
    for i in range(N_TEST):
        spk = N_TRAIN_SPK + i % (N_SPK - N_TRAIN_SPK)
        scene = sample_scene(np.random.default_rng([seed, 11, 1, i]), sim)
        ft = synth_features(scene, spk, codebook, np.random.default_rng([seed, 12, 1, i]), sim)
        test.append(Utterance(f"test_{i}", spk, ft, scene))
    return train, test


epochs = int(sys.argv[1])
snr = tuple(float(x) for x in sys.argv[2].split(","))
lr, mom, clip, wd = (float(x) for x in sys.argv[3:7])
blocks = int(sys.argv[7])
seeds = [int(s) for s in sys.argv[8:]]
hyper = TrainHyper(lr=lr, momentum=mom, epochs=epochs, grad_clip=clip or None, weight_decay=wd)
for seed in seeds:
    t0 = time.monotonic()
    train, test = build(seed, snr)
    trials = generate_trials(test, 100, 100, np.random.default_rng([seed, 14]))
    by_id = {u.utt_id: u for u in test}
    mean_eer = evaluate(Model.init(ModelConfig(mechanism="mean", d=16), 14), by_id, trials).eer
    cfg = ModelConfig(mechanism="gcn", n_blocks=blocks, heads=4, d=16, seed=seed)
    model, curve = train_second_stage(train, cfg, hyper)
    gcn = evaluate(model, by_id, trials).eer
    cfgp = ModelConfig(mechanism="gcn", n_blocks=blocks, heads=4, d=16,
                       selection=SelectionConfig(kind="prior", rho=0.6), seed=seed)
    modelp, curvep = train_second_stage(train, cfgp, hyper)
    prior = evaluate(modelp, by_id, trials).eer
    print(f"seed={seed}: MEAN={mean_eer:.3f} GCN={gcn:.3f} (loss {curve[-1]:.2f}) "
          f"PRIOR={prior:.3f} (loss {curvep[-1]:.2f}) win={gcn < mean_eer} "
          f"({time.monotonic()-t0:.0f}s)", flush=True)
