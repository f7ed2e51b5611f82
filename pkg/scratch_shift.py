import sys
import time
import numpy as np

from adhocsv.scenesim import SimConfig, make_codebook, sample_scene, synth_features
from adhocsv.trainer import (Model, ModelConfig, SelectionConfig, TrainHyper, Utterance,
                             evaluate, generate_trials, train_second_stage)

C, T, D, N_SPK = 8, 20, 16, 20


def build_split(seed, snr, split_id, count, prefix):
    sim = SimConfig(n_nodes=C, d=D, t=T, n_speakers=N_SPK, snr_range_db=snr)
    codebook = make_codebook(N_SPK, D, seed=[seed, 10])
    utts = []
    for i in range(count):
        scene = sample_scene(np.random.default_rng([seed, 11, split_id, i]), sim)
        spk = i % N_SPK
        ft = synth_features(scene, spk, codebook, np.random.default_rng([seed, 12, split_id, i]), sim)
        utts.append(Utterance(f"{prefix}_{i}", spk, ft, scene))
    return utts


train_snr = tuple(float(x) for x in sys.argv[1].split(","))
test_snr = tuple(float(x) for x in sys.argv[2].split(","))
epochs, lr = int(sys.argv[3]), float(sys.argv[4])
seeds = [int(s) for s in sys.argv[5:]]
hyper = TrainHyper(lr=lr, momentum=0.9, epochs=epochs)
wins = 0
gcns, priors = [], []
for seed in seeds:
    t0 = time.monotonic()
    train = build_split(seed, train_snr, 0, 200, "train")
    test = build_split(seed, test_snr, 1, 50, "test")
    trials = generate_trials(test, 100, 100, np.random.default_rng([seed, 14]))
    by_id = {u.utt_id: u for u in test}
    mean_eer = evaluate(Model.init(ModelConfig(mechanism="mean", d=16), 20), by_id, trials).eer
    cfg = ModelConfig(mechanism="gcn", n_blocks=2, heads=4, d=16, seed=seed)
    model, curve = train_second_stage(train, cfg, hyper)
    gcn = evaluate(model, by_id, trials).eer
    cfgp = ModelConfig(mechanism="gcn", n_blocks=2, heads=4, d=16,
                       selection=SelectionConfig(kind="prior", rho=0.6), seed=seed)
    modelp, curvep = train_second_stage(train, cfgp, hyper)
    prior = evaluate(modelp, by_id, trials).eer
    wins += gcn < mean_eer
    gcns.append(gcn)
    priors.append(prior)
    print(f"seed={seed}: MEAN={mean_eer:.3f} GCN={gcn:.3f} (loss {curve[-1]:.2f}) "
          f"PRIOR={prior:.3f} (loss {curvep[-1]:.2f}) win={gcn < mean_eer} "
          f"({time.monotonic()-t0:.0f}s)", flush=True)
print(f"wins={wins}/{len(seeds)} mean_gcn={np.mean(gcns):.3f} mean_prior={np.mean(priors):.3f} "
      f"prior<=gcn={np.mean(priors) <= np.mean(gcns)}")
