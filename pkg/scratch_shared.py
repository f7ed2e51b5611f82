import sys
import time
import numpy as np

from adhocsv.scenesim import SimConfig, make_codebook, sample_scene, synth_features
from adhocsv.trainer import (Model, ModelConfig, SelectionConfig, TrainHyper, Utterance,
                             evaluate, generate_trials, train_second_stage)

C, T, D, N_SPK = 8, 20, 16, 20


def build_shared(seed, snr):
    sim = SimConfig(n_nodes=C, d=D, t=T, n_speakers=N_SPK, snr_range_db=snr)
    codebook = make_codebook(N_SPK, D, seed=[seed, 10])
    scene = sample_scene(np.random.default_rng([seed, 11]), sim)
    train, test = [], []
    for sid, (split, count, out) in enumerate((("train", 200, train), ("test", 50, test))):
        for i in range(count):
            spk = i % N_SPK
            ft = synth_features(scene, spk, codebook,
                                np.random.default_rng([seed, 12, sid, i]), sim)
            out.append(Utterance(f"{split}_{i}", spk, ft, scene))
    return train, test


snr = tuple(float(x) for x in sys.argv[1].split(","))
epochs, lr = int(sys.argv[2]), float(sys.argv[3])
warm = bool(int(sys.argv[4]))
seeds = [int(s) for s in sys.argv[5:]]
hyper = TrainHyper(lr=lr, momentum=0.9, epochs=epochs)
wins, gcns, priors, means = 0, [], [], []
t_all = time.monotonic()
for seed in seeds:
    train, test = build_shared(seed, snr)
    trials = generate_trials(test, 100, 100, np.random.default_rng([seed, 14]))
    by_id = {u.utt_id: u for u in test}
    mean_eer = evaluate(Model.init(ModelConfig(mechanism="mean", d=16), 20), by_id, trials).eer
    cfg = ModelConfig(mechanism="gcn", n_blocks=int(__import__("os").environ.get("BLOCKS", 2)), heads=4, d=16, warm_start=warm, seed=seed)
    model, curve = train_second_stage(train, cfg, hyper)
    gcn = evaluate(model, by_id, trials).eer
    cfgp = ModelConfig(mechanism="gcn", n_blocks=int(__import__("os").environ.get("BLOCKS", 2)), heads=4, d=16, warm_start=warm,
                       selection=SelectionConfig(kind="prior", rho=0.6), seed=seed)
    modelp, curvep = train_second_stage(train, cfgp, hyper)
    prior = evaluate(modelp, by_id, trials).eer
    wins += gcn < mean_eer
    gcns.append(gcn); priors.append(prior); means.append(mean_eer)
    print(f"seed={seed}: MEAN={mean_eer:.3f} GCN={gcn:.3f} (loss {curve[-1]:.2f}) "
          f"PRIOR={prior:.3f} (loss {curvep[-1]:.2f}) win={gcn < mean_eer}", flush=True)
print(f"wins={wins}/{len(seeds)} GCN={np.mean(gcns):.3f} PRIOR={np.mean(priors):.3f} "
      f"MEAN={np.mean(means):.3f} prior<=gcn={np.mean(priors) <= np.mean(gcns)} "
      f"total={time.monotonic()-t_all:.0f}s")
