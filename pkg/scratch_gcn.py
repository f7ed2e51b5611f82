"""Scratch: trained GCN vs MEAN at harsh SNR."""
import sys
import time
import numpy as np

from adhocsv.scenesim import SimConfig, make_codebook, sample_scene, synth_features
from adhocsv.trainer import (Model, ModelConfig, SelectionConfig, TrainHyper, Utterance,
                             evaluate, generate_trials, train_second_stage)

C, T, D, N_SPK = 8, 20, 16, 20


def build(seed, snr_range, n_train=200, n_test=50):
    sim = SimConfig(n_nodes=C, d=D, t=T, n_speakers=N_SPK, seed=seed,
                    with_noise_source=True, snr_range_db=snr_range)
    codebook = make_codebook(N_SPK, D, seed=[seed, 10])
    out = {"train": [], "test": []}
    for sid, (split, count) in enumerate((("train", n_train), ("test", n_test))):
        for i in range(count):
            scene = sample_scene(np.random.default_rng([seed, 11, sid, i]), sim)
            spk = i % N_SPK
            ft = synth_features(scene, spk, codebook, np.random.default_rng([seed, 12, sid, i]), sim)
            out[split].append(Utterance(f"{split}_{i}", spk, ft, scene))
    return out["train"], out["test"]


snr = tuple(float(x) for x in sys.argv[1].split(","))
epochs = int(sys.argv[2])
seeds = [int(s) for s in sys.argv[3:]]
for seed in seeds:
    train, test = build(seed, snr)
    trials = generate_trials(test, 100, 100, np.random.default_rng([seed, 14]))
    by_id = {u.utt_id: u for u in test}
    t0 = time.monotonic()
    results = {}
    for name, mech, sel in (("mean", "mean", SelectionConfig()),
                             ("gcn", "gcn", SelectionConfig()),
                             ("prior", "gcn", SelectionConfig(kind="prior", rho=0.6))):
        cfg = ModelConfig(mechanism=mech, n_blocks=2, heads=4, d=D, selection=sel, seed=seed)
        model, curve = train_second_stage(train, cfg, TrainHyper(epochs=epochs if mech != "mean" else 1))
        results[name] = evaluate(model, by_id, trials).eer
        loss = curve[-1]
        print(f"  seed={seed} {name:6s} eer={results[name]:.4f} loss={loss:.3f}", flush=True)
    print(f"seed={seed} snr={snr} gcn<mean={results['gcn']<results['mean']} "
          f"prior<=gcn={results['prior']<=results['gcn']} elapsed={time.monotonic()-t0:.0f}s")
