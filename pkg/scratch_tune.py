"""Scratch: init-scale x lr matrix on one seed."""
import math
import sys
import time
import numpy as np

import adhocsv.stagg as stagg
from adhocsv.scenesim import SimConfig, make_codebook, sample_scene, synth_features
from adhocsv.trainer import (Model, ModelConfig, SelectionConfig, TrainHyper, Utterance,
                             evaluate, generate_trials, train_second_stage)

C, T, D, N_SPK = 8, 20, 16, 20
SNR = (-15.0, -5.0)


def build(seed, n_train=200, n_test=50):
    sim = SimConfig(n_nodes=C, d=D, t=T, n_speakers=N_SPK, seed=seed,
                    with_noise_source=True, snr_range_db=SNR)
    codebook = make_codebook(N_SPK, D, seed=[seed, 10])
    out = {"train": [], "test": []}
    for sid, (split, count) in enumerate((("train", n_train), ("test", n_test))):
        for i in range(count):
            scene = sample_scene(np.random.default_rng([seed, 11, sid, i]), sim)
            spk = i % N_SPK
            ft = synth_features(scene, spk, codebook,
                                np.random.default_rng([seed, 12, sid, i]), sim)
            out[split].append(Utterance(f"{split}_{i}", spk, ft, scene))
    return out["train"], out["test"]


orig_uniform = stagg._uniform

def scaled_uniform(scale):
    def f(rng, shape, fan_in):
        bound = scale / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)
    return f


seed = 0
train, test = build(seed)
trials = generate_trials(test, 100, 100, np.random.default_rng([seed, 14]))
by_id = {u.utt_id: u for u in test}
epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 30

for scale in (1.0, math.sqrt(3.0)):
    stagg._uniform = scaled_uniform(scale)
    for lr in (0.01, 0.05):
        t0 = time.monotonic()
        cfg = ModelConfig(mechanism="gcn", n_blocks=2, heads=4, d=D, seed=seed)
        model, curve = train_second_stage(train, cfg, TrainHyper(lr=lr, epochs=epochs))
        eer = evaluate(model, by_id, trials).eer
        print(f"scale={scale:.3f} lr={lr} loss0={curve[0]:.3f} loss_end={curve[-1]:.3f} "
              f"eer={eer:.4f} ({time.monotonic()-t0:.0f}s)", flush=True)
stagg._uniform = orig_uniform
