import math
import numpy as np

from adhocsv.scenesim import SimConfig, make_codebook, sample_scene, synth_features
from adhocsv.trainer import Utterance

C, T, D, N_SPK = 8, 20, 16, 20


def build(seed, snr=(-15.0, -5.0), n_train=200, n_test=50):
    sim = SimConfig(n_nodes=C, d=D, t=T, n_speakers=N_SPK, seed=seed,
                    with_noise_source=True, snr_range_db=snr)
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


def scaled_uniform(scale):
    def f(rng, shape, fan_in):
        bound = scale / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)
    return f
