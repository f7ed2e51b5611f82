import cProfile, pstats, io
import numpy as np
from adhocsv.scenesim import SimConfig, make_codebook, sample_scene, synth_features
from adhocsv.trainer import (ModelConfig, SelectionConfig, TrainHyper, Utterance,
                             train_second_stage)

C, T, D, N_SPK = 8, 20, 16, 20
sim = SimConfig(n_nodes=C, d=D, t=T, n_speakers=N_SPK, seed=0,
                with_noise_source=True, snr_range_db=(-12.0, -2.0))
codebook = make_codebook(N_SPK, D, seed=[0, 10])
train = []
for i in range(64):
    scene = sample_scene(np.random.default_rng([0, 11, 0, i]), sim)
    ft = synth_features(scene, i % N_SPK, codebook, np.random.default_rng([0, 12, 0, i]), sim)
    train.append(Utterance(f"train_{i}", i % N_SPK, ft, scene))

cfg = ModelConfig(mechanism="gcn", n_blocks=2, heads=4, d=16, seed=0)
pr = cProfile.Profile()
pr.enable()
train_second_stage(train, cfg, TrainHyper(epochs=2))
pr.disable()
s = io.StringIO()
pstats.Stats(pr, stream=s).sort_stats("tottime").print_stats(22)
print(s.getvalue())
