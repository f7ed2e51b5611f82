import sys
import time
import numpy as np

from scratch_common import build
from adhocsv.trainer import (Model, ModelConfig, TrainHyper, evaluate, generate_trials,
                             train_second_stage)

epochs = int(sys.argv[1])
snr = tuple(float(x) for x in sys.argv[2].split(","))
lr, mom, clip = float(sys.argv[3]), float(sys.argv[4]), float(sys.argv[5])
blocks = int(sys.argv[6])
seeds = [int(s) for s in sys.argv[7:]]
for seed in seeds:
    train, test = build(seed, snr=snr)
    trials = generate_trials(test, 100, 100, np.flipud and np.random.default_rng([seed, 14]))
    by_id = {u.utt_id: u for u in test}
    mean_eer = evaluate(Model.init(ModelConfig(mechanism="mean", d=16), 20), by_id, trials).eer
    cfg = ModelConfig(mechanism="gcn", n_blocks=blocks, heads=4, d=16, seed=seed)
    t0 = time.monotonic()
    model, curve = train_second_stage(
        train, cfg, TrainHyper(lr=lr, momentum=mom, epochs=epochs, grad_clip=clip))
    eer = evaluate(model, by_id, trials).eer
    print("curve:", " ".join(f"{v:.2f}" for v in curve[::max(1, epochs // 15)]))
    print(f"seed={seed}: MEAN={mean_eer:.3f} GCN={eer:.3f} loss={curve[-1]:.3f} "
          f"win={eer < mean_eer} ({time.monotonic()-t0:.0f}s)", flush=True)
