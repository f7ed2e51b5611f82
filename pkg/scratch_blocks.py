import sys
import time
import numpy as np

from scratch_common import build
from adhocsv.trainer import (ModelConfig, TrainHyper, evaluate, generate_trials,
                             train_second_stage, Model)

seed = int(sys.argv[5]) if len(sys.argv) > 5 else 0
epochs = int(sys.argv[1])
snr = tuple(float(x) for x in sys.argv[2].split(","))
lr, mom = float(sys.argv[3]), float(sys.argv[4])
blocks = int(sys.argv[6]) if len(sys.argv) > 6 else 1
train, test = build(seed, snr=snr)
trials = generate_trials(test, 100, 100, np.random.default_rng([seed, 14]))
by_id = {u.utt_id: u for u in test}

mean_eer = evaluate(Model.init(ModelConfig(mechanism="mean", d=16), 20), by_id, trials).eer
cfg = ModelConfig(mechanism="gcn", n_blocks=blocks, heads=4, d=16, seed=seed)
t0 = time.monotonic()
model, curve = train_second_stage(train, cfg, TrainHyper(lr=lr, momentum=mom, epochs=epochs))
eer = evaluate(model, by_id, trials).eer
print("curve:", " ".join(f"{v:.3f}" for v in curve[::max(1, epochs // 15)]))
print(f"blocks={blocks} snr={snr} seed={seed}: MEAN={mean_eer:.3f} GCN={eer:.3f} "
      f"loss={curve[-1]:.3f} ({time.monotonic()-t0:.0f}s)")
