import sys
import time
import numpy as np

from scratch_common import build
from adhocsv.diffcore import NonFiniteError
from adhocsv.trainer import (ModelConfig, TrainHyper, evaluate, generate_trials,
                             train_second_stage)

seed, epochs = 0, int(sys.argv[1])
snr = tuple(float(x) for x in sys.argv[2].split(",")) if len(sys.argv) > 2 else (-15.0, -5.0)
lr = float(sys.argv[3]) if len(sys.argv) > 3 else 0.01
mom = float(sys.argv[4]) if len(sys.argv) > 4 else 0.9
train, test = build(seed, snr=snr)
trials = generate_trials(test, 100, 100, np.random.default_rng([seed, 14]))
by_id = {u.utt_id: u for u in test}
cfg = ModelConfig(mechanism="gcn", n_blocks=2, heads=4, d=16, seed=seed)
t0 = time.monotonic()
model, curve = train_second_stage(train, cfg, TrainHyper(lr=lr, momentum=mom, epochs=epochs))
eer = evaluate(model, by_id, trials).eer
print("curve:", " ".join(f"{v:.3f}" for v in curve[::max(1, epochs // 20)]))
print(f"final loss={curve[-1]:.3f} eer={eer:.4f} elapsed={time.monotonic()-t0:.0f}s")
