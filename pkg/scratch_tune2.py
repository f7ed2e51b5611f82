import math
import sys
import time
import numpy as np

import adhocsv.stagg as stagg
from adhocsv.diffcore import NonFiniteError
from scratch_common import build, scaled_uniform
from adhocsv.trainer import (ModelConfig, TrainHyper, evaluate, generate_trials,
                             train_second_stage)

seed = 0
train, test = build(seed)
trials = generate_trials(test, 100, 100, np.random.default_rng([seed, 14]))
by_id = {u.utt_id: u for u in test}
epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 30

for scale, lr in ((math.sqrt(3.0), 0.01), (math.sqrt(3.0), 0.02), (math.sqrt(3.0), 0.03),
                  (1.0, 0.02), (1.0, 0.03)):
    stagg._uniform = scaled_uniform(scale)
    t0 = time.monotonic()
    cfg = ModelConfig(mechanism="gcn", n_blocks=2, heads=4, d=16, seed=seed)
    try:
        model, curve = train_second_stage(train, cfg, TrainHyper(lr=lr, epochs=epochs))
        eer = evaluate(model, by_id, trials).eer
        print(f"scale={scale:.3f} lr={lr} loss_end={curve[-1]:.3f} eer={eer:.4f} "
              f"({time.monotonic()-t0:.0f}s)", flush=True)
    except NonFiniteError as e:
        print(f"scale={scale:.3f} lr={lr} DIVERGED: {e}", flush=True)
