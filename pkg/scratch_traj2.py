import sys
import numpy as np

import adhocsv.diffcore as dc
from scratch_common import build
from adhocsv.trainer import (Model, ModelConfig, TrainHyper, evaluate,
                             generate_trials, train_second_stage)

seed = int(sys.argv[1])
snr = tuple(float(x) for x in sys.argv[2].split(","))
lr, mom, clip = float(sys.argv[3]), float(sys.argv[4]), float(sys.argv[5])
epochs = int(sys.argv[6])
train, test = build(seed, snr=snr)
trials = generate_trials(test, 100, 100, np.random.default_rng([seed, 14]))
by_id = {u.utt_id: u for u in test}
mean_eer = evaluate(Model.init(ModelConfig(mechanism="mean", d=16), 20), by_id, trials).eer

cfg = ModelConfig(mechanism="gcn", n_blocks=2, heads=4, d=16, seed=seed)
for e in range(20, epochs + 1, 20):
    model, curve = train_second_stage(
        train, cfg, TrainHyper(lr=lr, momentum=mom, epochs=e, grad_clip=clip or None))
    eer = evaluate(model, by_id, trials).eer
    print(f"epochs={e:3d} loss={curve[-1]:.3f} eer={eer:.3f} mean={mean_eer:.3f} "
          f"win={eer < mean_eer}", flush=True)
