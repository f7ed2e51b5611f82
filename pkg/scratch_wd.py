import sys
import time
import numpy as np

from scratch_common import build
from adhocsv.trainer import (Model, ModelConfig, SelectionConfig, TrainHyper, evaluate,
                             generate_trials, train_second_stage)

epochs = int(sys.argv[1])
snr = tuple(float(x) for x in sys.argv[2].split(","))
lr, mom, clip, wd = (float(x) for x in sys.argv[3:7])
blocks = int(sys.argv[7])
seeds = [int(s) for s in sys.argv[8:]]
hyper = TrainHyper(lr=lr, momentum=mom, epochs=epochs, grad_clip=clip or None, weight_decay=wd)
for seed in seeds:
    t0 = time.monotonic()
    train, test = build(seed, snr=snr)
    trials = generate_trials(test, 100, 100, np.random.default_rng([seed, 14]))
    by_id = {u.utt_id: u for u in test}
    mean_eer = evaluate(Model.init(ModelConfig(mechanism="mean", d=16), 20), by_id, trials).eer
    cfg = ModelConfig(mechanism="gcn", n_blocks=blocks, heads=4, d=16, seed=seed)
    model, curve = train_second_stage(train, cfg, hyper)
    gcn_eer = evaluate(model, by_id, trials).eer
    cfgp = ModelConfig(mechanism="gcn", n_blocks=blocks, heads=4, d=16,
                       selection=SelectionConfig(kind="prior", rho=0.6), seed=seed)
    modelp, curvep = train_second_stage(train, cfgp, hyper)
    prior_eer = evaluate(modelp, by_id, trials).eer
    print(f"seed={seed}: MEAN={mean_eer:.3f} GCN={gcn_eer:.3f} (loss {curve[-1]:.2f}) "
          f"PRIOR={prior_eer:.3f} (loss {curvep[-1]:.2f}) win={gcn_eer < mean_eer} "
          f"({time.monotonic()-t0:.0f}s)", flush=True)
