import sys
import time
import numpy as np

from scratch_common import build
from adhocsv.trainer import (Model, ModelConfig, SelectionConfig, TrainHyper, evaluate,
                             generate_trials, train_second_stage)

snr = tuple(float(x) for x in sys.argv[1].split(","))
epochs, lr = int(sys.argv[2]), float(sys.argv[3])
seeds = [int(s) for s in sys.argv[4:]]
hyper = TrainHyper(lr=lr, momentum=0.9, epochs=epochs)
wins, gcns, priors, means = 0, [], [], []
t_all = time.monotonic()
for seed in seeds:
    t0 = time.monotonic()
    train, test = build(seed, snr=snr)
    trials = generate_trials(test, 100, 100, np.random.default_rng([seed, 14]))
    by_id = {u.utt_id: u for u in test}
    mean_eer = evaluate(Model.init(ModelConfig(mechanism="mean", d=16), 20), by_id, trials).eer
    cfg = ModelConfig(mechanism="gcn", n_blocks=2, heads=4, d=16, warm_start=True, seed=seed)
    model, curve = train_second_stage(train, cfg, hyper)
    gcn = evaluate(model, by_id, trials).eer
    cfgp = ModelConfig(mechanism="gcn", n_blocks=2, heads=4, d=16, warm_start=True,
                       selection=SelectionConfig(kind="prior", rho=0.6), seed=seed)
    modelp, curvep = train_second_stage(train, cfgp, hyper)
    prior = evaluate(modelp, by_id, trials).eer
    wins += gcn < mean_eer
    gcns.append(gcn); priors.append(prior); means.append(mean_eer)
    print(f"seed={seed}: MEAN={mean_eer:.3f} GCN={gcn:.3f} (loss {curve[-1]:.2f}) "
          f"PRIOR={prior:.3f} (loss {curvep[-1]:.2f}) win={gcn < mean_eer} "
          f"({time.monotonic()-t0:.0f}s)", flush=True)
print(f"wins={wins}/{len(seeds)} mean: MEAN={np.mean(means):.3f} GCN={np.mean(gcns):.3f} "
      f"PRIOR={np.mean(priors):.3f} prior<=gcn={np.mean(priors) <= np.mean(gcns)} "
      f"total={time.monotonic()-t_all:.0f}s")
