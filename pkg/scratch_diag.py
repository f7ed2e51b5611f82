import numpy as np

from scratch_common import build
from adhocsv.trainer import (Model, ModelConfig, TrainHyper, evaluate, generate_trials,
                             train_second_stage, embed, cosine_score, eer_from_scores)

seed = 0
snr = (-15.0, -5.0)
train, test = build(seed, snr=snr)
trials_test = generate_trials(test, 100, 100, np.random.default_rng([seed, 14]))
trials_train = generate_trials(train[:50], 100, 100, np.random.default_rng([seed, 15]))
by_test = {u.utt_id: u for u in test}
by_train = {u.utt_id: u for u in train[:50]}

mean_model = Model.init(ModelConfig(mechanism="mean", d=16), 20)
print("MEAN      test", evaluate(mean_model, by_test, trials_test).eer)

cfg = ModelConfig(mechanism="gcn", n_blocks=2, heads=4, d=16, seed=seed)
untrained = Model.init(cfg, 20)
print("GCN init  test", evaluate(untrained, by_test, trials_test).eer)

model, curve = train_second_stage(train, cfg,
                                  TrainHyper(lr=0.01, momentum=0.9, epochs=60, grad_clip=1.0))
print("GCN train60 loss", round(curve[-1], 3))
print("GCN       test", evaluate(model, by_test, trials_test).eer)
print("GCN       train-subset", evaluate(model, by_train, trials_train).eer)

# embedding norms and same-speaker cosine structure
embs = {u.utt_id: embed(model, u.features, u.scene) for u in test[:20]}
norms = [np.linalg.norm(v) for v in embs.values()]
print("emb norms: min %.3g med %.3g max %.3g" % (min(norms), np.median(norms), max(norms)))
