import sys
import numpy as np

import adhocsv.diffcore as dc
from scratch_common import build
from adhocsv.trainer import (Model, ModelConfig, evaluate, generate_trials, _embed_batch)

seed = int(sys.argv[1])
lr = float(sys.argv[2])
epochs = int(sys.argv[3])
train, test = build(seed, snr=(-15.0, -5.0))
trials = generate_trials(test, 100, 100, np.random.default_rng([seed, 14]))
by_id = {u.utt_id: u for u in test}
mean_eer = evaluate(Model.init(ModelConfig(mechanism="mean", d=16), 20), by_id, trials).eer
cfg = ModelConfig(mechanism="gcn", n_blocks=2, heads=4, d=16, warm_start=True, seed=seed)
model = Model.init(cfg, n_speakers=20)
print(f"seed={seed} MEAN={mean_eer:.3f} init={evaluate(model, by_id, trials).eer:.3f}")
shuffle = np.random.default_rng(np.random.SeedSequence([seed, 1]))
velocity = {p.name: np.zeros_like(p.data) for p in model.params}
for epoch in range(epochs):
    order = shuffle.permutation(len(train))
    losses = []
    for start in range(0, len(train), 8):
        batch = [train[i] for i in order[start:start + 8]]
        model.params.zero_grad()
        embs = _embed_batch(model, batch)
        logits = dc.add(dc.matmul(embs, model.head_w), model.head_b)
        loss = dc.softmax_cross_entropy(logits, np.array([b.speaker for b in batch]))
        loss.backward()
        for p in model.params:
            v = velocity[p.name]
            v *= 0.9
            v += p.grad
            p.data -= lr * v
        losses.append(loss.item())
    eer = evaluate(model, by_id, trials).eer
    print(f"ep{epoch+1:3d} loss={np.mean(losses):.3f} eer={eer:.3f} "
          f"{'WIN' if eer < mean_eer else ''}", flush=True)
