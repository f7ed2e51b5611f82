import sys
import numpy as np

import adhocsv.diffcore as dc
from scratch_common import build
from adhocsv.trainer import Model, ModelConfig, evaluate, generate_trials, _embed_batch

seed = 0
train, test = build(seed, snr=(-15.0, -5.0))
trials = generate_trials(test, 100, 100, np.random.default_rng([seed, 14]))
by_id = {u.utt_id: u for u in test}
mean_eer = evaluate(Model.init(ModelConfig(mechanism="mean", d=16), 20), by_id, trials).eer

cfg = ModelConfig(mechanism="gcn", n_blocks=2, heads=4, d=16, seed=seed)
model = Model.init(cfg, n_speakers=20)
shuffle = np.random.default_rng(np.random.SeedSequence([seed, 1]))
velocity = {p.name: np.zeros_like(p.data) for p in model.params}
lr, mom = 0.005, 0.9
norms = []
for epoch in range(100):
    order = shuffle.permutation(len(train))
    losses = []
    for start in range(0, len(train), 8):
        batch = [train[i] for i in order[start:start + 8]]
        model.params.zero_grad()
        embs = _embed_batch(model, batch)
        logits = dc.add(dc.matmul(embs, model.head_w), model.head_b)
        labels = np.array([b.speaker for b in batch])
        loss = dc.softmax_cross_entropy(logits, labels)
        loss.backward()
        gn = float(np.sqrt(sum(np.sum(p.grad * p.grad) for p in model.params)))
        norms.append(gn)
        for p in model.params:
            v = velocity[p.name]
            v *= mom
            v += p.grad
            p.data -= lr * v
        losses.append(loss.item())
    if epoch % 10 == 9:
        arr = np.array(norms[-250:])
        eer = evaluate(model, by_id, trials).eer
        print(f"ep{epoch+1:3d} loss={np.mean(losses):.2f} eer={eer:.2f} "
              f"gn[med={np.median(arr):.2f} p90={np.percentile(arr, 90):.1f} "
              f"p99={np.percentile(arr, 99):.1f} max={arr.max():.1f}]", flush=True)
