import sys
import numpy as np

import adhocsv.diffcore as dc
from scratch_common import build
from adhocsv.trainer import (Model, ModelConfig, evaluate, generate_trials, _embed_batch)


def run(seed, lr, vscale, epochs, snr=(-15.0, -5.0), probe=()):
    train, test = build(seed, snr=snr)
    trials = generate_trials(test, 100, 100, np.random.default_rng([seed, 14]))
    by_id = {u.utt_id: u for u in test}
    mean_eer = evaluate(Model.init(ModelConfig(mechanism="mean", d=16), 20), by_id, trials).eer
    cfg = ModelConfig(mechanism="gcn", n_blocks=2, heads=4, d=16, warm_start=True, seed=seed)
    model = Model.init(cfg, n_speakers=20)
    lr_of = {p.name: lr * (vscale if (".wr" in p.name or ".wv" in p.name) else 1.0)
             for p in model.params}
    shuffle = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    velocity = {p.name: np.zeros_like(p.data) for p in model.params}
    losses = []
    for epoch in range(epochs):
        order = shuffle.permutation(len(train))
        ep_losses = []
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
                p.data -= lr_of[p.name] * v
            ep_losses.append(loss.item())
        losses.append(float(np.mean(ep_losses)))
        if epoch + 1 in probe:
            eer = evaluate(model, by_id, trials).eer
            print(f"  ep{epoch+1} loss={losses[-1]:.2f} eer={eer:.3f}", flush=True)
    eer = evaluate(model, by_id, trials).eer
    return mean_eer, eer, losses[-1]


seed = int(sys.argv[1])
for vscale in (0.0, 0.1):
    for lr in (0.005, 0.01):
        m, e, l = run(seed, lr, vscale, 30)
        print(f"seed={seed} vscale={vscale} lr={lr}: MEAN={m:.3f} GCN={e:.3f} "
              f"loss={l:.2f} win={e < m}", flush=True)
