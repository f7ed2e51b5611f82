import sys
import numpy as np

import adhocsv.diffcore as dc
from scratch_common import build
from adhocsv.trainer import (Model, ModelConfig, evaluate, generate_trials, _embed_batch)


def run(seed, epochs, clip, tail, decay_at, snr=(-15.0, -5.0)):
    train, test = build(seed, snr=snr)
    trials = generate_trials(test, 100, 100, np.random.default_rng([seed, 14]))
    by_id = {u.utt_id: u for u in test}
    mean_eer = evaluate(Model.init(ModelConfig(mechanism="mean", d=16), 20), by_id, trials).eer
    cfg = ModelConfig(mechanism="gcn", n_blocks=2, heads=4, d=16, seed=seed)
    model = Model.init(cfg, n_speakers=20)
    shuffle = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    velocity = {p.name: np.zeros_like(p.data) for p in model.params}
    lr0, mom = 0.005, 0.9
    tail_sums = {p.name: np.zeros_like(p.data) for p in model.params}
    tail_n = 0
    for epoch in range(epochs):
        lr = lr0 * (0.5 ** sum(1 for d in decay_at if epoch >= d))
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
            if clip and gn > clip:
                for p in model.params:
                    p.grad *= clip / gn
            for p in model.params:
                v = velocity[p.name]
                v *= mom
                v += p.grad
                p.data -= lr * v
            losses.append(loss.item())
        if epoch >= epochs - tail:
            for p in model.params:
                tail_sums[p.name] += p.data
            tail_n += 1
    last_eer = evaluate(model, by_id, trials).eer
    if tail_n:
        for p in model.params:
            p.data = tail_sums[p.name] / tail_n
    avg_eer = evaluate(model, by_id, trials).eer
    return mean_eer, last_eer, avg_eer


mode = sys.argv[1]
seeds = [int(s) for s in sys.argv[2:]]
for seed in seeds:
    if mode == "tail":
        m, last, avg = run(seed, 90, 40.0, 30, ())
    else:
        m, last, avg = run(seed, 90, 40.0, 20, (60, 75))
    print(f"seed={seed}: MEAN={m:.3f} last={last:.3f} tail_avg={avg:.3f} "
          f"win={avg < m}", flush=True)
