import sys
import numpy as np

import adhocsv.diffcore as dc
from scratch_common import build
from adhocsv.trainer import (Model, ModelConfig, SelectionConfig, evaluate,
                             generate_trials, _embed_batch, _head_logits)


def run(seed, snr, lr, epochs, selection, tail=0):
    train, test = build(seed, snr=snr)
    trials = generate_trials(test, 100, 100, np.random.default_rng([seed, 14]))
    by_id = {u.utt_id: u for u in test}
    mean_eer = evaluate(Model.init(ModelConfig(mechanism="mean", d=16), 20), by_id, trials).eer
    cfg = ModelConfig(mechanism="gcn", n_blocks=2, heads=4, d=16, warm_start=True,
                      selection=selection, seed=seed)
    model = Model.init(cfg, n_speakers=20)
    frozen = [p.name for p in model.params if ".wr" in p.name or ".wv" in p.name]
    shuffle = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    velocity = {p.name: np.zeros_like(p.data) for p in model.params}
    tail_sum = {p.name: np.zeros_like(p.data) for p in model.params}
    tail_n = 0
    losses = []
    for epoch in range(epochs):
        order = shuffle.permutation(len(train))
        ep = []
        for start in range(0, len(train), 8):
            batch = [train[i] for i in order[start:start + 8]]
            model.params.zero_grad()
            embs = _embed_batch(model, batch)
            loss = dc.softmax_cross_entropy(_head_logits(model, embs),
                                            np.array([b.speaker for b in batch]))
            loss.backward()
            for p in model.params:
                if p.name in frozen:
                    continue
                v = velocity[p.name]
                v *= 0.9
                v += p.grad
                p.data -= lr * v
            ep.append(loss.item())
        losses.append(float(np.mean(ep)))
        if tail and epoch >= epochs - tail:
            for p in model.params:
                tail_sum[p.name] += p.data
            tail_n += 1
    if tail_n:
        for p in model.params:
            p.data = tail_sum[p.name] / tail_n
    return mean_eer, evaluate(model, by_id, trials).eer, losses[-1]


snr = tuple(float(x) for x in sys.argv[1].split(","))
lr, epochs, tail = float(sys.argv[2]), int(sys.argv[3]), int(sys.argv[4])
seeds = [int(s) for s in sys.argv[5:]]
wins, gcns, priors, means = 0, [], [], []
for seed in seeds:
    m, g, gl = run(seed, snr, lr, epochs, SelectionConfig(kind="none"), tail)
    _, p, pl = run(seed, snr, lr, epochs, SelectionConfig(kind="prior", rho=0.6), tail)
    wins += g < m
    gcns.append(g); priors.append(p); means.append(m)
    print(f"seed={seed}: MEAN={m:.3f} GCN={g:.3f} (loss {gl:.2f}) PRIOR={p:.3f} "
          f"(loss {pl:.2f}) win={g < m}", flush=True)
print(f"wins={wins}/{len(seeds)} GCN={np.mean(gcns):.3f} PRIOR={np.mean(priors):.3f} "
      f"MEAN={np.mean(means):.3f} prior<=gcn={np.mean(priors) <= np.mean(gcns)}")
