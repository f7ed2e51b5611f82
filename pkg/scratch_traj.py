"""Track test EER along the training trajectory."""
import sys
import numpy as np

import adhocsv.diffcore as dc
from scratch_common import build
from adhocsv.trainer import (Model, ModelConfig, SelectionConfig, TrainHyper, evaluate,
                             generate_trials, _embed_batch)

seed = int(sys.argv[1])
snr = tuple(float(x) for x in sys.argv[2].split(","))
lr, mom = float(sys.argv[3]), float(sys.argv[4])
epochs = int(sys.argv[5])
train, test = build(seed, snr=snr)
trials = generate_trials(test, 100, 100, np.random.default_rng([seed, 14]))
by_id = {u.utt_id: u for u in test}
mean_eer = evaluate(Model.init(ModelConfig(mechanism="mean", d=16), 20), by_id, trials).eer
print(f"MEAN={mean_eer:.3f}")

cfg = ModelConfig(mechanism="gcn", n_blocks=2, heads=4, d=16, seed=seed)
model = Model.init(cfg, n_speakers=20)
labels_of = {u.utt_id: u.speaker for u in train}
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
        labels = np.array([b.speaker for b in batch])
        loss = dc.softmax_cross_entropy(logits, labels)
        loss.backward()
        for p in model.params:
            v = velocity[p.name]
            v *= mom
            v += p.grad
            p.data -= lr * v
        losses.append(loss.item())
    if epoch % 5 == 4 or epoch == 0:
        eer = evaluate(model, by_id, trials).eer
        marker = " <<< beats MEAN" if eer < mean_eer else ""
        print(f"epoch {epoch+1:3d} loss={np.mean(losses):.3f} test_eer={eer:.3f}{marker}", flush=True)
