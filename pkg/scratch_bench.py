"""Scratch: timing + ordering check for the end-to-end benchmark."""
import sys
import time

import numpy as np

from adhocsv.scenesim import SimConfig, make_codebook, sample_scene, synth_features
from adhocsv.trainer import (
    ModelConfig, SelectionConfig, TrainHyper, Utterance,
    evaluate, generate_trials, train_second_stage, Model,
)

C, T, D = 8, 20, 16
N_SPK, N_TRAIN, N_TEST = 20, 200, 50


def build_dataset(seed):
    sim = SimConfig(n_nodes=C, d=D, t=T, n_speakers=N_SPK, seed=seed, with_noise_source=True)
    codebook = make_codebook(N_SPK, D, seed=[seed, 10])
    train, test = [], []
    for split_id, (split, count) in enumerate((("train", N_TRAIN), ("test", N_TEST))):
        for i in range(count):
            scene = sample_scene(np.random.default_rng([seed, 11, split_id, i]), sim)
            spk = i % N_SPK
            ft = synth_features(scene, spk, codebook, np.random.default_rng([seed, 12, split_id, i]), sim)
            utt = Utterance(f"{split}_{i}", spk, ft, scene)
            (train if split == "train" else test).append(utt)
    return train, test


def run_system(mechanism, selection, train, test, trials, seed, epochs, lr=1e-2):
    cfg = ModelConfig(mechanism=mechanism, n_blocks=2, heads=4, d=D,
                      selection=selection, seed=seed)
    hyper = TrainHyper(lr=lr, epochs=epochs)
    t0 = time.monotonic()
    model, curve = train_second_stage(train, cfg, hyper)
    t_train = time.monotonic() - t0
    by_id = {u.utt_id: u for u in test}
    t0 = time.monotonic()
    report = evaluate(model, by_id, trials)
    t_eval = time.monotonic() - t0
    return report.eer, curve[-1] if curve else float("nan"), t_train, t_eval


def main():
    epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 15
    seeds = [int(s) for s in sys.argv[2:]] or [0, 1]
    total0 = time.monotonic()
    results = {}
    for seed in seeds:
        t0 = time.monotonic()
        train, test = build_dataset(seed)
        t_data = time.monotonic() - t0
        trials = generate_trials(test, 100, 100, np.random.default_rng([seed, 14]))
        row = {}
        for name, mech, sel, ep in (
            ("mean", "mean", SelectionConfig(kind="none"), epochs),
            ("gcn", "gcn", SelectionConfig(kind="none"), epochs),
            ("gcn+prior", "gcn", SelectionConfig(kind="prior", rho=0.6), epochs),
        ):
            eer, loss, t_train, t_eval = run_system(mech, sel, train, test, trials, seed, ep)
            row[name] = eer
            print(f"seed={seed} {name:10s} eer={eer:.4f} final_loss={loss:.4f} "
                  f"train={t_train:.1f}s eval={t_eval:.1f}s data={t_data:.1f}s", flush=True)
        results[seed] = row
    print(f"TOTAL {time.monotonic() - total0:.1f}s")
    for seed, row in results.items():
        ok = row["gcn"] < row["mean"]
        print(f"seed={seed} mean={row['mean']:.4f} gcn={row['gcn']:.4f} "
              f"prior={row['gcn+prior']:.4f} gcn<mean={ok}")
    mg = np.mean([r["gcn"] for r in results.values()])
    mp = np.mean([r["gcn+prior"] for r in results.values()])
    print(f"mean gcn={mg:.4f} mean prior={mp:.4f} prior<=gcn={mp <= mg}")


if __name__ == "__main__":
    main()
