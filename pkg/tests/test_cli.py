"""End-to-end command behavior: artifacts, determinism, exit codes."""

import json
import os

import numpy as np
import pytest

from adhocsv.cli import main
from adhocsv.scenesim import Scene, read_features, save_scene
from adhocsv.stagg import load_checkpoint
from adhocsv.trainer import read_trials_csv

TINY_CONFIG = {
    "seed": 7,
    "sim": {
        "n_speakers": 4,
        "n_train": 12,
        "n_test": 8,
        "n_nodes": 4,
        "t": 6,
        "d": 8,
        "t60": [0.2, 0.5],
        "snr_db": [0.0, 20.0],
        "noise_source": True,
    },
    "model": {
        "mechanism": "gcn",
        "n_blocks": 1,
        "heads": 2,
        "selection": {"kind": "none"},
    },
    "train": {"epochs": 2, "batch_size": 8, "lr": 0.01},
    "eval": {"n_target": 12, "n_nontarget": 12},
}


@pytest.fixture()
def config_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(TINY_CONFIG))
    return str(path)


def tree_bytes(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for name in files:
            full = os.path.join(dirpath, name)
            out[os.path.relpath(full, root)] = open(full, "rb").read()
    return out


def line_scene_file(tmp_path, distances):
    speaker = np.array([1.0, 7.0, 2.0])
    nodes = np.array([speaker + [d, 0.0, 0.0] for d in distances])
    scene = Scene(room=(10.0, 14.0, 5.0), speaker_pos=speaker,
                  speaker_facing=np.array([1.0, 0.0, 0.0]),
                  noise_pos=np.array([1.5, 7.0, 2.0]), node_pos=nodes,
                  t60=0.3, snr_db=10.0)
    path = tmp_path / "scene.json"
    save_scene(path, scene)
    return str(path)


class TestSimulate:
    def test_writes_expected_artifacts(self, tmp_path, config_path):
        out = tmp_path / "data"
        assert main(["simulate", "--config", config_path, "--out", str(out), "--quiet"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["utterances"]) == 20
        splits = [u["split"] for u in manifest["utterances"]]
        assert splits.count("train") == 12 and splits.count("test") == 8
        first = manifest["utterances"][0]
        ft = read_features(out / first["features"])
        assert (ft.c, ft.t, ft.d) == (4, 6, 8)
        assert (out / first["scene"]).exists()

    def test_default_node_count_is_forty(self, tmp_path):
        cfg = dict(TINY_CONFIG)
        cfg["sim"] = {k: v for k, v in TINY_CONFIG["sim"].items() if k != "n_nodes"}
        cfg["sim"]["n_train"], cfg["sim"]["n_test"] = 1, 1
        path = tmp_path / "c.json"
        path.write_text(json.dumps(cfg))
        out = tmp_path / "data"
        assert main(["simulate", "--config", str(path), "--out", str(out), "--quiet"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        ft = read_features(out / manifest["utterances"][0]["features"])
        assert ft.c == 40

    def test_byte_identical_reruns(self, tmp_path, config_path):
        out1, out2 = tmp_path / "d1", tmp_path / "d2"
        for out in (out1, out2):
            assert main(["simulate", "--config", config_path, "--out", str(out), "--quiet"]) == 0
        assert tree_bytes(out1) == tree_bytes(out2)

    def test_unknown_config_key_rejected_before_writing(self, tmp_path):
        bad = dict(TINY_CONFIG)
        bad["typo_section"] = {}
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(bad))
        out = tmp_path / "data"
        assert main(["simulate", "--config", str(path), "--out", str(out), "--quiet"]) == 2
        assert not out.exists()

    def test_seed_flag_overrides(self, tmp_path, config_path):
        out1, out2 = tmp_path / "d1", tmp_path / "d2"
        assert main(["simulate", "--config", config_path, "--out", str(out1),
                     "--seed", "99", "--quiet"]) == 0
        assert main(["simulate", "--config", config_path, "--out", str(out2), "--quiet"]) == 0
        assert tree_bytes(out1) != tree_bytes(out2)


class TestTrainEval:
    @pytest.fixture()
    def dataset(self, tmp_path, config_path):
        out = tmp_path / "data"
        main(["simulate", "--config", config_path, "--out", str(out), "--quiet"])
        return str(out)

    def test_train_writes_checkpoint_and_loss_curve(self, tmp_path, config_path, dataset):
        run = tmp_path / "run"
        assert main(["train", "--config", config_path, "--data", dataset,
                     "--out", str(run), "--quiet"]) == 0
        manifest, values = load_checkpoint(run / "model.ckpt")
        assert manifest["config"]["mechanism"] == "gcn"
        assert values
        lines = (run / "loss.csv").read_text().strip().splitlines()
        assert lines[0] == "epoch,mean_loss"
        assert len(lines) == 3  # header + 2 epochs

    def test_train_deterministic(self, tmp_path, config_path, dataset):
        r1, r2 = tmp_path / "r1", tmp_path / "r2"
        for run in (r1, r2):
            assert main(["train", "--config", config_path, "--data", dataset,
                         "--out", str(run), "--quiet"]) == 0
        assert (r1 / "model.ckpt").read_bytes() == (r2 / "model.ckpt").read_bytes()
        assert (r1 / "loss.csv").read_bytes() == (r2 / "loss.csv").read_bytes()

    def test_resume_reuses_matching_checkpoint(self, tmp_path, config_path, dataset):
        run = tmp_path / "run"
        main(["train", "--config", config_path, "--data", dataset, "--out", str(run), "--quiet"])
        before = (run / "model.ckpt").read_bytes()
        assert main(["train", "--config", config_path, "--data", dataset,
                     "--out", str(run), "--resume", "--quiet"]) == 0
        assert (run / "model.ckpt").read_bytes() == before

    def test_mean_baseline_checkpoint_has_only_head(self, tmp_path, dataset):
        cfg = dict(TINY_CONFIG)
        cfg["model"] = {"mechanism": "mean"}
        path = tmp_path / "mean.json"
        path.write_text(json.dumps(cfg))
        run = tmp_path / "run"
        assert main(["train", "--config", str(path), "--data", dataset,
                     "--out", str(run), "--quiet"]) == 0
        _, values = load_checkpoint(run / "model.ckpt")
        assert sorted(values) == ["head.b", "head.w"]

    def test_eval_report_and_determinism(self, tmp_path, config_path, dataset):
        run = tmp_path / "run"
        main(["train", "--config", config_path, "--data", dataset, "--out", str(run), "--quiet"])
        e1, e2 = tmp_path / "e1", tmp_path / "e2"
        for out in (e1, e2):
            assert main(["eval", "--config", config_path, "--ckpt", str(run / "model.ckpt"),
                         "--data", dataset, "--out", str(out), "--quiet"]) == 0
        report = json.loads((e1 / "report.json").read_text())
        assert set(report) == {"eer", "threshold", "n_trials"}
        assert report["n_trials"] == 24
        assert 0.0 <= report["eer"] <= 1.0
        assert tree_bytes(e1) == tree_bytes(e2)
        trials = read_trials_csv(e1 / "trials.csv")
        assert len(trials.trials) == 24

    def test_eval_channel_subsampling(self, tmp_path, config_path, dataset):
        run = tmp_path / "run"
        main(["train", "--config", config_path, "--data", dataset, "--out", str(run), "--quiet"])
        out = tmp_path / "eval"
        assert main(["eval", "--config", config_path, "--ckpt", str(run / "model.ckpt"),
                     "--data", dataset, "--out", str(out), "--channels", "2", "--quiet"]) == 0
        assert (out / "report.json").exists()
        too_many = main(["eval", "--config", config_path, "--ckpt", str(run / "model.ckpt"),
                         "--data", dataset, "--out", str(tmp_path / "e3"),
                         "--channels", "9", "--quiet"])
        assert too_many == 3

    def test_eval_per_node_and_selection_dump(self, tmp_path, config_path, dataset):
        run = tmp_path / "run"
        main(["train", "--config", config_path, "--data", dataset, "--out", str(run), "--quiet"])
        out = tmp_path / "eval"
        assert main(["eval", "--config", config_path, "--ckpt", str(run / "model.ckpt"),
                     "--data", dataset, "--out", str(out), "--per-node",
                     "--dump-selection", "--quiet"]) == 0
        lines = (out / "per_node.csv").read_text().strip().splitlines()
        assert lines[0] == "node,x,y,z,distance,eer"
        assert len(lines) == 1 + 4  # header + one row per node
        selection = json.loads((out / "selection.json").read_text())
        assert len(selection) == 8
        assert all(s["mechanism"] == "none" for s in selection)

    def test_eval_missing_checkpoint(self, tmp_path, config_path, dataset):
        assert main(["eval", "--config", config_path, "--ckpt", str(tmp_path / "nope.ckpt"),
                     "--data", dataset, "--out", str(tmp_path / "e"), "--quiet"]) == 3

    def test_train_missing_data(self, tmp_path, config_path):
        assert main(["train", "--config", config_path, "--data", str(tmp_path / "absent"),
                     "--out", str(tmp_path / "run"), "--quiet"]) == 3


class TestGraphCommand:
    def test_complete_graph_json(self, capsys):
        assert main(["graph", "--kind", "complete", "--n", "3"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["adjacency"]["n"] == 3
        assert doc["adjacency"]["rows"] == ["111", "111", "111"]
        assert doc["mask"] is None

    def test_span_graph(self, capsys):
        assert main(["graph", "--kind", "span", "--n", "4", "--delta", "0"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["adjacency"]["rows"] == ["1000", "0100", "0010", "0001"]

    def test_prior_forced_mask(self, tmp_path, capsys):
        scene = line_scene_file(tmp_path, [1.0, 2.0, 3.0, 4.0])
        assert main(["graph", "--kind", "prior", "--scene", scene, "--rho", "0.6"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["mask"]["bits"] == "1100"
        assert doc["mask"]["selected_indices"] == [0, 1]

    def test_prior_with_orientation_and_noise_composes(self, tmp_path, capsys):
        # Noise sits on node 0 (distance 0.5 from speaker along +x), so the
        # noise mask must drop it; orientation keeps all (+x facing).
        speaker = np.array([1.0, 7.0, 2.0])
        nodes = np.array([speaker + [0.5, 0.0, 0.0], speaker + [1.0, 0.0, 0.0],
                          speaker + [2.0, 0.0, 0.0], speaker + [6.0, 0.0, 0.0]])
        scene = Scene(room=(10.0, 14.0, 5.0), speaker_pos=speaker,
                      speaker_facing=np.array([1.0, 0.0, 0.0]),
                      noise_pos=nodes[0].copy(), node_pos=nodes, t60=0.3, snr_db=10.0)
        path = tmp_path / "scene.json"
        save_scene(path, scene)
        assert main(["graph", "--kind", "prior", "--scene", str(path), "--rho", "0.6",
                     "--orientation", "--noise-rho", "0.2"]) == 0
        doc = json.loads(capsys.readouterr().out)
        from adhocsv.graphs import apply_noise_mask, apply_orientation_mask, build_prior

        _, mask = build_prior(scene, 0.6)
        mask = apply_orientation_mask(mask, scene)
        mask = apply_noise_mask(mask, scene, 0.2)
        assert doc["mask"]["selected_indices"] == [int(i) for i in mask.indices()]
        assert 0 not in doc["mask"]["selected_indices"]

    def test_knn_graph(self, tmp_path, capsys):
        scene = line_scene_file(tmp_path, [1.0, 2.0, 3.0, 4.0])
        assert main(["graph", "--kind", "knn", "--scene", scene, "--k", "1"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["adjacency"]["rows"][0] == "1100"

    def test_graph_writes_file_with_out(self, tmp_path):
        out = tmp_path / "g"
        assert main(["graph", "--kind", "complete", "--n", "2", "--out", str(out),
                     "--quiet"]) == 0
        doc = json.loads((out / "graph.json").read_text())
        assert doc["adjacency"]["rows"] == ["11", "11"]

    def test_missing_scene_is_config_error(self):
        assert main(["graph", "--kind", "prior", "--rho", "0.5"]) == 2


class TestReportCommand:
    def test_aggregates(self, tmp_path, capsys):
        for i, eer in enumerate([0.1, 0.2, 0.3]):
            (tmp_path / f"r{i}.json").write_text(json.dumps(
                {"eer": eer, "threshold": 0.5, "n_trials": 10}))
        inputs = [str(tmp_path / f"r{i}.json") for i in range(3)]
        assert main(["report", *inputs]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["n_reports"] == 3
        assert abs(doc["mean_eer"] - 0.2) < 1e-12
        assert doc["min_eer"] == 0.1 and doc["max_eer"] == 0.3

    def test_missing_report_is_data_error(self, tmp_path):
        assert main(["report", str(tmp_path / "absent.json"), "--quiet"]) == 3


def test_missing_config_is_config_error(tmp_path):
    assert main(["simulate", "--out", str(tmp_path / "d"), "--quiet"]) == 2
    assert main(["simulate", "--config", str(tmp_path / "absent.json"),
                 "--out", str(tmp_path / "d"), "--quiet"]) == 2
