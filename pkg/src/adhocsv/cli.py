"""Command-line entry point for reproducible experiments.

Subcommands: simulate (scenes + synthetic features), graph (adjacency
construction from a scene), train (second-stage training), eval
(verification report), report (aggregate eval reports).  Every command is
deterministic given (config, seed); outputs are written atomically.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .chansel import DegenerateProjectionError
from .diffcore import NonFiniteError
from .graphs import (
    adjacency_to_json,
    apply_noise_mask,
    apply_orientation_mask,
    build_complete,
    build_knn,
    build_prior,
    build_temporal_span,
    adjacency_from_mask,
)
from .scenesim import (
    SimConfig,
    load_scene,
    make_codebook,
    read_features,
    sample_scene,
    save_scene,
    synth_features,
    write_features,
)
from .trainer import (
    DegenerateTaskError,
    MissingPriorError,
    ModelConfig,
    ProtocolError,
    TrainHyper,
    TrialSet,
    Utterance,
    eval_per_node,
    evaluate,
    generate_trials,
    load_model,
    model_config_from_json,
    model_config_to_json,
    read_trials_csv,
    save_model,
    subsample_channels,
    train_second_stage,
    write_trials_csv,
)

__all__ = ["main", "ConfigError", "DataError", "ExperimentConfig", "load_experiment_config"]


class ConfigError(Exception):
    """Invalid or malformed experiment configuration."""


class DataError(Exception):
    """Missing or malformed data artifacts."""


@dataclass(frozen=True)
class EvalSpec:
    n_target: int = 100
    n_nontarget: int = 100
    channels: int | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    sim: SimConfig
    n_train: int
    n_test: int
    shared_scene: bool
    model: ModelConfig
    train: TrainHyper
    train_channels: int | None
    eval: EvalSpec = field(default_factory=EvalSpec)


def _check_keys(doc: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {unknown}")


def _pair(doc, key, default, where):
    value = doc.get(key, default)
    if (not isinstance(value, (list, tuple))) or len(value) != 2:
        raise ConfigError(f"{where}.{key} must be a [low, high] pair")
    return float(value[0]), float(value[1])


def load_experiment_config(path, seed_override: int | None = None) -> ExperimentConfig:
    """Parse and strictly validate an experiment configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except FileNotFoundError as err:
        raise ConfigError(f"config file not found: {path}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from err

    _check_keys(doc, {"seed", "sim", "model", "train", "eval"}, "config")
    seed = int(doc.get("seed", 0)) if seed_override is None else int(seed_override)

    sim_doc = dict(doc.get("sim", {}))
    _check_keys(sim_doc, {"n_speakers", "n_train", "n_test", "n_nodes", "t", "d", "room",
                          "t60", "snr_db", "noise_source", "shared_scene", "base_sigma"},
                "config.sim")
    room = dict(sim_doc.get("room", {}))
    _check_keys(room, {"width", "length", "height"}, "config.sim.room")
    try:
        sim = SimConfig(
            n_nodes=int(sim_doc.get("n_nodes", 40)),
            width_range=_pair(room, "width", (8.0, 10.0), "config.sim.room"),
            length_range=_pair(room, "length", (12.0, 14.0), "config.sim.room"),
            height_range=_pair(room, "height", (3.0, 5.0), "config.sim.room"),
            t60_range=_pair(sim_doc, "t60", (0.2, 0.5), "config.sim"),
            snr_range_db=_pair(sim_doc, "snr_db", (-5.0, 20.0), "config.sim"),
            with_noise_source=bool(sim_doc.get("noise_source", True)),
            d=int(sim_doc.get("d", 16)),
            t=int(sim_doc.get("t", 20)),
            n_speakers=int(sim_doc.get("n_speakers", 20)),
            seed=seed,
            base_sigma=float(sim_doc.get("base_sigma", 0.2)),
        )
    except ValueError as err:
        raise ConfigError(f"invalid sim section: {err}") from err

    model_doc = dict(doc.get("model", {}))
    _check_keys(model_doc, {"mechanism", "n_blocks", "heads", "d", "selection",
                            "temporal_graph", "spatial_graph", "leaky_slope"}, "config.model")
    _check_keys(dict(model_doc.get("selection", {})),
                {"kind", "k", "rho", "orientation", "noise", "rho_noise"}, "config.model.selection")
    for g in ("temporal_graph", "spatial_graph"):
        _check_keys(dict(model_doc.get(g, {})), {"kind", "delta", "k"}, f"config.model.{g}")
    model_doc.setdefault("d", sim.d)
    model_doc["seed"] = seed
    try:
        model = model_config_from_json(model_doc)
    except ValueError as err:
        raise ConfigError(f"invalid model section: {err}") from err
    if model.d != sim.d:
        raise ConfigError(f"model.d={model.d} must equal sim.d={sim.d}")

    train_doc = dict(doc.get("train", {}))
    _check_keys(train_doc, {"lr", "momentum", "batch_size", "epochs", "channels"}, "config.train")
    hyper = TrainHyper(
        lr=float(train_doc.get("lr", 1e-2)),
        momentum=float(train_doc.get("momentum", 0.9)),
        batch_size=int(train_doc.get("batch_size", 8)),
        epochs=int(train_doc.get("epochs", 30)),
    )
    train_channels = train_doc.get("channels")
    if train_channels is not None:
        train_channels = int(train_channels)

    eval_doc = dict(doc.get("eval", {}))
    _check_keys(eval_doc, {"n_target", "n_nontarget", "channels"}, "config.eval")
    eval_spec = EvalSpec(
        n_target=int(eval_doc.get("n_target", 100)),
        n_nontarget=int(eval_doc.get("n_nontarget", 100)),
        channels=None if eval_doc.get("channels") is None else int(eval_doc["channels"]),
    )

    return ExperimentConfig(
        seed=seed,
        sim=sim,
        n_train=int(sim_doc.get("n_train", 64)),
        n_test=int(sim_doc.get("n_test", 32)),
        shared_scene=bool(sim_doc.get("shared_scene", False)),
        model=model,
        train=hyper,
        train_channels=train_channels,
        eval=eval_spec,
    )


def _atomic_write_bytes(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_json(path: str, doc) -> None:
    _atomic_write_bytes(path, (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode("utf-8"))


def _say(quiet: bool, message: str) -> None:
    if not quiet:
        print(message)


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    cfg = load_experiment_config(args.config, args.seed)
    out = args.out
    if out is None:
        raise ConfigError("simulate needs --out DIR")
    os.makedirs(os.path.join(out, "scenes"), exist_ok=True)
    os.makedirs(os.path.join(out, "features"), exist_ok=True)

    codebook = make_codebook(cfg.sim.n_speakers, cfg.sim.d, seed=[cfg.seed, 10])
    shared = sample_scene(np.random.default_rng([cfg.seed, 11]), cfg.sim) if cfg.shared_scene else None

    entries = []
    counters = {"train": 0, "test": 0}
    for split, count in (("train", cfg.n_train), ("test", cfg.n_test)):
        for i in range(count):
            utt_id = f"utt_{split}_{counters[split]:05d}"
            counters[split] += 1
            speaker = i % cfg.sim.n_speakers
            scene = shared if shared is not None else sample_scene(
                np.random.default_rng([cfg.seed, 11, 0 if split == "train" else 1, i]), cfg.sim)
            rng = np.random.default_rng([cfg.seed, 12, 0 if split == "train" else 1, i])
            features = synth_features(scene, speaker, codebook, rng, cfg.sim)
            scene_rel = os.path.join("scenes", f"{utt_id}.json")
            feat_rel = os.path.join("features", f"{utt_id}.adhc")
            save_scene(os.path.join(out, scene_rel), scene)
            write_features(os.path.join(out, feat_rel), features)
            entries.append({"id": utt_id, "speaker": speaker, "split": split,
                            "scene": scene_rel, "features": feat_rel})
    manifest = {"seed": cfg.seed, "n_speakers": cfg.sim.n_speakers, "d": cfg.sim.d,
                "t": cfg.sim.t, "n_nodes": cfg.sim.n_nodes, "utterances": entries}
    _atomic_write_json(os.path.join(out, "manifest.json"), manifest)
    _say(args.quiet, f"wrote {len(entries)} utterances to {out}")
    return 0


# ---------------------------------------------------------------------------
# dataset loading


def _load_dataset(data_dir: str, split: str, channels: int | None, seed: int) -> list[Utterance]:
    manifest_path = os.path.join(data_dir, "manifest.json")
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except FileNotFoundError as err:
        raise DataError(f"no manifest at {manifest_path}") from err
    except json.JSONDecodeError as err:
        raise DataError(f"malformed manifest: {err}") from err

    utterances = []
    for i, entry in enumerate(manifest.get("utterances", [])):
        if entry.get("split") != split:
            continue
        try:
            features = read_features(os.path.join(data_dir, entry["features"]))
            scene = load_scene(os.path.join(data_dir, entry["scene"]))
        except (FileNotFoundError, ValueError, KeyError) as err:
            raise DataError(f"cannot load utterance {entry.get('id')!r}: {err}") from err
        utt = Utterance(utt_id=entry["id"], speaker=int(entry["speaker"]),
                        features=features, scene=scene)
        if channels is not None:
            if channels > features.c:
                raise DataError(f"cannot subsample {channels} of {features.c} channels")
            utt = subsample_channels(utt, channels, np.random.default_rng([seed, 13, i]))
        utterances.append(utt)
    if not utterances:
        raise DataError(f"no {split!r} utterances in {data_dir}")
    return utterances


# ---------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    cfg = load_experiment_config(args.config, args.seed)
    if args.out is None:
        raise ConfigError("train needs --out DIR")
    os.makedirs(args.out, exist_ok=True)
    ckpt_path = os.path.join(args.out, "model.ckpt")
    loss_path = os.path.join(args.out, "loss.csv")

    if args.resume and os.path.exists(ckpt_path):
        from .stagg import load_checkpoint

        manifest, _ = load_checkpoint(ckpt_path)
        if manifest.get("config") == model_config_to_json(cfg.model):
            _say(args.quiet, f"checkpoint {ckpt_path} already matches config; nothing to do")
            return 0
        raise DataError(f"existing checkpoint {ckpt_path} was trained with a different config")

    dataset = _load_dataset(args.data, "train", cfg.train_channels, cfg.seed)
    model, curve = train_second_stage(dataset, cfg.model, cfg.train)

    tmp = ckpt_path + ".tmp"
    save_model(tmp, model)
    os.replace(tmp, ckpt_path)
    lines = ["epoch,mean_loss"] + [f"{i},{loss!r}" for i, loss in enumerate(curve)]
    _atomic_write_bytes(loss_path, ("\n".join(lines) + "\n").encode("utf-8"))
    _say(args.quiet, f"trained {cfg.model.mechanism} for {cfg.train.epochs} epochs; "
                     f"final loss {curve[-1]:.4f}; wrote {ckpt_path}")
    return 0


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    cfg = load_experiment_config(args.config, args.seed)
    if args.out is None:
        raise ConfigError("eval needs --out DIR")
    os.makedirs(args.out, exist_ok=True)
    try:
        model = load_model(args.ckpt)
    except FileNotFoundError as err:
        raise DataError(f"checkpoint not found: {args.ckpt}") from err
    except ValueError as err:
        raise DataError(f"cannot load checkpoint: {err}") from err

    channels = args.channels if args.channels is not None else cfg.eval.channels
    utterances = _load_dataset(args.data, "test", channels, cfg.seed)
    by_id = {u.utt_id: u for u in utterances}

    if args.trials is not None:
        try:
            trials = read_trials_csv(args.trials)
        except (FileNotFoundError, ValueError) as err:
            raise DataError(f"cannot read trials: {err}") from err
    else:
        trials = generate_trials(utterances, cfg.eval.n_target, cfg.eval.n_nontarget,
                                 np.random.default_rng([cfg.seed, 14]))
        write_trials_csv(os.path.join(args.out, "trials.csv"), trials)

    try:
        report = evaluate(model, by_id, trials)
    except KeyError as err:
        raise DataError(str(err)) from err

    _atomic_write_json(os.path.join(args.out, "report.json"),
                       {"eer": report.eer, "threshold": report.threshold,
                        "n_trials": report.n_trials})

    if args.dump_selection:
        from .trainer import embed_with_info

        selection = []
        for u in utterances:
            _, info = embed_with_info(model, u.features, u.scene)
            selection.append({"id": u.utt_id, **info})
        _atomic_write_json(os.path.join(args.out, "selection.json"), selection)

    if args.per_node:
        rows = eval_per_node(model, by_id, trials)
        lines = ["node,x,y,z,distance,eer"]
        lines += [f"{r['node']},{r['x']!r},{r['y']!r},{r['z']!r},{r['distance']!r},{r['eer']!r}"
                  for r in rows]
        _atomic_write_bytes(os.path.join(args.out, "per_node.csv"),
                            ("\n".join(lines) + "\n").encode("utf-8"))

    _say(args.quiet, f"eer={report.eer:.4f} threshold={report.threshold:.4f} "
                     f"n_trials={report.n_trials}")
    return 0


# ---------------------------------------------------------------------------
# graph


def cmd_graph(args) -> int:
    scene = None
    if args.scene is not None:
        try:
            scene = load_scene(args.scene)
        except FileNotFoundError as err:
            raise DataError(f"scene not found: {args.scene}") from err
        except (ValueError, KeyError) as err:
            raise DataError(f"malformed scene: {err}") from err

    mask_doc = None
    if args.kind == "complete":
        if args.n is None:
            raise ConfigError("complete graph needs --n")
        adjacency = build_complete(args.n)
    elif args.kind == "span":
        if args.n is None:
            raise ConfigError("span graph needs --n (frame count)")
        adjacency = build_temporal_span(args.n, args.delta)
    elif args.kind == "knn":
        if scene is None:
            raise ConfigError("knn graph needs --scene")
        adjacency = build_knn(scene.node_pos, args.k)
    elif args.kind == "prior":
        if scene is None:
            raise ConfigError("prior graph needs --scene")
        try:
            adjacency, mask = build_prior(scene, args.rho)
            if args.orientation:
                mask = apply_orientation_mask(mask, scene)
            if args.noise_rho is not None:
                mask = apply_noise_mask(mask, scene, args.noise_rho)
            if args.orientation or args.noise_rho is not None:
                adjacency = adjacency_from_mask(mask)
        except ValueError as err:
            raise ConfigError(str(err)) from err
        mask_doc = {"selected_indices": [int(i) for i in mask.indices()],
                    "bits": "".join("1" if x else "0" for x in mask.selected),
                    "k": mask.k}
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown graph kind {args.kind!r}")

    doc = {"adjacency": adjacency_to_json(adjacency), "mask": mask_doc}
    if args.out is not None:
        os.makedirs(args.out, exist_ok=True)
        _atomic_write_json(os.path.join(args.out, "graph.json"), doc)
        _say(args.quiet, f"wrote {os.path.join(args.out, 'graph.json')}")
    else:
        print(json.dumps(doc, sort_keys=True, indent=2))
    return 0


# ---------------------------------------------------------------------------
# report


def cmd_report(args) -> int:
    reports = []
    for path in args.inputs:
        try:
            with open(path, "r", encoding="utf-8") as f:
                doc = json.load(f)
            reports.append({"path": path, "eer": float(doc["eer"])})
        except (FileNotFoundError, json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
            raise DataError(f"cannot read report {path}: {err}") from err
    eers = [r["eer"] for r in reports]
    summary = {
        "n_reports": len(reports),
        "mean_eer": float(np.mean(eers)),
        "min_eer": float(np.min(eers)),
        "max_eer": float(np.max(eers)),
        "reports": reports,
    }
    if args.out is not None:
        os.makedirs(args.out, exist_ok=True)
        _atomic_write_json(os.path.join(args.out, "summary.json"), summary)
        _say(args.quiet, f"mean eer {summary['mean_eer']:.4f} over {len(reports)} reports")
    else:
        print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config JSON")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    parser = argparse.ArgumentParser(prog="adhocsv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate scenes and features")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("graph", parents=[common], help="build an adjacency from a scene")
    p.add_argument("--scene", help="scene JSON file")
    p.add_argument("--kind", choices=["complete", "span", "knn", "prior"], required=True)
    p.add_argument("--n", type=int, help="node/frame count for complete and span")
    p.add_argument("--delta", type=int, default=1, help="span half-window")
    p.add_argument("--k", type=int, default=4, help="neighbor count for knn")
    p.add_argument("--rho", type=float, default=0.6, help="prior distance-ratio threshold")
    p.add_argument("--orientation", action="store_true", help="also mask nodes behind the speaker")
    p.add_argument("--noise-rho", type=float, default=None,
                   help="also mask nodes with noise-distance ratio below this value")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("train", parents=[common], help="train the channel-fusion model")
    p.add_argument("--data", required=True, help="simulated dataset directory")
    p.add_argument("--resume", action="store_true",
                   help="reuse an existing checkpoint trained with the same config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="score trials and report the EER")
    p.add_argument("--ckpt", required=True, help="model checkpoint")
    p.add_argument("--data", required=True, help="simulated dataset directory")
    p.add_argument("--trials", default=None, help="trials CSV (default: generate from config)")
    p.add_argument("--channels", type=int, default=None, help="subsample this many channels")
    p.add_argument("--per-node", action="store_true", help="write single-channel EER per node")
    p.add_argument("--dump-selection", action="store_true", help="write per-utterance selection")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[common], help="aggregate eval reports")
    p.add_argument("inputs", nargs="+", help="report JSON files")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "config", None) is None and args.command in ("simulate", "train", "eval"):
            raise ConfigError(f"{args.command} needs --config")
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except (DataError, ProtocolError, DegenerateTaskError, MissingPriorError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return 3
    except (NonFiniteError, DegenerateProjectionError, FloatingPointError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
