"""Second-stage training and verification scoring.

The trainable system = spatial-temporal aggregation stack, optional
channel selection, average pooling, and a linear softmax classifier over
speakers.  Frame-level features are frozen inputs.  Verification scores
utterance-embedding pairs with cosine similarity and reports the equal
error rate from a full threshold sweep.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import diffcore as dc
from .chansel import GPoolParams, gpool, init_gpool_params, prior_select, utterance_pool
from .diffcore import NonFiniteError, Parameter, ParamSet, Tensor
from .graphs import (
    Adjacency,
    SelectionMask,
    adjacency_from_mask,
    apply_noise_mask,
    apply_orientation_mask,
    build_knn,
    build_prior,
)
from .scenesim import Scene
from .stagg import (
    BlockParams,
    FrameTensor,
    GraphSpec,
    StackConfig,
    build_graph,
    gcn_agg,
    init_stack_params,
    load_checkpoint,
    sam_agg,
    save_checkpoint,
    st_stack,
)

__all__ = [
    "SelectionConfig",
    "ModelConfig",
    "Model",
    "TrainHyper",
    "Utterance",
    "Trial",
    "TrialSet",
    "EvalReport",
    "ProtocolError",
    "DegenerateTaskError",
    "MissingPriorError",
    "train_second_stage",
    "embed",
    "embed_with_info",
    "cosine_score",
    "eer_from_scores",
    "compute_eer",
    "evaluate",
    "generate_trials",
    "subsample_channels",
    "read_trials_csv",
    "write_trials_csv",
    "model_config_to_json",
    "model_config_from_json",
    "save_model",
    "load_model",
]

MECHANISMS = ("sam", "gcn", "mean")
SELECTION_KINDS = ("none", "gpool", "prior")


class ProtocolError(ValueError):
    """The trial set cannot support the requested evaluation."""


class DegenerateTaskError(ValueError):
    """The training task is ill-posed (fewer than two speakers)."""


class MissingPriorError(ValueError):
    """Geometry-based selection was requested without a scene."""


@dataclass(frozen=True)
class SelectionConfig:
    kind: str = "none"
    k: int | None = None  # gpool channel budget; None means ceil(C / 2)
    rho: float = 0.6
    orientation: bool = False
    noise: bool = False
    rho_noise: float = 0.2
    pool_all: bool = False  # prior only: restrict the graph but pool every channel

    def __post_init__(self):
        if self.kind not in SELECTION_KINDS:
            raise ValueError(f"unknown selection kind {self.kind!r}")
        if self.kind == "prior" and not 0.0 < self.rho <= 1.0:
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")
        if self.k is not None and self.k < 1:
            raise ValueError("gpool k must be positive")


@dataclass(frozen=True)
class ModelConfig:
    mechanism: str = "gcn"
    n_blocks: int = 2
    heads: int = 4
    d: int = 16
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    temporal_graph: GraphSpec = field(default_factory=GraphSpec)
    spatial_graph: GraphSpec = field(default_factory=GraphSpec)
    leaky_slope: float = 0.2
    warm_start: bool = False  # value-path identity init (mirrors stage-1 warm start)
    head: str = "linear"  # "linear" or "cosine" (normalized, fixed-scale) classifier
    head_scale: float = 10.0  # logit scale for the cosine head
    seed: int = 0

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if self.head not in ("linear", "cosine"):
            raise ValueError(f"unknown head {self.head!r}")
        if self.mechanism == "mean" and self.selection.kind != "none":
            raise ValueError("the mean baseline pools all channels; selection must be 'none'")
        if self.mechanism != "mean" and self.d % self.heads != 0:
            raise ValueError(f"d={self.d} must split evenly over {self.heads} heads")


class Model:
    """Trainable parameters bundled with their configuration."""

    def __init__(self, cfg: ModelConfig, n_speakers: int, blocks: list[BlockParams],
                 gpool_params: GPoolParams | None, head_w: Parameter, head_b: Parameter):
        self.cfg = cfg
        self.n_speakers = n_speakers
        self.blocks = blocks
        self.gpool = gpool_params
        self.head_w = head_w
        self.head_b = head_b
        params = ParamSet()
        for block in blocks:
            for p in block.parameters():
                params.add(p)
        if gpool_params is not None:
            params.add(gpool_params.p)
        params.add(head_w)
        params.add(head_b)
        self.params = params

    @property
    def stack_cfg(self) -> StackConfig:
        return StackConfig(
            n_blocks=self.cfg.n_blocks,
            mechanism=self.cfg.mechanism,
            temporal_graph=self.cfg.temporal_graph,
            spatial_graph=self.cfg.spatial_graph,
        )

    @classmethod
    def init(cls, cfg: ModelConfig, n_speakers: int) -> "Model":
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
        if cfg.mechanism == "mean":
            blocks: list[BlockParams] = []
        else:
            blocks = init_stack_params(
                StackConfig(cfg.n_blocks, cfg.mechanism, cfg.temporal_graph, cfg.spatial_graph),
                cfg.d, cfg.heads, rng, cfg.leaky_slope, cfg.warm_start)
        gp = init_gpool_params(cfg.d, rng) if cfg.selection.kind == "gpool" else None
        bound = 1.0 / math.sqrt(cfg.d)
        head_w = Parameter("head.w", rng.uniform(-bound, bound, size=(cfg.d, n_speakers)))
        head_b = Parameter("head.b", np.zeros(n_speakers))
        return cls(cfg, n_speakers, blocks, gp, head_w, head_b)


@dataclass(frozen=True)
class TrainHyper:
    lr: float = 1e-2
    momentum: float = 0.9
    batch_size: int = 8
    epochs: int = 30
    grad_clip: float | None = None  # global gradient-norm ceiling; None disables
    weight_decay: float = 0.0  # L2 coefficient added to gradients
    stack_lr_scale: float = 1.0  # lr multiplier for non-classifier parameters
    tail_average: int = 0  # average the final N epochs' parameters (0 disables)


@dataclass(frozen=True)
class Utterance:
    utt_id: str
    speaker: int
    features: FrameTensor
    scene: Scene | None = None


def subsample_channels(utt: Utterance, k: int, rng: np.random.Generator) -> Utterance:
    """Random channel subset (features and scene restricted consistently)."""
    c = utt.features.c
    if not 1 <= k <= c:
        raise ValueError(f"cannot subsample {k} of {c} channels")
    idx = np.sort(rng.choice(c, size=k, replace=False))
    return replace(
        utt,
        features=FrameTensor(utt.features.data[idx]),
        scene=None if utt.scene is None else utt.scene.subset(idx),
    )


def _prior_mask(scene: Scene, sel: SelectionConfig) -> tuple[Adjacency, SelectionMask]:
    adjacency, mask = build_prior(scene, sel.rho)
    if sel.orientation:
        mask = apply_orientation_mask(mask, scene)
    if sel.noise:
        mask = apply_noise_mask(mask, scene, sel.rho_noise)
    if sel.orientation or sel.noise:
        adjacency = adjacency_from_mask(mask)
    return adjacency, mask


def _spatial_adjacency(model: Model, c: int, scene: Scene | None):
    """Spatial graph for one utterance plus the prior mask when configured."""
    cfg = model.cfg
    if cfg.selection.kind == "prior":
        if scene is None:
            raise MissingPriorError("prior channel selection needs the utterance's scene")
        return _prior_mask(scene, cfg.selection)
    if cfg.spatial_graph.kind == "knn":
        if scene is None:
            raise MissingPriorError("knn spatial graph needs the utterance's scene")
        return build_knn(scene.node_pos, cfg.spatial_graph.k), None
    return build_graph(cfg.spatial_graph, c), None


def _dispatch(x, a, params):
    return sam_agg(x, a, params) if params.mechanism == "sam" else gcn_agg(x, a, params)


def _head_logits(model: Model, embs):
    """Classifier logits for a (B, D) batch of embeddings.

    The linear head is an affine map.  The cosine head normalizes both the
    embeddings and the class weights so cross-entropy directly optimizes
    the angular geometry that cosine scoring evaluates.
    """
    if model.cfg.head == "linear":
        return dc.add(dc.matmul(embs, model.head_w), model.head_b)
    row = dc.sqrt(dc.sum_axis(dc.mul(embs, embs), axis=-1, keepdims=True))
    col = dc.sqrt(dc.sum_axis(dc.mul(model.head_w, model.head_w), axis=0, keepdims=True))
    cosines = dc.matmul(dc.div(embs, row), dc.div(model.head_w, col))
    return dc.scale(cosines, model.cfg.head_scale)


def _embed_batch(model: Model, utts: list[Utterance]):
    """Differentiable embeddings for a batch of same-shape utterances.

    Equivalent to stacking :func:`_embed_tensor` results; one kernel graph
    serves the whole batch (per-utterance spatial masks ride along a batch
    axis), which is what makes training cheap.  Returns a (B, D) tensor.
    """
    cfg = model.cfg
    xs = np.stack([u.features.data for u in utts])  # (B, C, T, D)
    if cfg.mechanism == "mean":
        return dc.mean_axis(Tensor(xs), axis=(1, 2))

    b, c, t, _ = xs.shape
    adjacencies, sel_masks = [], []
    for u in utts:
        a_sp, m = _spatial_adjacency(model, c, u.scene)
        adjacencies.append(a_sp)
        sel_masks.append(m)
    spatial_mask = np.stack([a.entries for a in adjacencies])[:, None, :, :]  # (B, 1, C, C)
    a_temporal = build_graph(cfg.temporal_graph, t)

    out = Tensor(xs)
    for block in model.blocks:
        out = _dispatch(out, a_temporal, block.temporal)
        out = dc.transpose(out, (0, 2, 1, 3))  # (B, T, C, D)
        out = _dispatch(out, spatial_mask, block.spatial)
        out = dc.transpose(out, (0, 2, 1, 3))

    sel = cfg.selection
    if sel.kind == "none" or (sel.kind == "prior" and sel.pool_all):
        return dc.mean_axis(out, axis=(1, 2))
    if sel.kind == "prior":
        keep = np.stack([m.selected for m in sel_masks]).astype(np.float64)  # (B, C)
        counts = keep.sum(axis=1) * t
        summed = dc.sum_axis(dc.mul(out, Tensor(keep[:, :, None, None])), axis=(1, 2))
        return dc.div(summed, Tensor(counts[:, None]))
    # gpool: the channel choice is per utterance, so finish slice by slice
    k = sel.k if sel.k is not None else math.ceil(c / 2)
    pooled = []
    for i in range(b):
        z = dc.reshape(dc.take_rows(out, np.array([i])), (c, t, cfg.d))
        result = gpool(z, adjacencies[i], model.gpool, k)
        pooled.append(utterance_pool(result.features))
    return dc.stack_rows(pooled)


def _embed_tensor(model: Model, x: np.ndarray, scene: Scene | None):
    """Differentiable forward pass to one utterance embedding.

    Returns (embedding tensor (D,), selection info dict).
    """
    cfg = model.cfg
    if cfg.mechanism == "mean":
        per_channel = dc.mean_axis(Tensor(x), axis=1)
        emb = dc.mean_axis(per_channel, axis=0)
        return emb, {"mechanism": "none", "selected_indices": list(range(x.shape[0])), "gates": None}

    c = x.shape[0]
    a_spatial, mask = _spatial_adjacency(model, c, scene)
    z = st_stack(Tensor(x), model.stack_cfg, model.blocks, a_spatial=a_spatial)
    sel = cfg.selection
    if sel.kind == "gpool":
        k = sel.k if sel.k is not None else math.ceil(c / 2)
        result = gpool(z, a_spatial, model.gpool, k)
        info = {"mechanism": "gpool",
                "selected_indices": [int(i) for i in result.indices],
                "gates": [float(g) for g in result.gates]}
        return utterance_pool(result.features), info
    if sel.kind == "prior":
        z_hat = z if sel.pool_all else prior_select(z, mask)
        info = {"mechanism": "prior",
                "selected_indices": [int(i) for i in mask.indices()],
                "gates": None}
        return utterance_pool(z_hat), info
    info = {"mechanism": "none", "selected_indices": list(range(c)), "gates": None}
    return utterance_pool(z), info


def embed(model: Model, x, scene: Scene | None = None) -> np.ndarray:
    """Utterance-level embedding as a plain (D,) array."""
    data = x.data if isinstance(x, FrameTensor) else np.asarray(x, dtype=np.float64)
    emb, _ = _embed_tensor(model, data, scene)
    return np.array(emb.data)


def embed_with_info(model: Model, x, scene: Scene | None = None):
    """Embedding plus the channel-selection report for this utterance."""
    data = x.data if isinstance(x, FrameTensor) else np.asarray(x, dtype=np.float64)
    emb, info = _embed_tensor(model, data, scene)
    return np.array(emb.data), info


def train_second_stage(dataset: list[Utterance], cfg: ModelConfig,
                       hyper: TrainHyper) -> tuple[Model, list[float]]:
    """Minimize softmax cross-entropy over speakers with SGD + momentum.

    Deterministic given (cfg.seed, dataset order): initialization and the
    per-epoch shuffles derive from the seed.  Returns the trained model
    and the per-epoch mean loss curve.
    """
    if not dataset:
        raise DegenerateTaskError("empty training set")
    speakers = sorted({u.speaker for u in dataset})
    if len(speakers) < 2:
        raise DegenerateTaskError("training needs at least two speakers")
    label_of = {spk: i for i, spk in enumerate(speakers)}

    model = Model.init(cfg, n_speakers=len(speakers))
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    velocity = {p.name: np.zeros_like(p.data) for p in model.params}
    lr_of = {p.name: hyper.lr * (1.0 if p.name.startswith("head.") else hyper.stack_lr_scale)
             for p in model.params}
    tail_sum = {p.name: np.zeros_like(p.data) for p in model.params}
    tail_count = 0
    curve: list[float] = []
    for epoch in range(hyper.epochs):
        order = shuffle_rng.permutation(len(dataset))
        batch_losses: list[float] = []
        for start in range(0, len(dataset), hyper.batch_size):
            batch = [dataset[i] for i in order[start:start + hyper.batch_size]]
            model.params.zero_grad()
            try:
                embs = _embed_batch(model, batch)
                logits = _head_logits(model, embs)
                labels = np.array([label_of[u.speaker] for u in batch])
                loss = dc.softmax_cross_entropy(logits, labels)
            except NonFiniteError as err:
                raise NonFiniteError(
                    f"training diverged at epoch {epoch}, step {start // hyper.batch_size}: {err}"
                ) from err
            loss.backward()
            if hyper.weight_decay:
                for p in model.params:
                    p.grad += hyper.weight_decay * p.data
            if hyper.grad_clip is not None:
                total = math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in model.params))
                if total > hyper.grad_clip:
                    factor = hyper.grad_clip / total
                    for p in model.params:
                        p.grad *= factor
            for p in model.params:
                v = velocity[p.name]
                v *= hyper.momentum
                v += p.grad
                p.data -= lr_of[p.name] * v
            batch_losses.append(loss.item())
        curve.append(float(np.mean(batch_losses)))
        if hyper.tail_average and epoch >= hyper.epochs - hyper.tail_average:
            for p in model.params:
                tail_sum[p.name] += p.data
            tail_count += 1
    if tail_count:
        # Polyak-style tail average: the last epochs wander around one
        # basin; their mean is a steadier operating point than the endpoint.
        for p in model.params:
            p.data = tail_sum[p.name] / tail_count
    return model, curve


def cosine_score(s1, s2) -> float:
    """Cosine similarity of two embeddings, in [-1, 1]."""
    a = np.asarray(s1, dtype=np.float64)
    b = np.asarray(s2, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine score undefined for a zero embedding")
    return float(np.dot(a, b) / (na * nb))


@dataclass(frozen=True)
class Trial:
    enroll_id: str
    test_id: str
    label: str  # "target" | "nontarget"

    def __post_init__(self):
        if self.label not in ("target", "nontarget"):
            raise ValueError(f"trial label must be target/nontarget, got {self.label!r}")


@dataclass
class TrialSet:
    trials: list[Trial]
    scores: np.ndarray | None = None

    def with_scores(self, scores) -> "TrialSet":
        scores = np.asarray(scores, dtype=np.float64)
        if scores.shape != (len(self.trials),):
            raise ValueError("one score per trial required")
        return TrialSet(trials=self.trials, scores=scores)

    def split_scores(self) -> tuple[np.ndarray, np.ndarray]:
        if self.scores is None:
            raise ProtocolError("trial set has no scores")
        labels = np.array([t.label == "target" for t in self.trials])
        return self.scores[labels], self.scores[~labels]


def eer_from_scores(target_scores, nontarget_scores) -> tuple[float, float]:
    """Equal error rate and its threshold from raw verification scores.

    Sweeps every distinct score as an accept-if-score>=threshold operating
    point; the crossing of the false-accept and false-reject rates is
    linearly interpolated between the two bracketing points.
    """
    tar = np.sort(np.asarray(target_scores, dtype=np.float64))
    non = np.sort(np.asarray(nontarget_scores, dtype=np.float64))
    if tar.size < 1 or non.size < 1:
        raise ProtocolError("EER needs at least one target and one nontarget trial")
    thresholds = np.unique(np.concatenate([tar, non]))
    thresholds = np.append(thresholds, thresholds[-1] + 1.0)  # all-reject sentinel
    far = (non.size - np.searchsorted(non, thresholds, side="left")) / non.size
    frr = np.searchsorted(tar, thresholds, side="left") / tar.size
    diff = far - frr  # nonincreasing in the threshold
    i2 = int(np.argmax(diff <= 0.0))
    if diff[i2] == 0.0:
        return float(far[i2]), float(thresholds[i2])
    i1 = i2 - 1
    denom = (far[i1] - frr[i1]) - (far[i2] - frr[i2])
    t = (far[i1] - frr[i1]) / denom
    eer = far[i1] + t * (far[i2] - far[i1])
    threshold = thresholds[i1] + t * (thresholds[i2] - thresholds[i1])
    return float(eer), float(threshold)


def compute_eer(trials: TrialSet) -> tuple[float, float]:
    tar, non = trials.split_scores()
    return eer_from_scores(tar, non)


@dataclass(frozen=True)
class EvalReport:
    eer: float
    threshold: float
    n_trials: int
    scores: tuple[float, ...]


def evaluate(model: Model, utterances: dict[str, Utterance], trials: TrialSet) -> EvalReport:
    """Embed, score with cosine similarity, and compute the EER."""
    cache: dict[str, np.ndarray] = {}

    def emb(utt_id: str) -> np.ndarray:
        if utt_id not in cache:
            if utt_id not in utterances:
                raise KeyError(f"trial references unknown utterance {utt_id!r}")
            u = utterances[utt_id]
            cache[utt_id] = embed(model, u.features, u.scene)
        return cache[utt_id]

    scores = [cosine_score(emb(t.enroll_id), emb(t.test_id)) for t in trials.trials]
    scored = trials.with_scores(scores)
    eer, threshold = compute_eer(scored)
    return EvalReport(eer=eer, threshold=threshold, n_trials=len(trials.trials),
                      scores=tuple(scores))


def generate_trials(utterances: list[Utterance], n_target: int, n_nontarget: int,
                    rng: np.random.Generator) -> TrialSet:
    """Sample same-speaker and cross-speaker utterance pairs."""
    by_speaker: dict[int, list[Utterance]] = {}
    for u in utterances:
        by_speaker.setdefault(u.speaker, []).append(u)
    multi = [spk for spk, us in by_speaker.items() if len(us) >= 2]
    if n_target > 0 and not multi:
        raise ProtocolError("no speaker has two utterances; cannot form target trials")
    if n_nontarget > 0 and len(by_speaker) < 2:
        raise ProtocolError("need two speakers for nontarget trials")
    trials: list[Trial] = []
    for _ in range(n_target):
        spk = multi[rng.integers(len(multi))]
        i, j = rng.choice(len(by_speaker[spk]), size=2, replace=False)
        trials.append(Trial(by_speaker[spk][i].utt_id, by_speaker[spk][j].utt_id, "target"))
    speakers = sorted(by_speaker)
    for _ in range(n_nontarget):
        si, sj = rng.choice(len(speakers), size=2, replace=False)
        u1 = by_speaker[speakers[si]][rng.integers(len(by_speaker[speakers[si]]))]
        u2 = by_speaker[speakers[sj]][rng.integers(len(by_speaker[speakers[sj]]))]
        trials.append(Trial(u1.utt_id, u2.utt_id, "nontarget"))
    return TrialSet(trials=trials)


def write_trials_csv(path, trials: TrialSet) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["enroll_id", "test_id", "label"])
        for t in trials.trials:
            writer.writerow([t.enroll_id, t.test_id, t.label])


def read_trials_csv(path) -> TrialSet:
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["enroll_id", "test_id", "label"]:
            raise ValueError(f"{path}: expected header enroll_id,test_id,label")
        trials = [Trial(row[0], row[1], row[2]) for row in reader if row]
    return TrialSet(trials=trials)


def model_config_to_json(cfg: ModelConfig) -> dict:
    return {
        "mechanism": cfg.mechanism,
        "n_blocks": cfg.n_blocks,
        "heads": cfg.heads,
        "d": cfg.d,
        "selection": {
            "kind": cfg.selection.kind,
            "k": cfg.selection.k,
            "rho": cfg.selection.rho,
            "orientation": cfg.selection.orientation,
            "noise": cfg.selection.noise,
            "rho_noise": cfg.selection.rho_noise,
            "pool_all": cfg.selection.pool_all,
        },
        "temporal_graph": {"kind": cfg.temporal_graph.kind, "delta": cfg.temporal_graph.delta,
                           "k": cfg.temporal_graph.k},
        "spatial_graph": {"kind": cfg.spatial_graph.kind, "delta": cfg.spatial_graph.delta,
                          "k": cfg.spatial_graph.k},
        "leaky_slope": cfg.leaky_slope,
        "warm_start": cfg.warm_start,
        "head": cfg.head,
        "head_scale": cfg.head_scale,
        "seed": cfg.seed,
    }


def model_config_from_json(doc: dict) -> ModelConfig:
    sel = doc.get("selection", {})
    tg = doc.get("temporal_graph", {})
    sg = doc.get("spatial_graph", {})
    return ModelConfig(
        mechanism=doc.get("mechanism", "gcn"),
        n_blocks=int(doc.get("n_blocks", 2)),
        heads=int(doc.get("heads", 4)),
        d=int(doc.get("d", 16)),
        selection=SelectionConfig(
            kind=sel.get("kind", "none"),
            k=sel.get("k"),
            rho=float(sel.get("rho", 0.6)),
            orientation=bool(sel.get("orientation", False)),
            noise=bool(sel.get("noise", False)),
            rho_noise=float(sel.get("rho_noise", 0.2)),
            pool_all=bool(sel.get("pool_all", False)),
        ),
        temporal_graph=GraphSpec(kind=tg.get("kind", "complete"), delta=int(tg.get("delta", 1)),
                                 k=int(tg.get("k", 4))),
        spatial_graph=GraphSpec(kind=sg.get("kind", "complete"), delta=int(sg.get("delta", 1)),
                                k=int(sg.get("k", 4))),
        leaky_slope=float(doc.get("leaky_slope", 0.2)),
        warm_start=bool(doc.get("warm_start", False)),
        head=doc.get("head", "linear"),
        head_scale=float(doc.get("head_scale", 10.0)),
        seed=int(doc.get("seed", 0)),
    )


def save_model(path, model: Model) -> None:
    meta = {
        "seed": model.cfg.seed,
        "config": model_config_to_json(model.cfg),
        "n_speakers": model.n_speakers,
    }
    save_checkpoint(path, model.params, meta)


def load_model(path) -> Model:
    manifest, values = load_checkpoint(path)
    cfg = model_config_from_json(manifest["config"])
    model = Model.init(cfg, n_speakers=int(manifest["n_speakers"]))
    missing = [p.name for p in model.params if p.name not in values]
    extra = [name for name in values if name not in model.params]
    if missing or extra:
        raise ValueError(f"checkpoint/model mismatch: missing={missing}, extra={extra}")
    for p in model.params:
        if values[p.name].shape != p.data.shape:
            raise ValueError(f"shape mismatch for {p.name!r}")
        p.data = values[p.name].copy()
    return model


def eval_per_node(model: Model, utterances: dict[str, Utterance],
                  trials: TrialSet) -> list[dict]:
    """Single-channel EER per node index, with mean node geometry.

    Coordinates and speaker distance are averaged over the evaluated
    utterances' scenes (exact when all utterances share one geometry).
    Prior-selection fallback warnings are expected for single-channel
    inputs and suppressed here.
    """
    n_channels = {u.features.c for u in utterances.values()}
    if len(n_channels) != 1:
        raise ProtocolError("per-node analysis needs a uniform channel count")
    c = n_channels.pop()
    rows = []
    for node in range(c):
        sub = {}
        for utt_id, u in utterances.items():
            sub[utt_id] = replace(
                u,
                features=FrameTensor(u.features.data[node:node + 1]),
                scene=None if u.scene is None else u.scene.subset([node]),
            )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            report = evaluate(model, sub, trials)
        scenes = [u.scene for u in utterances.values() if u.scene is not None]
        if scenes:
            pos = np.mean([s.node_pos[node] for s in scenes], axis=0)
            dist = float(np.mean([np.linalg.norm(s.node_pos[node] - s.speaker_pos) for s in scenes]))
        else:
            pos, dist = np.full(3, np.nan), float("nan")
        rows.append({"node": node, "x": float(pos[0]), "y": float(pos[1]), "z": float(pos[2]),
                     "distance": dist, "eer": report.eer})
    return rows
