"""Graph-based spatial-temporal aggregation.

The block transforms a C x T x D frame tensor by alternating a temporal
pass (one graph over the frames of each channel, shared weights across
channels) and a spatial pass (one graph over the channels of each frame,
shared weights across frames).  Two interchangeable mechanisms are
provided: masked multi-head self-attention ("sam") and an additive
attention aggregation with LeakyReLU edge scores ("gcn").

Output width equals input width (head dim = D / heads), so blocks stack
without projections.  There are no residuals or inter-block
nonlinearities; blocks are plain compositions with unshared parameters.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .diffcore import Parameter, ParamSet, Tensor
from .graphs import Adjacency, build_complete, build_knn, build_temporal_span

__all__ = [
    "FrameTensor",
    "AggParams",
    "BlockParams",
    "GraphSpec",
    "StackConfig",
    "init_agg_params",
    "init_stack_params",
    "sam_agg",
    "gcn_agg",
    "temporal_module",
    "spatial_module",
    "st_stack",
    "build_graph",
    "save_checkpoint",
    "load_checkpoint",
]

MECHANISMS = ("sam", "gcn")


@dataclass(frozen=True)
class FrameTensor:
    """Frame-level speaker embeddings for C channels, T frames, D dims."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"frame tensor must be (C, T, D) with positive dims, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("frame tensor holds NaN or Inf")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def c(self) -> int:
        return self.data.shape[0]

    @property
    def t(self) -> int:
        return self.data.shape[1]

    @property
    def d(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class GraphSpec:
    """How to build one adjacency: complete, span(delta), or knn(k)."""

    kind: str = "complete"
    delta: int = 1
    k: int = 4


@dataclass
class AggParams:
    """Per-head learnable matrices for one aggregation call."""

    mechanism: str
    d_in: int
    n_heads: int
    d_head: int
    heads: list[dict[str, Parameter]]
    leaky_slope: float = 0.2

    def parameters(self) -> list[Parameter]:
        return [p for head in self.heads for p in head.values()]


@dataclass
class BlockParams:
    temporal: AggParams
    spatial: AggParams

    def parameters(self) -> list[Parameter]:
        return self.temporal.parameters() + self.spatial.parameters()


@dataclass(frozen=True)
class StackConfig:
    n_blocks: int = 2
    mechanism: str = "gcn"
    temporal_graph: GraphSpec = field(default_factory=GraphSpec)
    spatial_graph: GraphSpec = field(default_factory=GraphSpec)

    def __post_init__(self):
        if self.n_blocks < 1:
            raise ValueError("stack needs at least one block")
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}")


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_agg_params(
    mechanism: str,
    d_in: int,
    n_heads: int,
    rng: np.random.Generator,
    prefix: str,
    leaky_slope: float = 0.2,
    warm_start: bool = False,
) -> AggParams:
    """Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.

    With ``warm_start`` the module starts out computing exactly the plain
    neighborhood average of its input (the single-channel behavior the
    second training stage warm-starts from): the value/key output path
    (wv or wr) begins at the per-head slice of the identity, and the
    attention-score path starts at zero (gcn) or scaled down (sam) so the
    masked softmax begins uniform.
    """
    if mechanism not in MECHANISMS:
        raise ValueError(f"unknown mechanism {mechanism!r}")
    if d_in % n_heads != 0:
        raise ValueError(f"embedding dim {d_in} must split evenly over {n_heads} heads")
    d_head = d_in // n_heads
    heads = []
    for m in range(n_heads):
        tag = f"{prefix}.head{m}"

        def value_init():
            if warm_start:
                return np.eye(d_in)[:, m * d_head:(m + 1) * d_head].copy()
            return _uniform(rng, (d_in, d_head), d_in)

        if mechanism == "sam":
            # Zeroing both wq and wk would freeze their gradients; a small
            # random scale keeps the scores near zero but trainable.
            score_scale = 0.05 if warm_start else 1.0
            head = {
                "wq": Parameter(f"{tag}.wq", score_scale * _uniform(rng, (d_in, d_head), d_in)),
                "wk": Parameter(f"{tag}.wk", score_scale * _uniform(rng, (d_in, d_head), d_in)),
                "wv": Parameter(f"{tag}.wv", value_init()),
            }
        else:
            beta0 = np.zeros(2 * d_head) if warm_start else _uniform(rng, (2 * d_head,), 2 * d_head)
            head = {
                "wl": Parameter(f"{tag}.wl", _uniform(rng, (d_in, d_head), d_in)),
                "wr": Parameter(f"{tag}.wr", value_init()),
                "beta": Parameter(f"{tag}.beta", beta0),
            }
        heads.append(head)
    return AggParams(mechanism, d_in, n_heads, d_head, heads, leaky_slope)


def init_stack_params(cfg: StackConfig, d: int, n_heads: int, rng: np.random.Generator,
                      leaky_slope: float = 0.2, warm_start: bool = False) -> list[BlockParams]:
    """Unshared parameters for every temporal/spatial module in the stack."""
    blocks = []
    for b in range(cfg.n_blocks):
        blocks.append(BlockParams(
            temporal=init_agg_params(cfg.mechanism, d, n_heads, rng, f"block{b}.temporal",
                                     leaky_slope, warm_start),
            spatial=init_agg_params(cfg.mechanism, d, n_heads, rng, f"block{b}.spatial",
                                    leaky_slope, warm_start),
        ))
    return blocks


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _swap_last(t: Tensor) -> Tensor:
    axes = tuple(range(t.ndim - 2)) + (t.ndim - 1, t.ndim - 2)
    return dc.transpose(t, axes)


def _mask_of(a) -> np.ndarray:
    """Boolean mask from an Adjacency or a (batched) boolean array."""
    return a.entries if isinstance(a, Adjacency) else np.asarray(a, dtype=bool)


def _check_agg_inputs(x: Tensor, mask: np.ndarray, params: AggParams, mechanism: str) -> None:
    if params.mechanism != mechanism:
        raise ValueError(f"params carry mechanism {params.mechanism!r}, expected {mechanism!r}")
    if x.ndim < 2:
        raise dc.ShapeError("aggregation input must be (..., N, D)")
    if x.shape[-1] != params.d_in:
        raise dc.ShapeError(f"input dim {x.shape[-1]} != parameter dim {params.d_in}")
    if x.shape[-2] != mask.shape[-1]:
        raise dc.ShapeError(f"adjacency is over {mask.shape[-1]} nodes, input has {x.shape[-2]}")


def sam_agg(x, a, params: AggParams, with_weights: bool = False):
    """Multi-head self-attention with the adjacency masking the softmax.

    Per head: Q, K, V are linear maps of the input; scores Q K' / sqrt(d)
    are normalized over each node's neighbors only; the head output is
    the weighted value sum.  Heads are concatenated, so the output width
    equals the input width.

    ``x``: (..., N, D); leading axes are independent batch slices.
    ``a``: an Adjacency, or a boolean mask array broadcastable over the
    batch axes (one graph per slice).
    """
    x = _as_tensor(x)
    mask = _mask_of(a)
    _check_agg_inputs(x, mask, params, "sam")
    inv_sqrt_d = 1.0 / math.sqrt(params.d_head)
    outs, weights = [], []
    for head in params.heads:
        q = dc.matmul(x, head["wq"])
        k = dc.matmul(x, head["wk"])
        v = dc.matmul(x, head["wv"])
        scores = dc.scale(dc.matmul(q, _swap_last(k)), inv_sqrt_d)
        attn = dc.masked_softmax(scores, mask)
        outs.append(dc.matmul(attn, v))
        weights.append(attn)
    out = dc.concat(outs, axis=-1)
    return (out, weights) if with_weights else out


def gcn_agg(x, a, params: AggParams, with_weights: bool = False):
    """Additive-attention graph aggregation.

    Per head: the input is projected to query (g_l) and key (g_r) spaces;
    the edge score for (i, j) is beta . LeakyReLU(concat(g_l[i], g_r[j])),
    normalized over each node's neighbors; the node output is the
    attention-weighted sum of its neighbors' g_r rows.

    ``a`` as in :func:`sam_agg`.
    """
    x = _as_tensor(x)
    mask = _mask_of(a)
    _check_agg_inputs(x, mask, params, "gcn")
    d = params.d_head
    outs, weights = [], []
    for head in params.heads:
        gl = dc.matmul(x, head["wl"])
        gr = dc.matmul(x, head["wr"])
        beta_l = dc.take_rows(head["beta"], np.arange(d))
        beta_r = dc.take_rows(head["beta"], np.arange(d, 2 * d))
        # beta . LeakyReLU(concat(a_i, b_j)) splits into a row term + column term
        # because LeakyReLU acts elementwise on the two halves independently.
        s_l = dc.matvec(dc.leaky_relu(gl, params.leaky_slope), beta_l)
        s_r = dc.matvec(dc.leaky_relu(gr, params.leaky_slope), beta_r)
        col = dc.reshape(s_l, s_l.shape + (1,))
        row = dc.reshape(s_r, s_r.shape[:-1] + (1, s_r.shape[-1]))
        attn = dc.masked_softmax(dc.add(col, row), mask)
        outs.append(dc.matmul(attn, gr))
        weights.append(attn)
    out = dc.concat(outs, axis=-1)
    return (out, weights) if with_weights else out


def _aggregate(x, a: Adjacency, params: AggParams):
    return sam_agg(x, a, params) if params.mechanism == "sam" else gcn_agg(x, a, params)


def temporal_module(x, a_t: Adjacency, params: AggParams) -> Tensor:
    """Aggregate over frames, one graph per channel, shared weights.

    ``x``: (C, T, D).  Equivalent to running the aggregation on each
    channel's T x D slice and restacking.
    """
    x = _as_tensor(x)
    if x.ndim != 3:
        raise dc.ShapeError(f"temporal module expects (C, T, D), got {x.shape}")
    if a_t.n != x.shape[1]:
        raise dc.ShapeError(f"temporal graph has {a_t.n} nodes, input has {x.shape[1]} frames")
    return _aggregate(x, a_t, params)


def spatial_module(y, a_s: Adjacency, params: AggParams) -> Tensor:
    """Aggregate over channels, one graph per frame, shared weights.

    ``y``: (C, T, D).  Equivalent to running the aggregation on each
    frame's C x D slice and restacking.
    """
    y = _as_tensor(y)
    if y.ndim != 3:
        raise dc.ShapeError(f"spatial module expects (C, T, D), got {y.shape}")
    if a_s.n != y.shape[0]:
        raise dc.ShapeError(f"spatial graph has {a_s.n} nodes, input has {y.shape[0]} channels")
    by_frame = dc.transpose(y, (1, 0, 2))
    out = _aggregate(by_frame, a_s, params)
    return dc.transpose(out, (1, 0, 2))


def build_graph(spec: GraphSpec, n: int, positions=None) -> Adjacency:
    """Materialize a GraphSpec for n nodes (positions needed for knn)."""
    if spec.kind == "complete":
        return build_complete(n)
    if spec.kind == "span":
        return build_temporal_span(n, spec.delta)
    if spec.kind == "knn":
        if positions is None:
            raise ValueError("knn graph spec needs node positions")
        return build_knn(positions, spec.k)
    raise ValueError(f"unknown graph spec kind {spec.kind!r}")


def st_stack(x, cfg: StackConfig, params: list[BlockParams],
             a_temporal: Adjacency | None = None,
             a_spatial: Adjacency | None = None) -> Tensor:
    """Alternate temporal and spatial modules cfg.n_blocks times.

    Adjacencies default to the ones named by cfg's graph specs; pass
    ``a_spatial`` explicitly for geometry-derived graphs (knn, prior).
    Output shape equals input shape.
    """
    x = _as_tensor(x)
    if x.ndim != 3:
        raise dc.ShapeError(f"stack expects (C, T, D), got {x.shape}")
    if len(params) != cfg.n_blocks:
        raise ValueError(f"stack of {cfg.n_blocks} blocks got {len(params)} parameter sets")
    c, t, _ = x.shape
    if a_temporal is None:
        a_temporal = build_graph(cfg.temporal_graph, t)
    if a_spatial is None:
        a_spatial = build_graph(cfg.spatial_graph, c)
    out = x
    for block in params:
        out = temporal_module(out, a_temporal, block.temporal)
        out = spatial_module(out, a_spatial, block.spatial)
    return out


def save_checkpoint(path, params: ParamSet, meta: dict | None = None) -> None:
    """Write parameters as a JSON manifest plus concatenated float64 blobs.

    Layout: 8-byte little-endian header length, UTF-8 JSON manifest
    (names, shapes and caller metadata such as seed and config), then each
    parameter's raw little-endian float64 data in manifest order.
    """
    manifest = dict(meta or {})
    manifest["format"] = "adhocsv-checkpoint"
    manifest["version"] = 1
    manifest["params"] = [{"name": p.name, "shape": list(p.shape)} for p in params]
    header = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for p in params:
            f.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a checkpoint; returns (manifest, name -> float64 array)."""
    with open(path, "rb") as f:
        (header_len,) = struct.unpack("<Q", f.read(8))
        manifest = json.loads(f.read(header_len).decode("utf-8"))
        if manifest.get("format") != "adhocsv-checkpoint":
            raise ValueError(f"{path}: not a checkpoint file")
        values: dict[str, np.ndarray] = {}
        for entry in manifest["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = f.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError(f"{path}: truncated blob for {entry['name']!r}")
            values[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
        if f.read(1):
            raise ValueError(f"{path}: trailing bytes after last parameter")
    return manifest, values
