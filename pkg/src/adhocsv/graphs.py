"""Adjacency matrices and channel-selection masks.

Constructors cover the graph families the pipeline uses: complete graphs,
banded temporal graphs over frames, k-nearest spatial graphs over node
positions, and geometry-driven selection with optional orientation and
noise-proximity masks.  Every adjacency built here carries self-loops
(diagonal forced to one) so that no attention row is ever empty.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .scenesim import Scene

__all__ = [
    "Adjacency",
    "SelectionMask",
    "build_complete",
    "build_temporal_span",
    "build_knn",
    "build_prior",
    "adjacency_from_mask",
    "apply_orientation_mask",
    "apply_noise_mask",
    "neighbors",
    "adjacency_to_json",
    "adjacency_from_json",
]


@dataclass(frozen=True)
class Adjacency:
    """Boolean N x N graph structure; immutable after construction."""

    n: int
    entries: np.ndarray  # bool (n, n)
    symmetric: bool

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=bool)
        if e.shape != (self.n, self.n):
            raise ValueError(f"adjacency entries must be {self.n}x{self.n}, got {e.shape}")
        if not np.all(np.diagonal(e)):
            raise ValueError("adjacency diagonal must be all ones (self-loop policy)")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    def restrict(self, idx) -> "Adjacency":
        """Subgraph on the given node indices (order preserved)."""
        idx = np.asarray(idx, dtype=np.intp)
        sub = self.entries[np.ix_(idx, idx)].copy()
        return Adjacency(n=len(idx), entries=sub, symmetric=bool(np.array_equal(sub, sub.T)))


@dataclass(frozen=True)
class SelectionMask:
    """Boolean channel-selection vector; at least one channel stays selected."""

    selected: np.ndarray  # bool (C,)

    def __post_init__(self):
        s = np.asarray(self.selected, dtype=bool)
        if s.ndim != 1:
            raise ValueError("selection mask must be one-dimensional")
        if not s.any():
            raise ValueError("selection mask must keep at least one channel")
        s.setflags(write=False)
        object.__setattr__(self, "selected", s)

    @property
    def k(self) -> int:
        return int(self.selected.sum())

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.selected)


def build_complete(n: int) -> Adjacency:
    if n < 1:
        raise ValueError("complete graph needs at least one node")
    return Adjacency(n=n, entries=np.ones((n, n), dtype=bool), symmetric=True)


def build_temporal_span(t: int, delta: int) -> Adjacency:
    """Banded frame graph: i and j connected iff |i - j| <= delta."""
    if t < 1:
        raise ValueError("temporal graph needs at least one frame")
    if delta < 0:
        raise ValueError("span half-window must be nonnegative")
    idx = np.arange(t)
    entries = np.abs(idx[:, None] - idx[None, :]) <= delta
    return Adjacency(n=t, entries=entries, symmetric=True)


def build_knn(positions, k: int) -> Adjacency:
    """Graph where each node links to its k nearest other nodes.

    Directed in general (nearest-neighbor relations need not be mutual);
    ties broken toward lower node index.  Self-loops always present.
    """
    pos = np.asarray(positions, dtype=np.float64)
    n = pos.shape[0]
    if n < 1:
        raise ValueError("knn graph needs at least one node")
    if not 0 <= k <= n - 1:
        raise ValueError(f"k must lie in [0, {n - 1}], got {k}")
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    entries = np.eye(n, dtype=bool)
    for u in range(n):
        order = [v for v in np.argsort(dist[u], kind="stable") if v != u]
        entries[u, order[:k]] = True
    sym = bool(np.array_equal(entries, entries.T))
    return Adjacency(n=n, entries=entries, symmetric=sym)


def _speaker_distances(scene: "Scene") -> np.ndarray:
    nodes = np.asarray(scene.node_pos, dtype=np.float64)
    return np.linalg.norm(nodes - np.asarray(scene.speaker_pos, dtype=np.float64), axis=1)


def _nearest_fallback(d_spk: np.ndarray, what: str) -> np.ndarray:
    warnings.warn(f"{what} left no channel selected; falling back to the nearest channel")
    selected = np.zeros(d_spk.shape[0], dtype=bool)
    selected[int(np.argmin(d_spk))] = True  # argmin ties resolve to the lowest index
    return selected


def build_prior(scene: "Scene", rho: float) -> tuple[Adjacency, SelectionMask]:
    """Select channels whose speaker-distance ratio is strictly below rho.

    Channel i is kept iff dist(i, speaker) / max_dist < rho.  The returned
    adjacency is the complete graph over the kept channels plus self-loops
    everywhere, so deselected channels only see themselves.
    """
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    d_spk = _speaker_distances(scene)
    if d_spk.size < 1:
        raise ValueError("scene has no nodes")
    d_max = d_spk.max()
    if d_max == 0.0:
        selected = np.ones(d_spk.shape[0], dtype=bool)  # all nodes coincide with the speaker
    else:
        selected = d_spk / d_max < rho
    if not selected.any():
        selected = _nearest_fallback(d_spk, f"prior threshold rho={rho}")
    mask = SelectionMask(selected=selected)
    return adjacency_from_mask(mask), mask


def adjacency_from_mask(mask: SelectionMask) -> Adjacency:
    """Complete subgraph over the selected channels, self-loops everywhere."""
    s = mask.selected
    entries = np.outer(s, s) | np.eye(s.shape[0], dtype=bool)
    return Adjacency(n=s.shape[0], entries=entries, symmetric=True)


def apply_orientation_mask(mask: SelectionMask, scene: "Scene") -> SelectionMask:
    """Deselect channels located behind the speaker.

    A channel is behind when the dot product of (node - speaker) with the
    facing vector is negative; a zero dot product counts as in front.
    """
    facing = np.asarray(scene.speaker_facing, dtype=np.float64)
    nodes = np.asarray(scene.node_pos, dtype=np.float64)
    rel = nodes - np.asarray(scene.speaker_pos, dtype=np.float64)
    in_front = rel @ facing >= 0.0
    selected = mask.selected & in_front
    if not selected.any():
        selected = _nearest_fallback(_speaker_distances(scene), "orientation mask")
    return SelectionMask(selected=selected)


def apply_noise_mask(mask: SelectionMask, scene: "Scene", rho_noise: float = 0.2) -> SelectionMask:
    """Deselect channels close to the point noise source.

    A channel is dropped when dist(i, noise) / max_noise_dist < rho_noise.
    """
    if not 0.0 < rho_noise <= 1.0:
        raise ValueError(f"rho_noise must lie in (0, 1], got {rho_noise}")
    if scene.noise_pos is None:
        raise ValueError("scene has no noise source position")
    nodes = np.asarray(scene.node_pos, dtype=np.float64)
    d_noise = np.linalg.norm(nodes - np.asarray(scene.noise_pos, dtype=np.float64), axis=1)
    d_max = d_noise.max()
    near_noise = np.zeros(nodes.shape[0], dtype=bool) if d_max == 0.0 else d_noise / d_max < rho_noise
    selected = mask.selected & ~near_noise
    if not selected.any():
        selected = _nearest_fallback(_speaker_distances(scene), "noise mask")
    return SelectionMask(selected=selected)


def neighbors(a: Adjacency, v: int) -> list[int]:
    """Sorted indices of the nodes adjacent to v (v itself included)."""
    if not 0 <= v < a.n:
        raise IndexError(f"node index {v} out of range for n={a.n}")
    return [int(u) for u in np.flatnonzero(a.entries[v])]


def adjacency_to_json(a: Adjacency) -> dict:
    return {"n": a.n, "rows": ["".join("1" if x else "0" for x in row) for row in a.entries]}


def adjacency_from_json(doc: dict) -> Adjacency:
    n = int(doc["n"])
    rows = doc["rows"]
    if len(rows) != n or any(len(r) != n or set(r) - {"0", "1"} for r in rows):
        raise ValueError("malformed adjacency document")
    entries = np.array([[c == "1" for c in r] for r in rows], dtype=bool)
    return Adjacency(n=n, entries=entries, symmetric=bool(np.array_equal(entries, entries.T)))
