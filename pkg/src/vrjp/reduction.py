"""Reduction maps: observe a path only on K (plus the boundary vertex).

Consecutive visits to the same observed vertex are merged with summed
holdings.  Boundary holdings are dropped (plain flavor), rescaled by
e^{-2 u_delta} (modified finite-volume flavor), or replaced by t-label
increments (modified interlacement flavor).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mjp import DecoratedPath

FLAVORS = ("kplus", "kplus_modified", "k", "interlacement", "interlacement_modified")


@dataclass(frozen=True)
class ReducedPath:
    """Sequence of (vertex, holding) blocks over K union {delta}.

    ``complete`` certifies the trailing block; incomplete tails are dropped
    before emission so every emitted holding is a full block.
    """

    vertices: np.ndarray
    holdings: np.ndarray
    flavor: str
    complete: bool = True

    def __len__(self):
        return len(self.vertices)

    @property
    def empty(self) -> bool:
        return len(self.vertices) == 0

    def blocks(self):
        return list(zip(self.vertices.tolist(), self.holdings.tolist()))


def _as_arrays(path):
    if isinstance(path, DecoratedPath):
        return path.vertices, path.holdings
    v, h = path
    return np.asarray(v, dtype=int), np.asarray(h, dtype=float)


def _merge_blocks(sub_v: np.ndarray, sub_h: np.ndarray):
    """Group maximal runs of equal consecutive vertices; sum holdings per run."""
    if len(sub_v) == 0:
        return np.empty(0, dtype=int), np.empty(0)
    breaks = np.nonzero(np.diff(sub_v) != 0)[0] + 1
    starts = np.concatenate(([0], breaks))
    return sub_v[starts], np.add.reduceat(sub_h, starts)


def _kplus_core(path, K, delta: int, delta_scale: float, tail_complete: bool, flavor: str) -> ReducedPath:
    verts, holds = _as_arrays(path)
    kset = set(int(k) for k in K)
    mask = np.fromiter(((int(v) in kset) or (int(v) == delta) for v in verts), dtype=bool, count=len(verts))
    sub_v = verts[mask]
    sub_h = holds[mask].astype(float).copy()
    sub_h[sub_v == delta] *= delta_scale
    rv, rh = _merge_blocks(sub_v, sub_h)
    if len(rv) == 0:
        return ReducedPath(rv, rh, flavor, complete=False)
    if not tail_complete:
        # drop the censored trailing block; every emitted holding is then a full block
        rv, rh = rv[:-1], rh[:-1]
    return ReducedPath(rv, rh, flavor, complete=tail_complete)


def kplus_reduce(path, K, delta: int, tail_complete: bool = False) -> ReducedPath:
    """Plain flavor: boundary holdings are zeroed, boundary visits kept.

    The trailing block is emitted only when the caller certifies it complete
    (a later visit to a different observed vertex exists beyond the horizon).
    """
    return _kplus_core(path, K, delta, 0.0, tail_complete, "kplus")


def kplus_reduce_modified(path, K, delta: int, u_delta: float, tail_complete: bool = False) -> ReducedPath:
    """Modified flavor: boundary holdings counted, rescaled by e^{-2 u_delta}."""
    return _kplus_core(path, K, delta, float(np.exp(-2.0 * u_delta)), tail_complete, "kplus_modified")


def k_reduce(path, K, certified_from: int | None = None) -> ReducedPath:
    """Observe only K; the path must certify that K is never revisited later.

    ``certified_from`` is the first index after which no K-visit can occur;
    by default it is the path end when the path carries an escape certificate.
    An uncertified path is refused (the last K-visit cannot be identified).
    """
    verts, holds = _as_arrays(path)
    if certified_from is None:
        if isinstance(path, DecoratedPath) and path.escaped_end:
            certified_from = len(verts)
        else:
            raise ValueError("k_reduce needs an end-of-K-visits marker or an escape certificate")
    kset = set(int(k) for k in K)
    head_v = verts[:certified_from]
    head_h = holds[:certified_from]
    tail = verts[certified_from:]
    if any(int(v) in kset for v in tail):
        raise ValueError("marker is wrong: K is visited after the certified index")
    mask = np.fromiter((int(v) in kset for v in head_v), dtype=bool, count=len(head_v))
    rv, rh = _merge_blocks(head_v[mask], head_h[mask].astype(float))
    return ReducedPath(rv, rh, "k", complete=True)


def reduce_interlacement(window, K, modified: bool = False) -> ReducedPath:
    """Concatenate the initial piece's K-reduction with per-trajectory pieces.

    Each trajectory contributes a boundary separator (holding 0, or the
    t-label increment in the modified flavor) followed by the K-reduction
    of its forward half.  Trajectories must be pivoted at their first
    K-entry and ordered by increasing t-label.
    """
    kset = set(int(k) for k in K)
    delta = window.delta
    parts_v: list[np.ndarray] = []
    parts_h: list[np.ndarray] = []
    init = k_reduce(window.initial, kset)
    parts_v.append(init.vertices)
    parts_h.append(init.holdings)
    prev_t = 0.0
    for traj, t in window.points:
        if t <= prev_t:
            raise ValueError("window trajectories must be ordered by increasing t-label")
        fwd = traj.forward()
        if len(fwd) == 0 or int(fwd.vertices[0]) not in kset:
            raise ValueError("trajectory is not pivoted at its first K-entry")
        back = traj.vertices[: traj.origin]
        if any(int(v) in kset for v in back):
            raise ValueError("trajectory backward half revisits K (unpivoted)")
        sep = (t - prev_t) if modified else 0.0
        prev_t = t
        red = k_reduce(fwd, kset)
        parts_v.append(np.array([delta]))
        parts_h.append(np.array([sep]))
        parts_v.append(red.vertices)
        parts_h.append(red.holdings)
    rv = np.concatenate(parts_v) if parts_v else np.empty(0, dtype=int)
    rh = np.concatenate(parts_h) if parts_h else np.empty(0)
    flavor = "interlacement_modified" if modified else "interlacement"
    return ReducedPath(rv, rh, flavor, complete=True)
