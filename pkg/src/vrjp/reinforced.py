"""Direct simulation of the vertex-reinforced jump process.

While the walk sits at x only the occupied local time L_x grows, so neighbor
rates C_xy L_y are constant between jumps: holding times are exact
exponentials and jump targets are sampled proportionally to C_xy L_y.  The
emitted holding is the increment of D(s) = sum_x (L_x(s)^2 - 1), i.e. the
exchangeable-time-scale clock.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GraphError
from .mjp import DecoratedPath


@dataclass(frozen=True)
class VrjpRecord:
    """Original-scale side channel retained for the time-change audit."""

    s_holdings: np.ndarray  # holding times on the original clock
    local_times: np.ndarray  # L at the end of the run


def simulate_vrjp(
    conduct: np.ndarray, start: int, steps: int, rng: np.random.Generator
) -> tuple[DecoratedPath, VrjpRecord]:
    """Run ``steps`` jumps; emit steps+1 (vertex, exchangeable holding) pairs."""
    conduct = np.asarray(conduct, dtype=float)
    n = conduct.shape[0]
    if not 0 <= start < n:
        raise GraphError(f"start vertex {start} out of range")
    L = np.ones(n)
    verts = np.empty(steps + 1, dtype=int)
    holds = np.empty(steps + 1)
    s_holds = np.empty(steps + 1)
    v = int(start)
    for k in range(steps + 1):
        rates = conduct[v] * L
        total = rates.sum()
        h = rng.exponential(1.0 / total)
        verts[k] = v
        s_holds[k] = h
        holds[k] = (L[v] + h) ** 2 - L[v] ** 2
        L[v] += h
        if k < steps:
            v = int(np.searchsorted(np.cumsum(rates), rng.random() * total, side="right"))
    return DecoratedPath(verts, holds), VrjpRecord(s_holds, L)


def exchangeable_check(record: VrjpRecord, path: DecoratedPath, rtol: float = 1e-9) -> bool:
    """sum_k l(k) must equal D(s_final) = sum_x (L_x^2 - 1)."""
    total = float(path.holdings.sum())
    d_final = float(np.sum(record.local_times**2 - 1.0))
    return abs(total - d_final) <= rtol * max(1.0, abs(d_final))


def simulate_vrjp_batch(
    conduct: np.ndarray, start: int, steps: int, replicas: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Lockstep batch of fixed-length runs: (replicas, steps+1) vertex/holding arrays."""
    conduct = np.asarray(conduct, dtype=float)
    n = conduct.shape[0]
    L = np.ones((replicas, n))
    verts = np.empty((replicas, steps + 1), dtype=np.int32)
    holds = np.empty((replicas, steps + 1))
    cur = np.full(replicas, int(start))
    rows = np.arange(replicas)
    for k in range(steps + 1):
        rates = conduct[cur] * L
        total = rates.sum(axis=1)
        h = rng.exponential(1.0, size=replicas) / total
        lv = L[rows, cur]
        verts[:, k] = cur
        holds[:, k] = (lv + h) ** 2 - lv**2
        L[rows, cur] = lv + h
        if k < steps:
            cum = np.cumsum(rates, axis=1)
            pick = rng.random(replicas) * total
            cur = (cum > pick[:, None]).argmax(axis=1)
    return verts, holds


def simulate_vrjp_blocks(
    conduct: np.ndarray,
    start: int,
    K,
    delta: int,
    n_blocks: int,
    replicas: int,
    rng: np.random.Generator,
    max_rounds: int = 200_000,
    chunk: int = 25_000,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Run replicas until each has begun its ``n_blocks + 1``-th visit block
    on K union {delta}, guaranteeing ``n_blocks`` complete reduced blocks.

    Returns one (vertices, holdings) pair per replica, trimmed at the step
    that opened the extra block.  Replicas hitting ``max_rounds`` are dropped.
    """
    conduct = np.asarray(conduct, dtype=float)
    n = conduct.shape[0]
    in_ktilde = np.zeros(n, dtype=bool)
    for v in K:
        in_ktilde[v] = True
    in_ktilde[delta] = True
    out: list[tuple[np.ndarray, np.ndarray]] = []
    done_total = 0
    for lo in range(0, replicas, chunk):
        r = min(chunk, replicas - lo)
        L = np.ones((r, n))
        cur = np.full(r, int(start))
        rows = np.arange(r)
        active = np.ones(r, dtype=bool)
        blocks = np.zeros(r, dtype=np.int32)
        last_kt = np.full(r, -1, dtype=np.int64)
        stop_at = np.full(r, -1, dtype=np.int64)
        vcols, hcols = [], []
        for rnd in range(max_rounds):
            rates = conduct[cur] * L
            total = rates.sum(axis=1)
            h = rng.exponential(1.0, size=r) / total
            lv = L[rows, cur]
            hold = (lv + h) ** 2 - lv**2
            # visiting a new K~ vertex opens a new block
            kt = in_ktilde[cur]
            opens = kt & (cur != last_kt) & active
            blocks[opens] += 1
            last_kt = np.where(kt & active, cur, last_kt)
            newly_done = active & (blocks >= n_blocks + 1)
            stop_at[newly_done] = rnd
            active &= ~newly_done
            vcols.append(cur.astype(np.int32))
            hcols.append(np.where(active | newly_done, hold, 0.0))
            if not active.any():
                break
            L[rows[active], cur[active]] = (lv + h)[active]
            nxt = (np.cumsum(rates, axis=1) > (rng.random(r) * total)[:, None]).argmax(axis=1)
            cur = np.where(active, nxt, cur)
        V = np.stack(vcols, axis=1)
        Hm = np.stack(hcols, axis=1)
        for i in range(r):
            if stop_at[i] >= 0:
                end = int(stop_at[i]) + 1
                out.append((V[i, :end].astype(int), Hm[i, :end].copy()))
                done_total += 1
    if done_total < replicas:
        dropped = replicas - done_total
        if dropped > 0.001 * replicas:
            raise RuntimeError(f"{dropped} replicas failed to complete {n_blocks} blocks")
    return out
