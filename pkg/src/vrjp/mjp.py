"""Quenched Markov jump processes on wired graphs and their hitting algebra.

The embedded chain has P(x -> y) = C_xy e^{u_y} / sum_z C_xz e^{u_z} and exit
rate beta_x at x, so holding times are Exponential(beta_x).  Escape weights
e_K and re-entry kernels q_K are computed exactly by absorbing-chain linear
solves; truncated variants return the monotone surrogates used as
infinite-volume brackets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .environment import UField
from .errors import GraphError, NumericalError
from .graph import WiredGraph

CHAIN_ROW_TOL = 1e-12
RATE_IDENTITY_TOL = 1e-9


@dataclass(frozen=True)
class DecoratedPath:
    """Vertex/holding sequence; ``origin`` marks the array position of index 0.

    ``escaped_end=True`` certifies that past the last stored index the walk
    has left the retained region and is treated as never returning.
    """

    vertices: np.ndarray
    holdings: np.ndarray
    origin: int = 0
    escaped_end: bool = False

    def __post_init__(self):
        if len(self.vertices) != len(self.holdings):
            raise ValueError("vertices and holdings must have equal length")

    def __len__(self):
        return len(self.vertices)

    def index_range(self):
        return -self.origin, len(self.vertices) - self.origin

    def at(self, k: int):
        """Vertex and holding at path index k (0 = pivot)."""
        return self.vertices[self.origin + k], self.holdings[self.origin + k]

    def forward(self) -> "DecoratedPath":
        """The sub-path of indices >= 0."""
        return DecoratedPath(
            self.vertices[self.origin :], self.holdings[self.origin :], 0, self.escaped_end
        )


@dataclass(frozen=True)
class EmbeddedChain:
    """Row-stochastic skeleton plus exit rates on the wired state space."""

    probs: np.ndarray  # (m+1, m+1)
    rates: np.ndarray  # beta including the boundary vertex, length m+1
    u: np.ndarray  # u_{o,.} including the boundary vertex
    delta: int
    wired: WiredGraph = field(repr=False, default=None)
    _cum: np.ndarray = field(repr=False, default=None)

    @property
    def num_states(self) -> int:
        return self.probs.shape[0]

    def cum_rows(self) -> np.ndarray:
        if self._cum is None:
            object.__setattr__(self, "_cum", np.cumsum(self.probs, axis=1))
        return self._cum


def build_chain(wired: WiredGraph, beta_vn: np.ndarray, uf: UField) -> EmbeddedChain:
    """Assemble the embedded chain; asserts rows sum to 1 and the exit-rate identity."""
    m = len(wired.vn)
    rates = np.append(np.asarray(beta_vn, dtype=float), uf.beta_delta)
    eu = np.exp(uf.u)
    weights = wired.conduct * eu[None, :]
    row_sums = weights.sum(axis=1)
    if np.any(row_sums <= 0):
        raise NumericalError("chain row with zero total weight")
    probs = weights / row_sums[:, None]
    # total exit rate identity: sum_z C_xz e^{u_z} = 2 beta_x e^{u_x}
    implied = 0.5 * row_sums / eu
    if np.max(np.abs(implied - rates)) > RATE_IDENTITY_TOL * max(1.0, rates.max()):
        raise NumericalError("exit-rate identity violated; beta and u are inconsistent")
    if np.max(np.abs(probs.sum(axis=1) - 1.0)) > CHAIN_ROW_TOL:
        raise NumericalError("chain rows do not sum to 1")
    return EmbeddedChain(probs=probs, rates=rates, u=uf.u.copy(), delta=m, wired=wired)


def simulate_mjp(chain: EmbeddedChain, z: int, steps: int, rng: np.random.Generator) -> DecoratedPath:
    """Simulate ``steps + 1`` (vertex, holding) pairs starting at z."""
    cum = chain.cum_rows()
    verts = np.empty(steps + 1, dtype=int)
    holds = np.empty(steps + 1)
    v = int(z)
    for k in range(steps + 1):
        verts[k] = v
        holds[k] = rng.exponential(1.0 / chain.rates[v])
        if k < steps:
            row = chain.probs[v]
            if row.sum() <= 0:
                return DecoratedPath(verts[: k + 1], holds[: k + 1])
            v = int(np.searchsorted(cum[v], rng.random(), side="right"))
    return DecoratedPath(verts, holds)


def simulate_mjp_blocks(
    chain: EmbeddedChain,
    z: int,
    K,
    n_blocks: int,
    rng: np.random.Generator,
    max_steps: int = 10**6,
) -> DecoratedPath:
    """Walk from z until the ``n_blocks + 1``-th visit block on K union {delta}
    opens, so the reduction of the result has ``n_blocks`` complete blocks.

    Stopping at a block boundary is a reduced-chain renewal, so the emitted
    blocks are free of horizon-censoring bias (a fixed step horizon would
    under-sample long blocks).
    """
    kt = set(int(k) for k in K) | {chain.delta}
    cum = chain.cum_rows()
    verts, holds = [], []
    v = int(z)
    last_kt = -1
    blocks = 0
    for _ in range(max_steps):
        if v in kt and v != last_kt:
            blocks += 1
            last_kt = v
        verts.append(v)
        holds.append(rng.exponential(1.0 / chain.rates[v]))
        if blocks >= n_blocks + 1:
            return DecoratedPath(np.array(verts, dtype=int), np.array(holds))
        v = int(np.searchsorted(cum[v], rng.random(), side="right"))
    raise NumericalError(f"failed to open {n_blocks + 1} blocks within {max_steps} steps")


def simulate_mjp_until(
    chain: EmbeddedChain,
    z: int,
    stop: frozenset | set,
    rng: np.random.Generator,
    max_steps: int = 10**6,
) -> DecoratedPath:
    """Walk from z until the next jump would enter ``stop``.

    The stopping vertex itself is not appended; the returned path carries the
    escape certificate.  Exceeding ``max_steps`` returns an uncertified path.
    """
    cum = chain.cum_rows()
    verts, holds = [], []
    v = int(z)
    for _ in range(max_steps):
        verts.append(v)
        holds.append(rng.exponential(1.0 / chain.rates[v]))
        nxt = int(np.searchsorted(cum[v], rng.random(), side="right"))
        if nxt in stop:
            return DecoratedPath(np.array(verts), np.array(holds), escaped_end=True)
        v = nxt
    return DecoratedPath(np.array(verts), np.array(holds), escaped_end=False)


def path_prob(chain: EmbeddedChain, vertex_path) -> float:
    """Probability that the embedded chain initially follows the given path."""
    vp = list(vertex_path)
    p = 1.0
    for a, b in zip(vp[:-1], vp[1:]):
        step = chain.probs[a, b]
        if step == 0.0:
            raise GraphError(f"vertices {a} and {b} are not adjacent in the wired graph")
        p *= step
    return p


def hitting_probs(probs: np.ndarray, interior, target_sets) -> np.ndarray:
    """Absorption probabilities h[i, j] = P(from interior[i], absorb in target_sets[j]).

    Solves (I - P_II) H = P_{I,T_j} 1 for each labeled target.  Raises with
    the stranded states named when some interior state cannot reach any target.
    """
    interior = np.asarray(interior, dtype=int)
    targets = [np.asarray(t, dtype=int) for t in target_sets]
    if len(interior) == 0:
        return np.zeros((0, len(targets)))
    all_targets = set(int(t) for ts in targets for t in ts)
    # reachability pre-check via reverse BFS from the targets
    n = probs.shape[0]
    adj = probs > 0
    reached = set(all_targets)
    frontier = list(all_targets)
    interior_set = set(int(i) for i in interior)
    while frontier:
        t = frontier.pop()
        for s in np.nonzero(adj[:, t])[0]:
            s = int(s)
            if s in interior_set and s not in reached:
                reached.add(s)
                frontier.append(s)
    stranded = sorted(interior_set - reached)
    if stranded:
        raise NumericalError(f"no target reachable from interior states {stranded}")
    A = np.eye(len(interior)) - probs[np.ix_(interior, interior)]
    B = np.stack([probs[np.ix_(interior, t)].sum(axis=1) for t in targets], axis=1)
    H = np.linalg.solve(A, B)
    resid = np.linalg.norm(A @ H - B)
    if not np.isfinite(resid) or resid > 1e-8 * max(1.0, np.linalg.norm(B)):
        raise NumericalError("hitting system solve failed the residual check")
    return H


def _first_step_decomposition(chain: EmbeddedChain, K):
    """Shared layout: exterior states, per-target absorption probabilities.

    Returns (K sorted, exterior, g) where g[z_row, j] is the probability, from
    exterior state z, of absorbing at K[j] (j < |K|) or at delta (j == |K|).
    """
    Kl = sorted(int(k) for k in K)
    d = chain.delta
    if any(k >= d for k in Kl):
        raise GraphError("K must be contained in the wired interior")
    exterior = [v for v in range(chain.num_states) if v not in Kl and v != d]
    targets = [[k] for k in Kl] + [[d]]
    g = hitting_probs(chain.probs, exterior, targets)
    return Kl, exterior, g


def e_q_finite(chain: EmbeddedChain, K) -> tuple[np.ndarray, np.ndarray]:
    """Escape weights e_K and re-entry kernel q_K on the wired graph.

    e_K(x) = e^{2u_x} P_x(reach the boundary vertex before returning to K),
    q_K(x, y) = P_x(leave K on the first step and re-enter K at y first).
    """
    Kl, exterior, g = _first_step_decomposition(chain, K)
    d = chain.delta
    pos = {z: i for i, z in enumerate(exterior)}
    nK = len(Kl)
    e = np.zeros(nK)
    q = np.zeros((nK, nK))
    for i, x in enumerate(Kl):
        esc = chain.probs[x, d]
        ret = np.zeros(nK)
        for z in exterior:
            pxz = chain.probs[x, z]
            if pxz > 0:
                esc += pxz * g[pos[z], nK]
                ret += pxz * g[pos[z], :nK]
        e[i] = np.exp(2.0 * chain.u[x]) * esc
        q[i] = ret
    return e, q


def e_q_truncated(chain: EmbeddedChain, K, retained) -> tuple[np.ndarray, np.ndarray]:
    """Monotone surrogates with absorption at everything outside ``retained``.

    The escape surrogate (exit the retained region before returning to K)
    decreases toward the true escape probability as the retained region
    grows; the re-entry surrogate increases toward the true kernel.
    """
    Kl = sorted(int(k) for k in K)
    d = chain.delta
    retained = set(int(v) for v in retained)
    if not set(Kl) <= retained:
        raise GraphError("K must be interior to the retained region")
    if d in retained:
        raise GraphError("retained region must not contain the boundary vertex")
    outside = [v for v in range(chain.num_states) if v not in retained and v != d]
    interior = [v for v in sorted(retained) if v not in Kl]
    targets = [[k] for k in Kl] + [outside + [d]]
    g = hitting_probs(chain.probs, interior, targets) if interior else np.zeros((0, len(Kl) + 1))
    pos = {z: i for i, z in enumerate(interior)}
    nK = len(Kl)
    e = np.zeros(nK)
    q = np.zeros((nK, nK))
    for i, x in enumerate(Kl):
        esc = chain.probs[x, d] + chain.probs[x, outside].sum()
        ret = np.zeros(nK)
        for z in interior:
            pxz = chain.probs[x, z]
            if pxz > 0:
                esc += pxz * g[pos[z], nK]
                ret += pxz * g[pos[z], :nK]
        e[i] = np.exp(2.0 * chain.u[x]) * esc
        q[i] = ret
    return e, q


@dataclass(frozen=True)
class TruncationBracket:
    """Bracket pair for (e_K, q_K): surrogate at N plus the reference level.

    e_lo/e_hi and q_lo/q_hi satisfy lo <= hi entrywise; the gaps are the
    Cauchy certificates |value(N) - value(N_ref)| reported as error budget.
    """

    e_lo: np.ndarray
    e_hi: np.ndarray
    q_lo: np.ndarray
    q_hi: np.ndarray

    @property
    def e_gap(self) -> np.ndarray:
        return self.e_hi - self.e_lo

    @property
    def q_gap(self) -> np.ndarray:
        return self.q_hi - self.q_lo


def e_q_bracket(chain: EmbeddedChain, K, retained) -> TruncationBracket:
    """Pair the truncation-N surrogates with the full wired-level values."""
    e_n, q_n = e_q_truncated(chain, K, retained)
    e_ref, q_ref = e_q_finite(chain, K)
    return TruncationBracket(e_lo=e_ref, e_hi=e_n, q_lo=q_n, q_hi=q_ref)


def reversibility_check(chain: EmbeddedChain, vertex_path) -> float:
    """Relative residual of beta_a e^{2u_a} P_a(path) = beta_b e^{2u_b} P_b(reversed)."""
    vp = list(vertex_path)
    a, b = vp[0], vp[-1]
    lhs = chain.rates[a] * np.exp(2.0 * chain.u[a]) * path_prob(chain, vp)
    rhs = chain.rates[b] * np.exp(2.0 * chain.u[b]) * path_prob(chain, vp[::-1])
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)


def excursion_first_hit(chain: EmbeddedChain, K) -> np.ndarray:
    """P(first excursion from the boundary vertex hits K first in x), per x in K."""
    Kl, exterior, g = _first_step_decomposition(chain, K)
    d = chain.delta
    pos = {z: i for i, z in enumerate(exterior)}
    nK = len(Kl)
    out = np.zeros(nK)
    for j, x in enumerate(Kl):
        out[j] += chain.probs[d, x]
    for z in exterior:
        pdz = chain.probs[d, z]
        if pdz > 0:
            out += pdz * g[pos[z], :nK]
    return out


def excursion_identity_check(chain: EmbeddedChain, K) -> tuple[np.ndarray, float]:
    """Residuals of beta_delta e^{2u_delta} P_delta(hit K first in x) = beta_x e_K(x).

    Returns (per-vertex relative residuals, summed-form relative residual).
    """
    Kl = sorted(int(k) for k in K)
    e, _ = e_q_finite(chain, K)
    hit = excursion_first_hit(chain, K)
    d = chain.delta
    pref = chain.rates[d] * np.exp(2.0 * chain.u[d])
    lhs = pref * hit
    rhs = np.array([chain.rates[x] for x in Kl]) * e
    scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), 1e-300)
    resid = np.abs(lhs - rhs) / scale
    summed = abs(lhs.sum() - rhs.sum()) / max(abs(lhs.sum()), abs(rhs.sum()), 1e-300)
    return resid, summed
