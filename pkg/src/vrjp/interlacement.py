"""Interlacement point process in a finite window, in a fixed environment.

A window holds an initial piece from the root plus a Poisson number of
two-sided trajectories pivoted at their first K-entry, with i.i.d. uniform
t-labels on (0, T].  Backward halves are escape paths (Doob h-transform of
the chain conditioned to leave the retained region before returning to K);
forward halves are unconditioned walks.  The pivot is drawn proportionally
to beta_x e_K(x).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .mjp import DecoratedPath, EmbeddedChain, e_q_finite, hitting_probs, simulate_mjp_until
from . import stats as vstats


@dataclass(frozen=True)
class InterlacementWindow:
    """Initial piece plus (trajectory, t-label) points hitting K within [0, T]."""

    initial: DecoratedPath
    points: tuple  # ((DecoratedPath two-sided, t), ...) with increasing t
    K: tuple
    T: float
    delta: int
    mass: float  # sum_x beta_x e_K(x) used for the Poisson intensity
    degenerate: bool = False  # flagged when the total mass vanishes


def total_mass(e_vec: np.ndarray, beta_K: np.ndarray) -> float:
    """Total mass sum_x beta_x e_K(x) of the pivot measure."""
    return float(np.asarray(beta_K) @ np.asarray(e_vec))


def escape_field(chain: EmbeddedChain, K) -> np.ndarray:
    """h(v) = P_v(reach the boundary vertex before hitting K); h=1 at delta, 0 on K."""
    kset = sorted(int(k) for k in K)
    d = chain.delta
    interior = [v for v in range(chain.num_states) if v not in kset and v != d]
    h = np.zeros(chain.num_states)
    h[d] = 1.0
    if interior:
        g = hitting_probs(chain.probs, interior, [[d], kset])
        h[interior] = g[:, 0]
    return h


def sample_escape_path(
    chain: EmbeddedChain,
    h: np.ndarray,
    x: int,
    rng: np.random.Generator,
    max_steps: int = 10**6,
) -> DecoratedPath:
    """Escape walk from x in K, conditioned never to return to K.

    Returns the steps strictly after x, stopping when the walk reaches the
    boundary vertex (not stored); holdings are Exponential(beta) at each
    visited state.  Raises when escape from x is impossible.
    """
    first = chain.probs[x] * h
    esc = first.sum()
    if esc <= 0:
        raise NumericalError(f"vertex {x} cannot escape K in this truncation")
    v = int(np.searchsorted(np.cumsum(first), rng.random() * esc, side="right"))
    verts, holds = [], []
    d = chain.delta
    for _ in range(max_steps):
        if v == d:
            return DecoratedPath(np.array(verts, dtype=int), np.array(holds), escaped_end=True)
        verts.append(v)
        holds.append(rng.exponential(1.0 / chain.rates[v]))
        row = chain.probs[v] * h
        tot = row.sum()  # equals h[v] up to solver residual (harmonicity)
        v = int(np.searchsorted(np.cumsum(row), rng.random() * tot, side="right"))
    raise NumericalError("escape path exceeded max_steps")


def sample_qhat(
    chain: EmbeddedChain,
    K,
    e_vec: np.ndarray,
    h: np.ndarray,
    rng: np.random.Generator,
    unconditioned_backward: bool = False,
) -> DecoratedPath:
    """One normalized draw of the two-sided pivoted trajectory.

    Pivot x with probability beta_x e_K(x)/mass, holding Exp(beta_x);
    backward half an escape path, forward half an unconditioned walk stopped
    at the boundary vertex.  ``unconditioned_backward`` deliberately skips
    the h-transform (negative-control hook for the consistency test).
    """
    Kl = sorted(int(k) for k in K)
    weights = np.array([chain.rates[k] for k in Kl]) * np.asarray(e_vec)
    mass = weights.sum()
    if mass <= 0:
        raise NumericalError("pivot measure has zero mass")
    x = Kl[int(np.searchsorted(np.cumsum(weights), rng.random() * mass, side="right"))]
    if unconditioned_backward:
        back = simulate_mjp_until(chain, x, {chain.delta}, rng)
        back = DecoratedPath(back.vertices[1:], back.holdings[1:], escaped_end=True)
    else:
        back = sample_escape_path(chain, h, x, rng)
    l0 = rng.exponential(1.0 / chain.rates[x])
    fwd = simulate_mjp_until(chain, x, {chain.delta}, rng)
    verts = np.concatenate((back.vertices[::-1], fwd.vertices))
    holds = np.concatenate((back.holdings[::-1], fwd.holdings))
    holds[len(back)] = l0
    return DecoratedPath(verts, holds, origin=len(back), escaped_end=fwd.escaped_end)


def sample_window(
    chain: EmbeddedChain, K, T: float, o: int, rng: np.random.Generator
) -> InterlacementWindow:
    """Sample the window: Poisson(T * mass) trajectories with sorted uniform labels."""
    Kl = tuple(sorted(int(k) for k in K))
    e_vec, _ = e_q_finite(chain, Kl)
    beta_K = np.array([chain.rates[k] for k in Kl])
    mass = total_mass(e_vec, beta_K)
    initial = simulate_mjp_until(chain, o, {chain.delta}, rng)
    if mass <= 0:
        return InterlacementWindow(initial, (), Kl, float(T), chain.delta, 0.0, degenerate=True)
    count = rng.poisson(T * mass)
    labels = np.sort(rng.uniform(0.0, T, size=count))
    h = escape_field(chain, Kl)
    points = tuple((sample_qhat(chain, Kl, e_vec, h, rng), float(t)) for t in labels)
    return InterlacementWindow(initial, points, Kl, float(T), chain.delta, mass)


def _repivot_at_first_hit(traj: DecoratedPath, kset) -> DecoratedPath | None:
    """Shift the pivot to the first K-visit at index >= 0; None if K unvisited."""
    fwd_slice = traj.vertices[traj.origin :]
    hits = [i for i, v in enumerate(fwd_slice) if int(v) in kset]
    if not hits:
        return None
    return DecoratedPath(traj.vertices, traj.holdings, traj.origin + hits[0], traj.escaped_end)


def _trajectory_signature(traj: DecoratedPath, delta: int, n_fwd: int = 3, n_bwd: int = 2):
    """Discrete statistic: pivot, first forward steps, first backward steps.

    Steps beyond the stored horizon are reported as the boundary vertex when
    the trajectory carries the escape certificate, else as -1.
    """
    lo, hi = traj.index_range()
    out = [int(traj.at(0)[0])]
    for k in range(1, n_fwd + 1):
        if k < hi:
            out.append(int(traj.at(k)[0]))
        else:
            out.append(delta if traj.escaped_end else -1)
    for k in range(1, n_bwd + 1):
        if -k >= lo:
            out.append(int(traj.at(-k)[0]))
        else:
            out.append(delta)
    return tuple(out)


@dataclass
class ConsistencyReport:
    p_value: float
    n_direct: int
    n_conditioned: int
    underpowered: bool


def consistency_test(
    chain: EmbeddedChain,
    K,
    K_prime,
    samples: int,
    rng: np.random.Generator,
    min_conditioned: int = 200,
) -> ConsistencyReport:
    """Restriction property: a draw pivoted on K' and conditioned to hit K,
    re-pivoted at its first K-entry, matches a direct draw pivoted on K.

    Compares the discrete signature (pivot, 3 forward steps, 2 backward
    steps) by a two-sample chi-square test.
    """
    kset = set(int(k) for k in K)
    kp = sorted(int(k) for k in K_prime)
    if not kset <= set(kp):
        raise ValueError("K must be contained in K_prime")
    e_k, _ = e_q_finite(chain, sorted(kset))
    e_kp, _ = e_q_finite(chain, kp)
    h_k = escape_field(chain, sorted(kset))
    h_kp = escape_field(chain, kp)
    direct, conditioned = [], []
    for _ in range(samples):
        traj = sample_qhat(chain, sorted(kset), e_k, h_k, rng)
        direct.append(_trajectory_signature(traj, chain.delta))
    for _ in range(samples):
        traj = sample_qhat(chain, kp, e_kp, h_kp, rng)
        shifted = _repivot_at_first_hit(traj, kset)
        if shifted is not None:
            conditioned.append(_trajectory_signature(shifted, chain.delta))
    _, p, _ = vstats.chi2_two_sample(direct, conditioned)
    return ConsistencyReport(
        p_value=p,
        n_direct=len(direct),
        n_conditioned=len(conditioned),
        underpowered=len(conditioned) < min_conditioned,
    )
