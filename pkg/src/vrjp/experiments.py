"""Analytic rate tables for the reductions and the convergence experiments."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import stats as vstats
from .environment import MCMCParams, sample_rho_o
from .errors import BetaNotInB, NumericalError
from .graph import Exhaustion, WeightedGraph, wire, wired_subset
from .interlacement import total_mass
from .mjp import EmbeddedChain, build_chain, e_q_bracket, e_q_finite, simulate_mjp_until
from .reduction import k_reduce, kplus_reduce
from .reinforced import simulate_vrjp_blocks


@dataclass(frozen=True)
class RateTable:
    """Transition rates on K union {delta} (labels carry base ids, delta last).

    ``rates`` has zero diagonal.  Bracket tables carry entrywise lo <= hi and
    the gap as truncation certificate.  Self re-entry mass q(x,x) appears as
    a separate channel (merged blocks prolong the holding instead of jumping),
    and ``exit_rates`` reports the reduced total exit rate beta_x (1 - q(x,x)).
    """

    labels: tuple  # base ids of K, then "delta"
    rates: np.ndarray
    kind: str  # "finite" | "bracket"
    self_rates: np.ndarray
    exit_rates: np.ndarray
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    gap: np.ndarray | None = None
    gap_warning: bool = False
    level: object = None
    env_id: object = None


def _k_order(chain: EmbeddedChain, K):
    Kl = sorted(int(k) for k in K)
    if chain.wired is not None:
        labels = tuple(chain.wired.to_base(k) for k in Kl) + ("delta",)
    else:
        labels = tuple(Kl) + ("delta",)
    return Kl, labels


def rate_table_finite(chain: EmbeddedChain, K, level=None, env_id=None) -> RateTable:
    """Rates of the modified reduction at finite volume.

    x -> y in K: 0.5 C_xy e^{u_y - u_x} + beta_x q(x, y)  (= beta_x (P_xy + q_xy));
    x -> delta: beta_x e^{-2u_x} e(x);  delta -> y: beta_y e(y).
    """
    Kl, labels = _k_order(chain, K)
    e, q = e_q_finite(chain, Kl)
    nK = len(Kl)
    R = np.zeros((nK + 1, nK + 1))
    beta_K = np.array([chain.rates[x] for x in Kl])
    for i, x in enumerate(Kl):
        for j, y in enumerate(Kl):
            if i != j:
                R[i, j] = beta_K[i] * (chain.probs[x, y] + q[i, j])
        R[i, nK] = beta_K[i] * np.exp(-2.0 * chain.u[x]) * e[i]
    R[nK, :nK] = beta_K * e
    self_rates = beta_K * np.diag(q)
    exit_rates = np.append(beta_K * (1.0 - np.diag(q)), total_mass(e, beta_K))
    return RateTable(labels, R, "finite", self_rates, exit_rates, level=level, env_id=env_id)


def rate_table_infinite(
    chain: EmbeddedChain, K, retained, gap_warn_rel: float = 0.1, level=None, env_id=None
) -> RateTable:
    """Bracketed rates from the truncation surrogates at ``retained`` paired
    with the full wired level; entries carry lo <= hi and the gap."""
    Kl, labels = _k_order(chain, K)
    br = e_q_bracket(chain, Kl, retained)
    nK = len(Kl)
    beta_K = np.array([chain.rates[x] for x in Kl])
    lo = np.zeros((nK + 1, nK + 1))
    hi = np.zeros((nK + 1, nK + 1))
    for i, x in enumerate(Kl):
        for j, y in enumerate(Kl):
            if i != j:
                base = beta_K[i] * chain.probs[x, y]
                lo[i, j] = base + beta_K[i] * br.q_lo[i, j]
                hi[i, j] = base + beta_K[i] * br.q_hi[i, j]
        scale = beta_K[i] * np.exp(-2.0 * chain.u[x])
        lo[i, nK] = scale * br.e_lo[i]
        hi[i, nK] = scale * br.e_hi[i]
    lo[nK, :nK] = beta_K * br.e_lo
    hi[nK, :nK] = beta_K * br.e_hi
    gap = hi - lo
    mid = 0.5 * (lo + hi)
    warn = bool(np.any(gap > gap_warn_rel * np.maximum(mid, 1e-12) * (mid > 0)))
    self_lo = beta_K * np.diag(br.q_lo)
    exit_mid = np.append(beta_K * (1.0 - 0.5 * (np.diag(br.q_lo) + np.diag(br.q_hi))),
                         total_mass(0.5 * (br.e_lo + br.e_hi), beta_K))
    return RateTable(labels, mid, "bracket", self_lo, exit_mid, lo=lo, hi=hi, gap=gap,
                     gap_warning=warn, level=level, env_id=env_id)


def empirical_rate_table(reduced_paths, state_labels) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """CTMC maximum-likelihood rates from reduced paths.

    The final emitted block of each path is excluded entirely (its outgoing
    transition is unobserved; keeping its holding would bias rates low).
    Returns (rates, stderr, transition counts, holding totals).
    """
    idx = {s: i for i, s in enumerate(state_labels)}
    k = len(state_labels)
    counts = np.zeros((k, k))
    holding = np.zeros(k)
    for rp in reduced_paths:
        v, h = rp.vertices, rp.holdings
        for i in range(len(v) - 1):
            a, b = idx[int(v[i])], idx[int(v[i + 1])]
            counts[a, b] += 1
            holding[a] += h[i]
    with np.errstate(divide="ignore", invalid="ignore"):
        rates = np.where(holding[:, None] > 0, counts / holding[:, None], 0.0)
        stderr = np.where(holding[:, None] > 0, np.sqrt(counts) / holding[:, None], np.inf)
    return rates, stderr, counts, holding


def _mjp_batch(P_stack, rate_stack, z: int, steps: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Lockstep quenched walks, one chain per replica (mixture simulation)."""
    R = P_stack.shape[0]
    rows = np.arange(R)
    cur = np.full(R, int(z))
    verts = np.empty((R, steps + 1), dtype=np.int32)
    holds = np.empty((R, steps + 1))
    for k in range(steps + 1):
        verts[:, k] = cur
        holds[:, k] = rng.exponential(1.0, size=R) / rate_stack[rows, cur]
        if k < steps:
            prow = P_stack[rows, cur]
            cur = (np.cumsum(prow, axis=1) > rng.random(R)[:, None]).argmax(axis=1)
    return verts, holds


@dataclass
class MixtureReport:
    p_chi2: float
    p_ks: float
    p_chi2_control: float
    replicas: int
    rejected_envs: int


def mixture_test(
    wired,
    J: int,
    replicas: int,
    rng: np.random.Generator,
    mcmc: MCMCParams | None = None,
    control_rng: np.random.Generator | None = None,
) -> MixtureReport:
    """Direct reinforced walk on the wired graph vs the quenched mixture.

    Vertex sequences are compared by a two-sample chi-square test, pooled
    holding times by a two-sample KS test.  The negative control forces
    u = 0 in the mixture chains and must be rejected.
    """
    from .reinforced import simulate_vrjp_batch

    mcmc = mcmc or MCMCParams(burn_in=300, thin=5, chains=64)
    o = wired.root
    v_a, h_a = simulate_vrjp_batch(wired.conduct, o, J, replicas, rng)
    envs, diag = sample_rho_o(wired, replicas, rng=rng, params=mcmc)
    m = wired.num_states
    P_stack = np.empty((replicas, m, m))
    rate_stack = np.empty((replicas, m))
    P_zero = np.empty((replicas, m, m))
    for i, env in enumerate(envs):
        eu = np.exp(env.ufield.u)
        w = wired.conduct * eu[None, :]
        P_stack[i] = w / w.sum(axis=1, keepdims=True)
        rate_stack[i] = np.append(env.beta, env.ufield.beta_delta)
        w0 = wired.conduct
        P_zero[i] = w0 / w0.sum(axis=1, keepdims=True)
    v_b, h_b = _mjp_batch(P_stack, rate_stack, o, J, rng)
    seq_a = [tuple(r) for r in v_a.tolist()]
    seq_b = [tuple(r) for r in v_b.tolist()]
    _, p_chi2, _ = vstats.chi2_two_sample(seq_a, seq_b)
    _, p_ks = vstats.ks_two_sample(h_a.ravel(), h_b.ravel())
    crng = control_rng if control_rng is not None else rng
    v_c, _ = _mjp_batch(P_zero, rate_stack, o, J, crng)
    seq_c = [tuple(r) for r in v_c.tolist()]
    _, p_control, _ = vstats.chi2_two_sample(seq_a, seq_c)
    return MixtureReport(p_chi2, p_ks, p_control, replicas, diag.rejected)


def reduced_interlacement_draw(
    chain: EmbeddedChain, K, J: int, rng: np.random.Generator, modified: bool = False
) -> tuple[tuple, np.ndarray]:
    """First J+1 blocks of the reduced interlacement, sampled on demand.

    Appends i.i.d. (boundary gap, pivoted trajectory) pairs after the initial
    piece until J+1 blocks exist; equivalent to a window with unbounded
    horizon restricted to its first blocks.
    """
    Kl = sorted(int(k) for k in K)
    kset = set(Kl)
    e_vec, _ = e_q_finite(chain, Kl)
    beta_K = np.array([chain.rates[x] for x in Kl])
    weights = beta_K * e_vec
    mass = weights.sum()
    if mass <= 0:
        raise NumericalError("degenerate window: pivot measure has zero mass")
    cum_w = np.cumsum(weights)
    d = chain.delta
    init = k_reduce(simulate_mjp_until(chain, _root(chain), {d}, rng), kset)
    verts = list(init.vertices)
    holds = list(init.holdings)
    while len(verts) < J + 1:
        gap = rng.exponential(1.0 / mass) if modified else 0.0
        verts.append(d)
        holds.append(gap)
        x = Kl[int(np.searchsorted(cum_w, rng.random() * mass, side="right"))]
        fwd = simulate_mjp_until(chain, x, {d}, rng)
        red = k_reduce(fwd, kset)
        verts.extend(red.vertices.tolist())
        holds.extend(red.holdings.tolist())
    return tuple(int(v) for v in verts[: J + 1]), np.array(holds[: J + 1])


def _root(chain: EmbeddedChain) -> int:
    if chain.wired is None:
        raise ValueError("chain carries no wired graph; pass the start explicitly")
    return chain.wired.root


@dataclass
class MainTheoremReport:
    n_list: list
    distances: list  # per n: dict with chi2_per_sample, ks_sum, tv, total
    null_floor: float
    p_chi2_matched: float
    p_ks_matched: list  # per holding coordinate of the modal sequence
    replicas: int
    ref_level: int


def _vrjp_reduced_sample(graph, vn, K_base, J, replicas, rng) -> list[tuple[tuple, np.ndarray]]:
    wired = wire(graph, vn)
    Kw = wired_subset(wired, K_base)
    raw = simulate_vrjp_blocks(
        wired.conduct, wired.root, Kw, wired.delta, J + 1, replicas, rng
    )
    out = []
    for v, h in raw:
        red = kplus_reduce((v, h), Kw, wired.delta, tail_complete=False)
        if len(red) < J + 1:
            continue
        base_labels = tuple(
            wired.to_base(int(x)) if int(x) != wired.delta else -1 for x in red.vertices[: J + 1]
        )
        out.append((base_labels, red.holdings[: J + 1].copy()))
    return out


def _ref_reduced_sample(graph, vn, K_base, J, replicas, rng, mcmc) -> list[tuple[tuple, np.ndarray]]:
    wired = wire(graph, vn)
    Kw = wired_subset(wired, K_base)
    envs, _ = sample_rho_o(wired, replicas, rng=rng, params=mcmc)
    out = []
    for env in envs:
        chain = build_chain(wired, env.beta, env.ufield)
        vseq, hvec = reduced_interlacement_draw(chain, Kw, J, rng)
        base_labels = tuple(
            wired.to_base(int(x)) if int(x) != wired.delta else -1 for x in vseq
        )
        out.append((base_labels, hvec))
    return out


def _sample_distance(sample_a, sample_b) -> dict:
    seq_a = [s for s, _ in sample_a]
    seq_b = [s for s, _ in sample_b]
    stat, _, _ = vstats.chi2_two_sample(seq_a, seq_b)
    chi2_per = stat / (len(seq_a) + len(seq_b))
    tv = vstats.sequence_tv_distance(seq_a, seq_b)
    modal = Counter(seq_b).most_common(1)[0][0]
    ha = np.array([h for s, h in sample_a if s == modal])
    hb = np.array([h for s, h in sample_b if s == modal])
    ks_sum = 0.0
    if len(ha) > 10 and len(hb) > 10:
        for j, v in enumerate(modal):
            if v == -1:  # boundary coordinate: zero holdings in the plain flavor
                continue
            ks_stat, _ = vstats.ks_two_sample(ha[:, j], hb[:, j])
            ks_sum += ks_stat
    return {"chi2_per_sample": chi2_per, "tv": tv, "ks_sum": ks_sum, "total": tv + ks_sum}


def main_theorem_test(
    graph: WeightedGraph,
    exh: Exhaustion,
    K_base,
    J: int,
    n_list,
    ref_level: int,
    replicas: int,
    rng: np.random.Generator,
    mcmc: MCMCParams | None = None,
) -> MainTheoremReport:
    """Distance between the reduced reinforced walk at each level and the
    reduced interlacement reference; hypothesis tests at the matched level."""
    mcmc = mcmc or MCMCParams(burn_in=300, thin=5, chains=64)
    ref = _ref_reduced_sample(graph, exh.level(ref_level), K_base, J, replicas, rng, mcmc)
    half = len(ref) // 2
    null_floor = _sample_distance(ref[:half], ref[half:])["total"]
    distances = []
    matched_sample = None
    for n in n_list:
        sample_n = _vrjp_reduced_sample(graph, exh.level(n), K_base, J, replicas, rng)
        distances.append(_sample_distance(sample_n, ref))
        if n == max(n_list):
            matched_sample = sample_n
    # matched-volume hypothesis tests at the top level
    if ref_level == max(n_list):
        ref_matched = ref
    else:
        ref_matched = _ref_reduced_sample(
            graph, exh.level(max(n_list)), K_base, J, replicas, rng, mcmc
        )
    seq_a = [s for s, _ in matched_sample]
    seq_b = [s for s, _ in ref_matched]
    _, p_chi2, _ = vstats.chi2_two_sample(seq_a, seq_b)
    modal = Counter(seq_b).most_common(1)[0][0]
    ha = np.array([h for s, h in matched_sample if s == modal])
    hb = np.array([h for s, h in ref_matched if s == modal])
    p_ks = []
    for j, v in enumerate(modal):
        if v == -1:
            continue
        _, p = vstats.ks_two_sample(ha[:, j], hb[:, j])
        p_ks.append(p)
    return MainTheoremReport(
        n_list=list(n_list),
        distances=distances,
        null_floor=null_floor,
        p_chi2_matched=p_chi2,
        p_ks_matched=p_ks,
        replicas=replicas,
        ref_level=ref_level,
    )


@dataclass
class RateConvergenceResult:
    rows: list  # dict rows for rates.csv
    u_rows: list  # per-level e^{u} trajectories for the Cauchy check
    deviations: dict  # env_id -> (n_list, per-n max deviation beyond bracket)
    max_gap: float


def rate_convergence_experiment(
    graph: WeightedGraph,
    exh: Exhaustion,
    K_base,
    n_list,
    trunc_level: int,
    n_envs: int,
    rng: np.random.Generator,
    mcmc: MCMCParams | None = None,
    bracket_inner_level: int | None = None,
) -> RateConvergenceResult:
    """Independent environments sampled at the top level (one Gibbs chain
    each); per-sub-volume rate tables compared against the bracketed
    reference computed from the same environment, with truncation
    certificates; environments failing positive definiteness at a sub-level
    are resampled."""
    from .environment import compute_psi_u

    mcmc = mcmc or MCMCParams(burn_in=300, thin=10, chains=max(1, n_envs))
    if trunc_level < max(n_list):
        raise ValueError("trunc_level must be >= max(n_list)")
    bracket_inner_level = bracket_inner_level or max(n_list)
    wired_T = wire(graph, exh.level(trunc_level))
    K_T = wired_subset(wired_T, K_base)
    inner = wired_subset(wired_T, exh.level(bracket_inner_level))
    wired_by_n = {n: wire(graph, exh.level(n)) for n in n_list}
    pool, _ = sample_rho_o(wired_T, n_envs, rng=rng, params=mcmc)
    pool = list(pool)
    rows, u_rows = [], []
    deviations = {}
    max_gap = 0.0
    env_id = 0
    refills = 0
    while env_id < n_envs:
        if not pool:
            refills += 1
            if refills > 5:
                raise NumericalError("too many environments rejected (beta not in B)")
            pool, _ = sample_rho_o(wired_T, n_envs, rng=rng, params=mcmc)
            pool = list(pool)
        env = pool.pop(0)
        chain_T = build_chain(wired_T, env.beta, env.ufield)
        table_inf = rate_table_infinite(chain_T, K_T, inner, level=trunc_level, env_id=env_id)
        try:
            per_n = []
            for n in n_list:
                wired_n = wired_by_n[n]
                beta_n = np.array([env.beta[wired_T.index[b]] for b in wired_n.vn])
                uf_n = compute_psi_u(wired_n, beta_n)
                chain_n = build_chain(wired_n, beta_n, uf_n)
                K_n = wired_subset(wired_n, K_base)
                per_n.append((n, rate_table_finite(chain_n, K_n, level=n, env_id=env_id), uf_n, wired_n))
        except BetaNotInB:
            continue  # resample the environment
        max_gap = max(max_gap, float(table_inf.gap.max()))
        dev_list = []
        for n, table_n, uf_n, wired_n in per_n:
            dev = np.maximum(table_inf.lo - table_n.rates, table_n.rates - table_inf.hi)
            dev = np.maximum(dev, 0.0)
            dev_list.append(float(dev.max()))
            for i, a in enumerate(table_n.labels):
                for j, b in enumerate(table_n.labels):
                    if i == j:
                        continue
                    rows.append(
                        {
                            "env_id": env_id,
                            "n": n,
                            "x": a,
                            "y": b,
                            "rate_kind": _kind(i, j, len(table_n.labels)),
                            "r_n": table_n.rates[i, j],
                            "r_inf_lo": table_inf.lo[i, j],
                            "r_inf_hi": table_inf.hi[i, j],
                            "gap": table_inf.gap[i, j],
                        }
                    )
            for b in K_base:
                u_rows.append(
                    {
                        "env_id": env_id,
                        "vertex": b,
                        "n": n,
                        "e_u": float(np.exp(uf_n.u[wired_n.index[b]])),
                    }
                )
        deviations[env_id] = (list(n_list), dev_list)
        env_id += 1
    return RateConvergenceResult(rows=rows, u_rows=u_rows, deviations=deviations, max_gap=max_gap)


def _kind(i: int, j: int, size: int) -> str:
    d = size - 1
    if i == d:
        return "delta_to_k"
    if j == d:
        return "k_to_delta"
    return "k_to_k"
