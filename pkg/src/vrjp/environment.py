"""The random environment: H matrices, psi/u fields, samplers, Laplace oracle.

The environment measure on a finite vertex set with conductances C has the
unnormalized density f(beta) = 1_{H_beta > 0} exp(-0.5 * 1^T H_beta 1)
det(H_beta)^{-1/2} where (H_beta)_{xy} = 2 beta_x 1_{x=y} - C_{xy}.  Its
Laplace transform factorizes over edges; ``laplace_oracle`` evaluates the
closed form exactly and is the reference every sampler is tested against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import BetaNotInB, NumericalError
from .graph import WiredGraph

SOLVE_RTOL = 1e-9  # relative residual accepted from linear solves


@dataclass(frozen=True)
class BetaField:
    """Field of total exit rates, aligned to ``vertices`` (wired indices)."""

    values: np.ndarray
    vertices: tuple
    includes_delta: bool = False
    verified_level: int | None = None  # nested PD certificate depth, if checked


@dataclass(frozen=True)
class UField:
    """Log-potentials u_{o,.} on V_n plus the boundary vertex.

    ``u[root] == 0``; ``psi`` is the solved field with psi[delta] = 1;
    ``beta_delta`` the induced exit rate at the boundary vertex.
    """

    root: int
    u: np.ndarray  # length m+1, delta last
    psi: np.ndarray  # length m+1, psi[delta] = 1
    beta_delta: float


@dataclass(frozen=True)
class GammaCoupling:
    gamma_o: float
    beta_new: np.ndarray  # length m+1, the field whose law is the nu-measure


@dataclass
class MCMCParams:
    burn_in: int = 10_000  # sweeps
    thin: int = 10  # sweeps between emitted draws
    chains: int = 64


@dataclass
class SamplerDiagnostics:
    acceptance_rate: float
    ess: float
    sweeps: int
    chains: int
    rejected: int = 0  # post-hoc rejected draws (rho_o assembly failures)


def build_H(conduct: np.ndarray, beta: np.ndarray, subset=None) -> np.ndarray:
    """H = 2 diag(beta) - C, restricted to ``subset`` (indices into conduct)."""
    conduct = np.asarray(conduct, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if subset is None:
        subset = np.arange(conduct.shape[0])
    subset = np.asarray(subset, dtype=int)
    H = -conduct[np.ix_(subset, subset)]
    H[np.diag_indices_from(H)] = 2.0 * beta[subset]
    return H


def _cholesky_or_raise(H: np.ndarray, level):
    try:
        return sla.cho_factor(H, lower=True)
    except np.linalg.LinAlgError:
        raise BetaNotInB(level) from None


def compute_psi_u(wired: WiredGraph, beta_vn: np.ndarray, o: int | None = None) -> UField:
    """Solve H^{(n)} psi = C_{V_n,delta}, take logs, normalize at o.

    Raises BetaNotInB if H is not positive definite, NumericalError on a
    non-positive psi entry or a residual above SOLVE_RTOL.
    """
    m = len(wired.vn)
    o = wired.root if o is None else int(o)
    beta_vn = np.asarray(beta_vn, dtype=float)
    if beta_vn.shape != (m,):
        raise ValueError(f"beta has shape {beta_vn.shape}, expected ({m},)")
    H = build_H(wired.conduct, np.append(beta_vn, 0.0), np.arange(m))
    rhs = wired.conduct[:m, m].copy()
    factor = _cholesky_or_raise(H, m)
    psi = sla.cho_solve(factor, rhs)
    resid = np.linalg.norm(H @ psi - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if resid > SOLVE_RTOL:
        raise NumericalError(f"psi solve residual {resid:.3e} above tolerance")
    if np.any(psi <= 0):
        raise NumericalError("non-positive psi entry (numerical failure)")
    psi_full = np.append(psi, 1.0)
    u = np.log(psi_full) - np.log(psi_full[o])
    beta_delta = 0.5 * float(wired.conduct[m, :m] @ psi)
    return UField(root=o, u=u, psi=psi_full, beta_delta=beta_delta)


def beta_u_residual(conduct: np.ndarray, beta_full: np.ndarray, u: np.ndarray) -> float:
    """max_x |beta_x - 0.5 sum_y C_xy e^{u_y - u_x}| over all states."""
    eu = np.exp(u)
    implied = 0.5 * (conduct @ eu) / eu
    return float(np.max(np.abs(beta_full - implied)))


def verify_b_membership(conduct: np.ndarray, beta: np.ndarray, nested_subsets) -> int:
    """Check positive definiteness of every nested restriction; return depth."""
    level = 0
    for subset in nested_subsets:
        H = build_H(conduct, beta, subset)
        _cholesky_or_raise(H, len(subset))
        level += 1
    return level


def laplace_oracle(conduct: np.ndarray, lam: np.ndarray, boundary: np.ndarray | None = None) -> float:
    """Exact Laplace transform E[e^{-<lam, beta>}] of the environment measure.

    ``boundary`` adds terms eta_x (sqrt(lam_x + 1) - 1) for graphs carrying
    aggregated boundary weights (the marginal with the boundary vertex pinned
    at lambda = 0).
    """
    conduct = np.asarray(conduct, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= -1.0):
        raise ValueError("lambda entries must be > -1")
    s = np.sqrt(lam + 1.0)
    iu = np.triu_indices(conduct.shape[0], k=1)
    edge_term = float(np.sum(conduct[iu] * (np.outer(s, s)[iu] - 1.0)))
    boundary_term = 0.0
    if boundary is not None:
        boundary_term = float(np.sum(np.asarray(boundary, dtype=float) * (s - 1.0)))
    return float(np.exp(-edge_term - boundary_term) * np.prod(1.0 / s))


class NuGibbsSampler:
    """Systematic-scan Gibbs sampler for the environment measure.

    The full conditional of beta_x given the rest is s_x/2 + Gamma(1/2, 1)
    with s_x = 2 beta_x - 1/(H^{-1})_{xx}, which keeps H positive definite by
    construction.  Runs ``chains`` replicas in lockstep; the inverse is
    maintained by rank-1 updates and refreshed every sweep.
    """

    def __init__(self, conduct: np.ndarray, rng: np.random.Generator, chains: int = 64):
        self.conduct = np.asarray(conduct, dtype=float)
        self.n = self.conduct.shape[0]
        self.rng = rng
        self.chains = int(chains)
        # diagonally dominant start: H strictly PD
        beta0 = 0.5 * self.conduct.sum(axis=1) + 1.0
        self.beta = np.tile(beta0, (self.chains, 1))
        self.sweeps_done = 0
        self._refresh()

    def _H(self) -> np.ndarray:
        H = np.broadcast_to(-self.conduct, (self.chains, self.n, self.n)).copy()
        ii = np.arange(self.n)
        H[:, ii, ii] = 2.0 * self.beta
        return H

    def _refresh(self):
        self.G = np.linalg.inv(self._H())

    def sweep(self):
        rng, G, beta = self.rng, self.G, self.beta
        for x in range(self.n):
            gxx = G[:, x, x]
            s = 2.0 * beta[:, x] - 1.0 / gxx
            new = 0.5 * s + rng.gamma(0.5, 1.0, size=self.chains)
            delta = new - beta[:, x]
            denom = 1.0 + 2.0 * delta * gxx
            gcol = G[:, :, x].copy()
            G -= (2.0 * delta / denom)[:, None, None] * gcol[:, :, None] * gcol[:, None, :]
            beta[:, x] = new
        self._refresh()
        self.sweeps_done += 1

    def run(self, n_draws: int, burn_in: int, thin: int) -> np.ndarray:
        """Return (n_draws, n) array; draws are emitted chain-major per round."""
        for _ in range(burn_in):
            self.sweep()
        rounds = -(-n_draws // self.chains)
        out = np.empty((rounds * self.chains, self.n))
        for r in range(rounds):
            for _ in range(max(thin, 1)):
                self.sweep()
            out[r * self.chains : (r + 1) * self.chains] = self.beta
        return out[:n_draws]


def _ess_estimate(series: np.ndarray) -> float:
    """Effective sample size via the initial-positive-sequence estimator."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 4 or np.var(x) == 0:
        return float(n)
    x = x - x.mean()
    acf = np.correlate(x, x, mode="full")[n - 1 :] / (np.arange(n, 0, -1) * np.var(x))
    tau = 1.0
    for k in range(1, min(n // 2, 200)):
        if acf[k] <= 0:
            break
        tau += 2.0 * acf[k]
    return float(n / max(tau, 1e-12))


def sample_nu(
    conduct: np.ndarray,
    samples: int,
    seed=None,
    rng: np.random.Generator | None = None,
    params: MCMCParams | None = None,
) -> tuple[np.ndarray, SamplerDiagnostics]:
    """Draw from the environment measure on the given finite weighted graph.

    For the wired variant pass the full (m+1)x(m+1) conductance matrix; the
    boundary vertex is then an ordinary coordinate of the field.
    """
    params = params or MCMCParams()
    rng = rng if rng is not None else np.random.default_rng(seed)
    chains = max(1, min(params.chains, samples))
    sampler = NuGibbsSampler(conduct, rng, chains)
    draws = sampler.run(samples, params.burn_in, params.thin)
    ess = _ess_estimate(draws.sum(axis=1))
    diag = SamplerDiagnostics(
        acceptance_rate=1.0, ess=ess, sweeps=sampler.sweeps_done, chains=chains
    )
    return draws, diag


@dataclass(frozen=True)
class RhoSample:
    """One draw of the environment together with its coupling variables."""

    beta: np.ndarray  # on V_n (wired order, without delta)
    ufield: UField
    coupling: GammaCoupling


def _rho_from_beta_new(wired: WiredGraph, beta_new: np.ndarray, o: int) -> RhoSample:
    """Invert one nu-draw on the wired graph into (beta, u, gamma_o)."""
    m = len(wired.vn)
    conduct = wired.conduct
    keep = np.array([i for i in range(m + 1) if i != o])
    H = build_H(conduct, beta_new, keep)
    rhs = conduct[keep, o]
    factor = _cholesky_or_raise(H, m + 1)
    eu_rest = sla.cho_solve(factor, rhs)
    resid = np.linalg.norm(H @ eu_rest - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if resid > SOLVE_RTOL:
        raise NumericalError(f"u solve residual {resid:.3e} above tolerance")
    if np.any(eu_rest <= 0):
        raise NumericalError("non-positive e^u entry")
    eu = np.ones(m + 1)
    eu[keep] = eu_rest
    beta_o = 0.5 * float(conduct[o] @ eu)
    gamma_o = float(beta_new[o]) - beta_o
    if gamma_o <= 0:
        raise NumericalError("gamma_o <= 0 (should be a null event)")
    beta = beta_new[:m].copy()
    beta[o] = beta_o
    u = np.log(eu)
    psi = eu / eu[m]
    uf = UField(root=o, u=u, psi=psi, beta_delta=float(beta_new[m]))
    return RhoSample(beta=beta, ufield=uf, coupling=GammaCoupling(gamma_o, beta_new.copy()))


def sample_rho_o(
    wired: WiredGraph,
    samples: int,
    seed=None,
    rng: np.random.Generator | None = None,
    params: MCMCParams | None = None,
    o: int | None = None,
) -> tuple[list[RhoSample], SamplerDiagnostics]:
    """Sample the root-referenced environment on the wired graph.

    Draws the nu-field on V_n plus boundary, solves for e^{u_{o,.}} with
    u_{o,o} = 0, and splits off gamma_o.  Draws failing positivity or
    residual checks are discarded and counted in the diagnostics.
    """
    params = params or MCMCParams()
    rng = rng if rng is not None else np.random.default_rng(seed)
    o = wired.root if o is None else int(o)
    chains = max(1, min(params.chains, samples))
    sampler = NuGibbsSampler(wired.conduct, rng, chains)
    out: list[RhoSample] = []
    rejected = 0
    for _ in range(params.burn_in):
        sampler.sweep()
    guard = 0
    while len(out) < samples:
        for _ in range(max(params.thin, 1)):
            sampler.sweep()
        for row in sampler.beta:
            if len(out) >= samples:
                break
            try:
                out.append(_rho_from_beta_new(wired, row.copy(), o))
            except NumericalError:
                rejected += 1
        guard += 1
        if guard > 1000 + 10 * (samples // chains + 1):
            raise NumericalError("rho_o sampler failed to accumulate the requested draws")
    ess = _ess_estimate(np.array([s.beta.sum() for s in out]))
    diag = SamplerDiagnostics(
        acceptance_rate=1.0, ess=ess, sweeps=sampler.sweeps_done, chains=chains, rejected=rejected
    )
    return out, diag
