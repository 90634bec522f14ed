import numpy as np
import pytest

from vrjp.environment import MCMCParams, compute_psi_u, sample_rho_o
from vrjp.graph import build_graph, wire
from vrjp.mjp import build_chain


@pytest.fixture(scope="session")
def two_vertex_wired():
    """Base path p-o-x-q with unit conductances; wire {o, x}.

    Wired graph has C_ox = C_odelta = C_xdelta = 1; with beta = (1, 1) this
    gives psi = (1, 1, 1), u = 0, beta_delta = 1: the standard worked example.
    """
    g = build_graph(
        {"family": "explicit", "vertices": 4, "edges": [[0, 1, 1.0], [1, 2, 1.0], [2, 3, 1.0]], "root": 1}
    )
    return wire(g, [1, 2])


@pytest.fixture(scope="session")
def symmetric_chain(two_vertex_wired):
    beta = np.array([1.0, 1.0])
    uf = compute_psi_u(two_vertex_wired, beta)
    return build_chain(two_vertex_wired, beta, uf)


@pytest.fixture(scope="session")
def asym_wired():
    """Asymmetric conductances so that u is nontrivial."""
    g = build_graph(
        {"family": "explicit", "vertices": 4, "edges": [[0, 1, 2.0], [1, 2, 1.0], [2, 3, 3.0]], "root": 1}
    )
    return wire(g, [1, 2])


@pytest.fixture(scope="session")
def asym_env(asym_wired):
    samples, _ = sample_rho_o(asym_wired, 1, seed=1234, params=MCMCParams(burn_in=300, thin=2, chains=1))
    return samples[0]


@pytest.fixture(scope="session")
def asym_chain(asym_wired, asym_env):
    return build_chain(asym_wired, asym_env.beta, asym_env.ufield)


@pytest.fixture(scope="session")
def box_wired():
    """3^3 center box of a 5^3 grid, wired."""
    g = build_graph({"family": "grid", "dim": 3, "side": 5, "conductance": 1.0})
    center = np.asarray(g.coords[g.root])
    vn = [
        v
        for v in range(g.num_vertices)
        if np.max(np.abs(np.asarray(g.coords[v]) - center)) <= 1
    ]
    return wire(g, vn)


@pytest.fixture(scope="session")
def box_env(box_wired):
    samples, _ = sample_rho_o(box_wired, 1, seed=77, params=MCMCParams(burn_in=250, thin=2, chains=1))
    return samples[0]


@pytest.fixture(scope="session")
def box_chain(box_wired, box_env):
    return build_chain(box_wired, box_env.beta, box_env.ufield)
