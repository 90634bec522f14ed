"""Configuration, seeding, and serialization for the command-line tools.

All randomness derives from a single master seed through documented
SeedSequence keys (module tag, replica index), so any run is reproducible
bit-exactly from (config, seed) regardless of execution strategy.  CSV files
carry a schema comment line and 17-significant-digit floats so values
round-trip exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .environment import MCMCParams
from .errors import ConfigError, GraphError
from .graph import Exhaustion, WeightedGraph, build_graph, exhaustion

# module tags for stream splitting (documented, stable)
STREAM_TAGS = {
    "sample_nu": 1,
    "sample_rho_o": 2,
    "vrjp": 3,
    "mjp": 4,
    "interlace": 5,
    "experiments": 6,
    "mixture": 7,
    "main_theorem": 8,
    "oracle": 9,
}

FLOAT_FMT = "%.17g"


def rng_for(master_seed: int, tag: str, replica: int = 0) -> np.random.Generator:
    """Per-(module, replica) stream derived from the master seed."""
    return np.random.default_rng(np.random.SeedSequence((int(master_seed), STREAM_TAGS[tag], int(replica))))


@dataclass
class ExperimentConfig:
    """Validated configuration for the convergence experiments."""

    graph_spec: dict
    exhaustion_spec: dict
    K_spec: dict
    J: int
    T: float
    n_list: list
    trunc_N: int
    replicas: int
    seed: int
    mcmc: MCMCParams
    out_dir: str
    n_envs: int = 10
    raw: dict = field(default_factory=dict, repr=False)
    # resolved objects
    graph: WeightedGraph | None = None
    exh: Exhaustion | None = None
    K_base: tuple = ()

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest()[:16]


def _require(cfg: dict, key: str, path: str):
    if key not in cfg:
        raise ConfigError(f"{path}.{key}: missing required field")
    return cfg[key]


def resolve_K(graph: WeightedGraph, spec: dict) -> tuple:
    """K as base ids: explicit list or a graph-distance ball around the root."""
    if "base_ids" in spec:
        ids = tuple(sorted(int(v) for v in spec["base_ids"]))
        for v in ids:
            if not 0 <= v < graph.num_vertices:
                raise ConfigError(f"K.base_ids: vertex {v} not in the graph")
        return ids
    if "ball_radius" in spec:
        dist = graph.bfs_distances(graph.root)
        r = int(spec["ball_radius"])
        return tuple(int(v) for v in np.nonzero((0 <= dist) & (dist <= r))[0])
    raise ConfigError("K: needs base_ids or ball_radius")


def load_config(path) -> ExperimentConfig:
    """Load and validate a JSON experiment configuration.

    Enforces: seed present, replicas >= 1, trunc_N >= max(n_list), root in K,
    and K contained in V_{min(n_list)}.
    """
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} does not exist")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None
    graph_spec = _require(raw, "graph", "config")
    exh_spec = _require(raw, "exhaustion", "config")
    k_spec = _require(raw, "K", "config")
    if "seed" not in raw:
        raise ConfigError("config.seed: missing required field (runs must be reproducible)")
    seed = int(raw["seed"])
    n_list = [int(n) for n in _require(raw, "n_list", "config")]
    trunc_n = int(_require(raw, "trunc_N", "config"))
    replicas = int(raw.get("replicas", 1))
    if replicas < 1:
        raise ConfigError("config.replicas: must be >= 1")
    if not n_list or sorted(n_list) != n_list:
        raise ConfigError("config.n_list: must be a nonempty increasing list")
    if trunc_n < max(n_list):
        raise ConfigError("config.trunc_N: must be >= max(n_list)")
    mcmc_raw = raw.get("mcmc", {})
    mcmc = MCMCParams(
        burn_in=int(mcmc_raw.get("burn_in", 10_000)),
        thin=int(mcmc_raw.get("thin", 10)),
        chains=int(mcmc_raw.get("chains", 64)),
    )
    try:
        graph = build_graph(graph_spec)
        exh = exhaustion(graph, int(exh_spec.get("n_max", trunc_n)), exh_spec.get("family", "ball"))
    except GraphError as e:
        raise ConfigError(f"config.graph/exhaustion: {e}") from None
    if len(exh) < trunc_n:
        raise ConfigError("config.exhaustion.n_max: fewer levels than trunc_N")
    K_base = resolve_K(graph, k_spec)
    v_min = set(exh.level(min(n_list)))
    for v in K_base:
        if v not in v_min:
            raise ConfigError(f"config.K: vertex {v} not contained in V_{{{min(n_list)}}}")
    if graph.root not in K_base:
        raise ConfigError("config.K: must contain the root")
    return ExperimentConfig(
        graph_spec=graph_spec,
        exhaustion_spec=exh_spec,
        K_spec=k_spec,
        J=int(raw.get("J", 3)),
        T=float(raw.get("T", 10.0)),
        n_list=n_list,
        trunc_N=trunc_n,
        replicas=replicas,
        seed=seed,
        mcmc=mcmc,
        out_dir=str(raw.get("out_dir", "results")),
        n_envs=int(raw.get("n_envs", 10)),
        raw=raw,
        graph=graph,
        exh=exh,
        K_base=K_base,
    )


def _format_cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % float(v)
    return str(v)


def write_csv(path, schema: str, columns, rows) -> Path:
    """Fixed column order, schema comment header, 17-significant-digit floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(f"# schema={schema}\n")
        w = csv.writer(f)
        w.writerow(columns)
        for row in rows:
            if isinstance(row, dict):
                w.writerow([_format_cell(row[c]) for c in columns])
            else:
                w.writerow([_format_cell(v) for v in row])
    return path


def read_csv(path) -> tuple[str, list, list]:
    """Read back (schema, columns, rows-as-string-lists), skipping comments."""
    with open(path, newline="") as f:
        first = f.readline().strip()
        schema = first[len("# schema=") :] if first.startswith("# schema=") else ""
        r = csv.reader(f)
        rows = [row for row in r if row]
    if not rows:
        return schema, [], []
    return schema, rows[0], rows[1:]


def write_jsonl(path, records) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


def read_jsonl(path) -> list:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]
