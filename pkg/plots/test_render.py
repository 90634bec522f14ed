"""Tests for the batch figure renderer, including the secondary acceptance
criterion: the three figure kinds render deterministically from the
convergence-experiment CSVs."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))
from render import FigureSpec, RenderError, main, render, render_all  # noqa: E402

ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture(scope="module")
def results_dir(tmp_path_factory):
    """CSV fixtures produced by a miniature converge run (same schemas)."""
    tmp = tmp_path_factory.mktemp("results_src")
    cfg = {
        "graph": {"family": "tree", "branching": 2, "root_degree": 3, "depth": 4, "conductance": 4.0},
        "exhaustion": {"family": "ball", "n_max": 3},
        "K": {"base_ids": [0, 1]},
        "J": 2,
        "T": 2.0,
        "n_list": [1, 2, 3],
        "trunc_N": 3,
        "replicas": 500,
        "n_envs": 2,
        "seed": 4242,
        "mcmc": {"burn_in": 80, "thin": 2, "chains": 16},
    }
    cfg_path = tmp / "exp.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp / "results"
    from vrjp.cli import main as vrjp_main

    rc = vrjp_main(["converge", "--config", str(cfg_path), "--out", str(out)])
    assert rc == 0
    return out


def test_secondary_criterion_renders_three_kinds(results_dir, tmp_path, capsys):
    figs = tmp_path / "figs"
    outputs = render_all(results_dir, figs)
    names = sorted(p.name for p in outputs)
    assert names == ["convergence.png", "oracle.png", "pvalues.png"]
    for p in outputs:
        assert p.exists() and p.stat().st_size > 0
    with capsys.disabled():
        print("CRITERION 11 PASS: three figure kinds rendered from the experiment CSVs")


def test_rendering_is_deterministic(results_dir, tmp_path):
    a = render_all(results_dir, tmp_path / "a")
    b = render_all(results_dir, tmp_path / "b")
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()


def test_cli_entrypoint(results_dir, tmp_path):
    rc = main(["--in", str(results_dir), "--out", str(tmp_path / "figs")])
    assert rc == 0
    assert (tmp_path / "figs" / "pvalues.png").exists()


def test_script_invocation(results_dir, tmp_path):
    proc = subprocess.run(
        [sys.executable, str(ROOT / "plots" / "render.py"), "--in", str(results_dir),
         "--out", str(tmp_path / "figs")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr


def test_empty_csv_placeholder(tmp_path):
    src = tmp_path / "results"
    src.mkdir()
    (src / "pvalues.csv").write_text("# schema=vrjp.pvalues.v1\ntest,n,p_value\n")
    spec = FigureSpec({"pvalues": src / "pvalues.csv"}, "pvalues", tmp_path / "p.png")
    out = render(spec)
    assert out.exists() and out.stat().st_size > 0


def test_missing_column_rejected(tmp_path):
    src = tmp_path / "results"
    src.mkdir()
    (src / "oracle.csv").write_text("# schema=vrjp.oracle.v1\ngraph_id,mc_estimate\nA,0.5\n")
    spec = FigureSpec({"oracle": src / "oracle.csv"}, "oracle", tmp_path / "o.png")
    with pytest.raises(RenderError, match="missing columns"):
        render(spec)


def test_missing_input_rejected(tmp_path):
    with pytest.raises(RenderError):
        render_all(tmp_path / "nope", tmp_path / "figs")
