#!/usr/bin/env python3
"""Batch renderer for the convergence-experiment CSV outputs.

Reads rates.csv / distances.csv / pvalues.csv / oracle.csv from an input
directory and writes three deterministic PNG figures (fixed style, fixed
DPI, no timestamps).  Pure consumer: no statistics are computed here beyond
what the figures display.

Usage: plots/render.py --in results/ --out figs/
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (7.0, 4.5),
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
}
FIGURE_KINDS = ("convergence", "oracle", "pvalues")


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class FigureSpec:
    inputs: dict  # name -> Path
    kind: str  # convergence | oracle | pvalues
    out: Path


def read_csv(path: Path):
    """Return (columns, rows as dicts of strings); skips '#' comment lines."""
    with open(path, newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    if not rows:
        return [], []
    cols = rows[0]
    return cols, [dict(zip(cols, r)) for r in rows[1:] if r]


def _require_columns(cols, needed, path):
    missing = [c for c in needed if c not in cols]
    if missing:
        raise RenderError(f"{path}: missing columns {missing}")


def _placeholder(ax, message: str):
    ax.text(0.5, 0.5, message, ha="center", va="center", transform=ax.transAxes,
            fontsize=12, color="tab:red")
    ax.set_xticks([])
    ax.set_yticks([])


def _save(fig, out: Path) -> Path:
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format="png")
    plt.close(fig)
    return out


def render_convergence(spec: FigureSpec) -> Path:
    """Distance (or rate-deviation) vs level on a log scale."""
    fig, ax = plt.subplots()
    path = spec.inputs.get("distances")
    if path is not None and path.exists():
        cols, rows = read_csv(path)
        if not rows:
            _placeholder(ax, "distances.csv is empty")
            return _save(fig, spec.out)
        _require_columns(cols, ["n", "total", "null_floor"], path)
        ns = [int(r["n"]) for r in rows]
        totals = [float(r["total"]) for r in rows]
        ax.semilogy(ns, totals, "o-", label="distance to reference")
        floor = float(rows[0]["null_floor"])
        if floor > 0:
            ax.axhline(floor, ls="--", color="gray", label="two-sample noise floor")
    else:
        path = spec.inputs["rates"]
        cols, rows = read_csv(path)
        if not rows:
            _placeholder(ax, "rates.csv is empty")
            return _save(fig, spec.out)
        _require_columns(cols, ["env_id", "n", "x", "y", "r_n", "r_inf_lo", "r_inf_hi"], path)
        by_entry = {}
        for r in rows:
            dev = max(float(r["r_inf_lo"]) - float(r["r_n"]),
                      float(r["r_n"]) - float(r["r_inf_hi"]), 0.0)
            by_entry.setdefault((r["x"], r["y"]), {}).setdefault(int(r["n"]), []).append(dev)
        for (x, y), byn in sorted(by_entry.items()):
            ns = sorted(byn)
            means = [sum(byn[n]) / len(byn[n]) for n in ns]
            ax.semilogy(ns, [max(m, 1e-12) for m in means], "o-", label=f"{x}->{y}")
    ax.set_xlabel("level n")
    ax.set_ylabel("deviation")
    ax.set_title("convergence toward the reference")
    ax.legend(fontsize=8)
    return _save(fig, spec.out)


def render_oracle(spec: FigureSpec) -> Path:
    """Monte Carlo estimates against the closed form, with the y = x line."""
    path = spec.inputs["oracle"]
    cols, rows = read_csv(path)
    fig, ax = plt.subplots()
    if not rows:
        _placeholder(ax, "oracle.csv is empty")
        return _save(fig, spec.out)
    _require_columns(cols, ["mc_estimate", "mc_stderr", "exact_value"], path)
    exact = [float(r["exact_value"]) for r in rows]
    mc = [float(r["mc_estimate"]) for r in rows]
    err = [3 * float(r["mc_stderr"]) for r in rows]
    ax.errorbar(exact, mc, yerr=err, fmt="o", ms=4, capsize=2, label="MC (3 se)")
    lo, hi = min(exact + mc), max(exact + mc)
    pad = 0.05 * (hi - lo + 1e-12)
    ax.plot([lo - pad, hi + pad], [lo - pad, hi + pad], "k--", lw=1, label="y = x")
    ax.set_xlabel("closed form")
    ax.set_ylabel("Monte Carlo estimate")
    ax.set_title("transform oracle agreement")
    ax.legend(fontsize=8)
    return _save(fig, spec.out)


def render_pvalues(spec: FigureSpec) -> Path:
    """Per-test p-values with the 1% rejection line."""
    path = spec.inputs["pvalues"]
    cols, rows = read_csv(path)
    fig, ax = plt.subplots()
    if not rows:
        _placeholder(ax, "pvalues.csv is empty")
        return _save(fig, spec.out)
    _require_columns(cols, ["test", "p_value"], path)
    names = [r["test"] for r in rows]
    ps = [max(float(r["p_value"]), 1e-12) for r in rows]
    ax.bar(range(len(ps)), ps, color="tab:blue")
    ax.axhline(0.01, color="tab:red", ls="--", label="1% level")
    ax.set_yscale("log")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("p-value")
    ax.set_title("statistical test summary")
    ax.legend(fontsize=8)
    return _save(fig, spec.out)


RENDERERS = {
    "convergence": render_convergence,
    "oracle": render_oracle,
    "pvalues": render_pvalues,
}


def render(spec: FigureSpec) -> Path:
    if spec.kind not in RENDERERS:
        raise RenderError(f"unknown figure kind {spec.kind!r}")
    with plt.rc_context(STYLE):
        return RENDERERS[spec.kind](spec)


def render_all(in_dir: Path, out_dir: Path) -> list[Path]:
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    if not in_dir.is_dir():
        raise RenderError(f"input directory {in_dir} does not exist")
    outputs = []
    specs = [
        FigureSpec(
            {"distances": in_dir / "distances.csv", "rates": in_dir / "rates.csv"},
            "convergence",
            out_dir / "convergence.png",
        ),
        FigureSpec({"oracle": in_dir / "oracle.csv"}, "oracle", out_dir / "oracle.png"),
        FigureSpec({"pvalues": in_dir / "pvalues.csv"}, "pvalues", out_dir / "pvalues.png"),
    ]
    for spec in specs:
        primary = next(iter(spec.inputs.values()))
        if spec.kind == "convergence":
            if not (spec.inputs["distances"].exists() or spec.inputs["rates"].exists()):
                raise RenderError("convergence figure needs distances.csv or rates.csv")
        elif not primary.exists():
            raise RenderError(f"{primary} does not exist")
        outputs.append(render(spec))
    return outputs


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--in", dest="in_dir", required=True, help="directory with the CSV outputs")
    ap.add_argument("--out", dest="out_dir", required=True, help="directory for the PNG figures")
    args = ap.parse_args(argv)
    try:
        outputs = render_all(args.in_dir, args.out_dir)
    except RenderError as e:
        print(f"render error: {e}", file=sys.stderr)
        return 2
    for p in outputs:
        print(f"wrote {p}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
