#!/usr/bin/env python3
"""Render result figures from pipeline CSV/JSON artifacts.

Four figure kinds, selected by a small TOML spec file:

* adequacy-scatter: auxiliary-model sample statistics against assumed-model
  statistics, with a unit-slope reference line.
* utility-vs-n: expected-utility estimates (with standard-error bars) against
  the number of runs, one curve per design family.
* design-strip: design-point positions against the number of runs.
* trajectory-fan: prior-predictive response trajectories over time.

The script only reads, reshapes and draws: every plotted number must already
exist in an input artifact (enforced by nocompute_lint.py).  Output is written
as both SVG and PNG with pinned metadata so re-renders are byte-identical.

Usage: render.py --spec figure.toml
"""

import argparse
import csv
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "figures"
import matplotlib.pyplot as plt

KINDS = ("adequacy-scatter", "utility-vs-n", "design-strip", "trajectory-fan")
COLORS = ("#0072b2", "#d55e00", "#009e73", "#cc79a7", "#56b4e9")


class SchemaError(ValueError):
    pass


def read_csv_rows(path):
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            fh.seek(0)
        rows = list(csv.DictReader(fh))
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows, first if first.startswith("#") else ""


def need(row, col, path):
    if col not in row:
        raise SchemaError(f"{path}: missing column {col!r}")
    return row[col]


def new_figure(width=6.0, height=4.2):
    return plt.figure(figsize=(width, height), dpi=120)


def render_adequacy_scatter(spec, fig):
    inputs = spec["inputs"]
    statistics = spec.get("statistics", ["mean", "variance"])
    axes = fig.subplots(1, len(statistics), squeeze=False)[0]
    for ax, stat in zip(axes, statistics):
        for color, item in zip(COLORS, inputs):
            rows, _ = read_csv_rows(item["path"])
            xs = [float(need(r, "assumed", item["path"]))
                  for r in rows if r["statistic"] == stat]
            ys = [float(need(r, "auxiliary", item["path"]))
                  for r in rows if r["statistic"] == stat]
            if not xs:
                raise SchemaError(f"{item['path']}: no rows for statistic {stat!r}")
            ax.scatter(xs, ys, s=12, alpha=0.7, color=color,
                       label=item.get("label", Path(item["path"]).stem))
        ax.axline((0.0, 0.0), slope=1.0, color="0.4", lw=1.0, zorder=0)
        ax.set_xlabel(f"assumed-model {stat}")
        ax.set_ylabel(f"auxiliary-model {stat}")
        if len(inputs) > 1:
            ax.legend(frameon=False, fontsize=8)


def render_utility_vs_n(spec, fig):
    ax = fig.subplots()
    for color, item in zip(COLORS, spec["inputs"]):
        with open(item["path"]) as fh:
            payload = json.load(fh)
        rows = payload.get("rows")
        if rows is None:
            raise SchemaError(f"{item['path']}: missing 'rows'")
        series = {}
        for r in rows:
            for col in ("design", "n", "mean"):
                if col not in r:
                    raise SchemaError(f"{item['path']}: row missing {col!r}")
            series.setdefault(r["design"], []).append((r["n"], r["mean"], r.get("se")))
        for shade, (design, pts) in enumerate(sorted(series.items())):
            pts.sort()
            ns = [p[0] for p in pts]
            means = [p[1] for p in pts]
            ses = [p[2] if p[2] is not None else 0.0 for p in pts]
            ax.errorbar(ns, means, yerr=ses, marker="o", ms=4, capsize=3,
                        color=COLORS[shade % len(COLORS)],
                        label=f"{item.get('label', '')} {design}".strip())
    ax.set_xlabel("number of runs n")
    ax.set_ylabel("expected utility")
    ax.legend(frameon=False, fontsize=8)


def render_design_strip(spec, fig):
    ax = fig.subplots()
    coord = int(spec.get("coordinate", 1)) - 1
    for item in spec["inputs"]:
        rows, header = read_csv_rows(item["path"])
        if not header.startswith("# design"):
            raise SchemaError(f"{item['path']}: not a design CSV")
        n = int(header.split("n=")[1].split()[0])
        col = f"d_{coord + 1}"
        values = [float(need(r, col, item["path"])) for r in rows]
        ax.plot(values, [n] * len(values), "|", ms=14, mew=1.5, color=COLORS[0])
    ax.set_xlabel(f"design coordinate {coord + 1}")
    ax.set_ylabel("number of runs n")


def render_trajectory_fan(spec, fig):
    ax = fig.subplots()
    item = spec["inputs"][0]
    rows, _ = read_csv_rows(item["path"])
    paths = {}
    for r in rows:
        key = need(r, "sample", item["path"])
        paths.setdefault(key, []).append(
            (float(need(r, "time", item["path"])), float(need(r, "value", item["path"])))
        )
    for pts in paths.values():
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts],
                color=COLORS[0], alpha=0.12, lw=0.7)
    ax.set_xlabel("time")
    ax.set_ylabel("response")


RENDERERS = {
    "adequacy-scatter": render_adequacy_scatter,
    "utility-vs-n": render_utility_vs_n,
    "design-strip": render_design_strip,
    "trajectory-fan": render_trajectory_fan,
}


def load_spec(path):
    with open(path, "rb") as fh:
        spec = tomllib.load(fh)
    kind = spec.get("kind")
    if kind not in KINDS:
        raise SchemaError(f"{path}: kind must be one of {KINDS}")
    if not spec.get("inputs"):
        raise SchemaError(f"{path}: at least one [[inputs]] table is required")
    for item in spec["inputs"]:
        if "path" not in item:
            raise SchemaError(f"{path}: every input needs a path")
        item["path"] = str((Path(path).parent / item["path"]).resolve())
        if not Path(item["path"]).exists():
            raise SchemaError(f"{path}: input artifact {item['path']} does not exist")
    if "output" not in spec:
        raise SchemaError(f"{path}: output stem is required")
    spec["output"] = str((Path(path).parent / spec["output"]).resolve())
    return spec


def render(spec) -> list[str]:
    fig = new_figure()
    try:
        RENDERERS[spec["kind"]](spec, fig)
        if spec.get("title"):
            fig.suptitle(spec["title"], fontsize=11)
        fig.tight_layout()
        out = Path(spec["output"])
        out.parent.mkdir(parents=True, exist_ok=True)
        written = []
        for ext in ("svg", "png"):
            target = out.with_suffix(f".{ext}")
            fig.savefig(target, metadata={"Date": None} if ext == "svg" else None)
            written.append(str(target))
        return written
    finally:
        plt.close(fig)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--spec", required=True, type=Path, help="figure spec TOML")
    args = parser.parse_args(argv)
    try:
        spec = load_spec(args.spec)
        for target in render(spec):
            print(target)
    except SchemaError as exc:
        print(f"figure spec error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
