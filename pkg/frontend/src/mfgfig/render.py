"""Publication figures from solver run records.

Reads only the documented record contract: `series.csv` with header
t,tv_k,osc_k,grad_linf_k,mass,moment_k and `summary.json` with the fitted
constants, plus `record.json` for the mode guard and config hash.  Three
figure kinds:

* decay-semilog      series on a log axis with the fitted envelope overlaid
* turnpike-envelope  three-panel distance-to-stationary figure with the
                     two-sided envelope and plateau markers
* sweep-table        fitted-rate table across records (e.g. a horizon sweep)

Every render is a pure function of the input files; data points are drawn
from the CSV values untouched.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

KINDS = ("decay-semilog", "turnpike-envelope", "sweep-table")
SERIES_HEADER = ["t", "tv_k", "osc_k", "grad_linf_k", "mass", "moment_k"]


@dataclass
class FigureSpec:
    kind: str
    records: list[Path]
    series: str = "tv_k"
    title: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; pick from {KINDS}")
        if not self.records:
            raise ValueError("at least one record directory is required")
        self.records = [Path(p) for p in self.records]


@dataclass
class RecordData:
    path: Path
    mode: str
    config_hash: str
    columns: dict = field(repr=False)
    summary: dict = field(repr=False)


def load_record(path: Path) -> RecordData:
    path = Path(path)
    series_file = path / "series.csv"
    if not series_file.exists():
        raise FileNotFoundError(f"{series_file} is missing")
    with series_file.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != SERIES_HEADER:
            raise ValueError(f"{series_file} header {header} violates the contract")
        cols: dict = {name: [] for name in header}
        for row in reader:
            for name, value in zip(header, row):
                cols[name].append(float(value))
    summary = json.loads((path / "summary.json").read_text())
    record = json.loads((path / "record.json").read_text())
    return RecordData(path, record["mode"], record["config_hash"], cols, summary)


def _require_same_mode(records: list[RecordData]):
    modes = {r.mode for r in records}
    if len(modes) > 1:
        raise ValueError(f"records mix experiment modes {sorted(modes)}")


def _envelope(t, M, omega, T, two_sided):
    import math
    if two_sided:
        return [M * (math.exp(-omega * s) + math.exp(-omega * (T - s))) for s in t]
    return [M * math.exp(-omega * s) for s in t]


def render(spec: FigureSpec):
    """Build the figure; returns (matplotlib Figure, caption text)."""
    records = [load_record(p) for p in spec.records]
    _require_same_mode(records)

    if spec.kind == "decay-semilog":
        fig, caption = _render_decay(records, spec)
    elif spec.kind == "turnpike-envelope":
        fig, caption = _render_turnpike(records, spec)
    else:
        fig, caption = _render_table(records, spec)
    if spec.title:
        fig.suptitle(spec.title)
    return fig, caption


def _render_decay(records, spec):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    captions = []
    any_positive = any(v > 0 for rec in records for v in rec.columns[spec.series])
    for rec in records:
        t = rec.columns["t"]
        y = rec.columns[spec.series]
        ax.plot(t, y, label=f"{rec.path.name} {spec.series}")
        omega = rec.summary.get("omega_left")
        M = rec.summary.get("M")
        if omega is None or M is None:
            positive = [v for v in y if v > 0]
            anchor = min(positive) if positive else 0.0
            ax.annotate("floor", xy=(t[len(t) // 2], anchor))
            captions.append(f"{rec.path.name}: decayed to floor (no fit line)")
        else:
            ax.plot(t, _envelope(t, M, omega, t[-1], False), "--",
                    label=f"fit K={M:.3g}, omega={omega:.3g}")
            captions.append(f"{rec.path.name}: K={M:.6g} omega={omega:.6g} "
                            f"[config {rec.config_hash}]")
    if any_positive:
        ax.set_yscale("log")  # an all-floor record stays on a linear axis
    ax.set_xlabel("t")
    ax.set_ylabel(spec.series)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig, "; ".join(captions)


def _render_turnpike(records, spec):
    fig, axes = plt.subplots(1, 3, figsize=(12, 4))
    names = ("tv_k", "osc_k", "grad_linf_k")
    captions = []
    for rec in records:
        t = rec.columns["t"]
        T = t[-1]
        omega = rec.summary.get("omega_left")
        M = rec.summary.get("M")
        plateau = rec.summary.get("plateau")
        for ax, name in zip(axes, names):
            y = rec.columns[name]
            ax.semilogy(t, y, label=rec.path.name, lw=1.2)
            if omega is not None and M is not None:
                ax.semilogy(t, _envelope(t, M, omega, T, True), "--", lw=0.9)
            if plateau is not None:
                ax.plot([T / 2], [plateau], "o", ms=4)
            ax.set_title(name)
            ax.set_xlabel("t")
        captions.append(
            f"{rec.path.name}: M={M}, omega={omega}, plateau={plateau} "
            f"[config {rec.config_hash}]")
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    return fig, "; ".join(captions)


def _render_table(records, spec):
    fig, ax = plt.subplots(figsize=(8, 0.5 + 0.4 * len(records)))
    ax.axis("off")
    cols = ("record", "omega_left", "omega_right", "plateau", "M", "iterations")
    rows = []
    for rec in records:
        s = rec.summary
        rows.append([rec.path.name] + [
            "-" if s.get(c) is None else f"{s[c]:.4g}" for c in cols[1:]])
    table = ax.table(cellText=rows, colLabels=cols, loc="center")
    table.auto_set_font_size(False)
    table.set_fontsize(8)
    caption = "rate-stability table over " + ", ".join(r.path.name for r in records)
    fig.tight_layout()
    return fig, caption


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mfgfig",
                                     description="figures from fracmfg run records")
    parser.add_argument("command", choices=["render"])
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--in", dest="records", nargs="+", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--series", default="tv_k")
    parser.add_argument("--title", default=None)
    args = parser.parse_args(argv)
    spec = FigureSpec(kind=args.kind, records=args.records,
                      series=args.series, title=args.title)
    fig, caption = render(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=150)
    out.with_suffix(out.suffix + ".caption.txt").write_text(caption + "\n")
    print(caption)
    return 0


if __name__ == "__main__":
    sys.exit(main())
