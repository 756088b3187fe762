"""The plotter consumes the solver only through its published interface:
a record directory produced by the `fracmfg run` command line."""

import csv
import subprocess
import sys
from pathlib import Path

import pytest

from mfgfig.render import FigureSpec, load_record, render

CONFIG = """
[grid]
x_max = 5
n = 101

[time]
T = 3

[experiment]
mode = turnpike
"""


@pytest.fixture(scope="module")
def turnpike_record(tmp_path_factory):
    root = tmp_path_factory.mktemp("records")
    cfg = root / "turnpike.cfg"
    cfg.write_text(CONFIG)
    subprocess.run([sys.executable, "-m", "fracmfg", "run", str(cfg),
                    "--out", str(root)], check=True, capture_output=True)
    (record,) = [p for p in root.iterdir() if p.is_dir()]
    return record


@pytest.fixture(scope="module")
def sweep_records(tmp_path_factory):
    root = tmp_path_factory.mktemp("sweep")
    cfg = root / "sweep.cfg"
    cfg.write_text(CONFIG + "\nsweep_T = 2,3\n")
    subprocess.run([sys.executable, "-m", "fracmfg", "run", str(cfg),
                    "--out", str(root)], check=True, capture_output=True)
    return sorted(p for p in root.iterdir() if p.is_dir())


def _csv_columns(record):
    with (record / "series.csv").open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols = {name: [] for name in header}
        for row in reader:
            for name, val in zip(header, row):
                cols[name].append(float(val))
    return cols


def test_all_three_kinds_render(turnpike_record, sweep_records, tmp_path):
    for kind, records in (("decay-semilog", [turnpike_record]),
                          ("turnpike-envelope", [turnpike_record]),
                          ("sweep-table", sweep_records)):
        fig, caption = render(FigureSpec(kind=kind, records=records))
        assert caption
        out = tmp_path / f"{kind}.png"
        fig.savefig(out)
        assert out.stat().st_size > 0


def test_decay_figure_data_matches_csv_bitwise(turnpike_record):
    fig, _ = render(FigureSpec(kind="decay-semilog", records=[turnpike_record]))
    line = fig.axes[0].get_lines()[0]
    cols = _csv_columns(turnpike_record)
    assert list(line.get_xdata()) == cols["t"]
    assert list(line.get_ydata()) == cols["tv_k"]


def test_rerender_is_pure(turnpike_record):
    spec = FigureSpec(kind="decay-semilog", records=[turnpike_record])
    f1, c1 = render(spec)
    f2, c2 = render(spec)
    l1 = f1.axes[0].get_lines()[0]
    l2 = f2.axes[0].get_lines()[0]
    assert list(l1.get_ydata()) == list(l2.get_ydata())
    assert c1 == c2


def test_floor_record_annotated_without_fit_line(tmp_path):
    cfg = tmp_path / "floor.cfg"
    cfg.write_text("""
[grid]
x_max = 5
n = 101

[time]
T = 2

[data]
m0 = gaussian:-1,0.8
m0_b = gaussian:-1,0.8

[experiment]
mode = fp-decay
""")
    subprocess.run([sys.executable, "-m", "fracmfg", "run", str(cfg),
                    "--out", str(tmp_path)], check=True, capture_output=True)
    (record,) = [p for p in tmp_path.iterdir() if p.is_dir()]
    fig, caption = render(FigureSpec(kind="decay-semilog", records=[record]))
    assert "floor" in caption
    assert len(fig.axes[0].get_lines()) == 1  # data only, no fit overlay
    texts = [t.get_text() for t in fig.axes[0].texts]
    assert "floor" in texts


def test_mode_mixing_rejected(turnpike_record, tmp_path):
    root = tmp_path
    cfg = root / "erg.cfg"
    cfg.write_text(CONFIG.replace("mode = turnpike", "mode = ergodic"))
    subprocess.run([sys.executable, "-m", "fracmfg", "run", str(cfg),
                    "--out", str(root)], check=True, capture_output=True)
    (ergodic_record,) = [p for p in root.iterdir() if p.is_dir()]
    with pytest.raises(ValueError):
        render(FigureSpec(kind="sweep-table",
                          records=[turnpike_record, ergodic_record]))


def test_spec_guards(turnpike_record):
    with pytest.raises(ValueError):
        FigureSpec(kind="pie-chart", records=[turnpike_record])
    with pytest.raises(ValueError):
        FigureSpec(kind="decay-semilog", records=[])
    with pytest.raises(FileNotFoundError):
        load_record(Path("/nonexistent"))


def test_cli_entry(turnpike_record, tmp_path):
    from mfgfig.render import main
    out = tmp_path / "fig.png"
    rc = main(["render", "--kind", "decay-semilog",
               "--in", str(turnpike_record), "--out", str(out)])
    assert rc == 0
    assert out.exists()
    assert out.with_suffix(".png.caption.txt").exists()
