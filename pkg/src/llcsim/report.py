"""CSV and SVG output for sweep tables."""
from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path

from .experiments import SweepRow

HEADER = ("param", "baseline_cycles", "contended_cycles", "slowdown")


def _atomic_write(destination, data: bytes):
    """Write to a sibling temp file and rename it over the destination."""
    path = Path(destination)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for r in rows:
        writer.writerow((r.param, r.baseline_cycles, r.contended_cycles, f"{r.slowdown:.4f}"))
    return buf.getvalue()


def emit_csv(rows, destination) -> Path:
    _atomic_write(destination, format_csv(rows).encode("utf-8"))
    return Path(destination)


def read_csv(source) -> list[SweepRow]:
    with open(source, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        return [SweepRow(int(p), int(b), int(c), float(s)) for p, b, c, s in reader]


def emit_svg(rows, destination, xlabel: str = "param", title: str | None = None) -> Path:
    """Bar chart of slowdown per parameter, with the isolated baseline drawn at 1.0."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = list(rows)
    labels = [str(r.param) for r in rows]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * len(rows) + 2), 3.2))
    ax.bar(range(len(rows)), [r.slowdown for r in rows], color="tab:blue", label="contended")
    ax.axhline(1.0, color="tab:red", linewidth=1.5, label="baseline")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("slowdown")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize="small")
    fig.tight_layout()
    buf = io.BytesIO()
    # a fixed hashsalt and no date keep the SVG byte-identical across runs
    with matplotlib.rc_context({"svg.hashsalt": "llcsim"}):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    _atomic_write(destination, buf.getvalue())
    return Path(destination)
