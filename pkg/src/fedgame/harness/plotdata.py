"""Figures and per-series files from a finished sweep.

Reads a sweep CSV and, for every (payment level, noise level) pair,
writes a small series file with a one-standard-error band plus one
rendered figure per noise level comparing payment levels.  Rendering
uses the Agg backend so it works headless.
"""

from __future__ import annotations

import csv
import io
import sys

from ..errors import ConfigurationError
from .outputs import OutputSet, format_cell

__all__ = ["emit_plotdata"]

SWEEP_HEADER = ["C", "a", "b", "client", "mean_utility", "stderr",
                "n_replications"]


def _read_sweep(path: str) -> list[dict]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != SWEEP_HEADER:
                raise ConfigurationError(
                    f"{path} is not a sweep file: header {header} != {SWEEP_HEADER}")
            rows = []
            for k, row in enumerate(reader):
                if len(row) != len(SWEEP_HEADER):
                    raise ConfigurationError(
                        f"{path} row {k + 2} has {len(row)} fields")
                rows.append({"C": float(row[0]), "a": float(row[1]),
                             "b": float(row[2]), "mean": float(row[4]),
                             "stderr": float(row[5])})
            return rows
    except OSError as exc:
        raise ConfigurationError(f"cannot read sweep file {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigurationError(f"malformed sweep file {path}: {exc}") from exc


def emit_plotdata(sweep_csv: str, out_dir: str) -> list[str]:
    """Render series files and figures for ``sweep_csv`` into ``out_dir``.

    Returns the committed file names; an empty sweep produces nothing.
    """
    rows = _read_sweep(sweep_csv)
    if not rows:
        print(f"plotdata: {sweep_csv} holds no data rows, nothing to render",
              file=sys.stderr)
        return []

    series: dict[tuple[float, float], list[dict]] = {}
    for row in rows:
        series.setdefault((row["C"], row["b"]), []).append(row)

    import matplotlib
    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    outputs = OutputSet(out_dir)
    try:
        for (c_value, b), pts in series.items():
            name = f"series_c{format_cell(c_value)}_b{format_cell(b)}.csv"
            outputs.write_csv(name, ["a", "mean_utility", "lower", "upper"],
                              [[p["a"], p["mean"],
                                p["mean"] - p["stderr"],
                                p["mean"] + p["stderr"]] for p in pts])

        b_levels = sorted({b for _, b in series})
        for b in b_levels:
            fig, ax = plt.subplots(figsize=(6.0, 4.0))
            for (c_value, sb), pts in series.items():
                if sb != b:
                    continue
                xs = [p["a"] for p in pts]
                ys = [p["mean"] for p in pts]
                ax.plot(xs, ys, marker="o", label=f"C = {format_cell(c_value)}")
                ax.fill_between(xs,
                                [p["mean"] - p["stderr"] for p in pts],
                                [p["mean"] + p["stderr"] for p in pts],
                                alpha=0.2)
            ax.set_xlabel("reporting scale a")
            ax.set_ylabel("deviant mean utility")
            ax.set_title(f"utility against scale, message noise b = {format_cell(b)}")
            ax.legend()
            fig.tight_layout()
            buffer = io.BytesIO()
            fig.savefig(buffer, format="png", dpi=120)
            plt.close(fig)
            outputs.write_bytes(f"utility_b{format_cell(b)}.png",
                                buffer.getvalue())
        return outputs.commit()
    except BaseException:
        outputs.quarantine()
        raise
