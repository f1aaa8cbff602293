"""Plain-text artifact formats: CSV tables, key=value sidecars, SVG polylines.

Every CSV is UTF-8, comma separated, with a header row.  Floats are written
in their shortest round-trip form (``repr``), so values read back exactly
and reruns compare byte for byte.
"""
import csv
import os
from pathlib import Path

import numpy as np

from .errors import MissingSummary
from .measures import EmpiricalMeasure, PeacockCurve

SUMMARY_COLUMNS = ("name", "value", "threshold", "pass")


def fmt(v):
    """Canonical text form of a scalar cell."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def write_table(path, header, rows):
    """Write ``rows`` under ``header``; returns the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def read_table(path):
    """Read a headed CSV into a list of dicts (values stay strings)."""
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def write_meta(path, meta):
    """Key=value sidecar, keys sorted."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k in sorted(meta):
            fh.write(f"{k}={fmt(meta[k])}\n")
    return path


def read_meta(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                k, _, v = line.partition("=")
                out[k.strip()] = v.strip()
    return out


# -- measures -----------------------------------------------------------------

def write_measure(path, m):
    """Empirical measure: header ``dim,n``, its values, then ``x_1..x_d,weight`` rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dim", "n"])
        w.writerow([m.dim, m.n])
        for x, wt in zip(m.samples, m.weights):
            w.writerow([fmt(v) for v in x] + [fmt(wt)])
    return path


def read_measure(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2 or rows[0] != ["dim", "n"]:
        raise ValueError(f"{path}: not a measure file")
    d, n = int(rows[1][0]), int(rows[1][1])
    data = np.array([[float(v) for v in r] for r in rows[2:]], dtype=float).reshape(-1, d + 1)
    if data.shape[0] != n:
        raise ValueError(f"{path}: header says {n} samples, found {data.shape[0]}")
    return EmpiricalMeasure(data[:, :d], data[:, d])


def write_curve(directory, curve, n_samples=10_000, seed=0):
    """One measure CSV per time plus ``times.csv`` (columns ``index,t,file``).

    Non-empirical laws are sampled first (``n_samples`` points, ``seed``).
    """
    from .measures import as_empirical

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, (t, law) in enumerate(zip(curve.times, curve.laws)):
        name = f"law_{i:04d}.csv"
        write_measure(directory / name, as_empirical(law, n_samples, seed, step=i))
        rows.append((i, float(t), name))
    write_table(directory / "times.csv", ("index", "t", "file"), rows)
    return directory


def read_curve(directory):
    directory = Path(directory)
    rows = read_table(directory / "times.csv")
    times = [float(r["t"]) for r in rows]
    laws = [read_measure(directory / r["file"]) for r in rows]
    return PeacockCurve(np.asarray(times), tuple(laws))


# -- ensembles ----------------------------------------------------------------

def write_ensemble(path, e, meta=None):
    """Long-format CSV ``path_id,t,x_1..x_d[,extras...]`` plus ``<path>.meta``."""
    path = Path(path)
    d = e.dim
    extra_names = sorted(e.extras)
    header = ["path_id", "t"] + [f"x_{i + 1}" for i in range(d)] + extra_names
    path.parent.mkdir(parents=True, exist_ok=True)
    times = [fmt(t) for t in e.times]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, pid in enumerate(e.path_ids):
            xs = e.paths[i]
            cols = [e.extras[k][i] for k in extra_names]
            for j, t in enumerate(times):
                w.writerow([str(int(pid)), t] + [fmt(v) for v in xs[j]] + [fmt(c[j]) for c in cols])
    info = {"seed": e.master_seed, "dt": e.dt, "n_paths": e.n_paths, "coefficient": e.coefficient,
            "dim": d, "n_times": len(e.times), "n_aborted": e.n_aborted}
    info.update(e.meta)
    info.update(meta or {})
    write_meta(str(path) + ".meta", info)
    return path


# -- verification summaries ---------------------------------------------------

class Summary:
    """Accumulates ``(name, value, threshold, pass)`` check rows."""

    def __init__(self):
        self.rows = []

    def check(self, name, value, threshold, passed):
        self.rows.append((name, value, threshold, bool(passed)))
        return bool(passed)

    def le(self, name, value, threshold):
        return self.check(name, value, f"<= {fmt(threshold)}", value <= threshold)

    def ge(self, name, value, threshold):
        return self.check(name, value, f">= {fmt(threshold)}", value >= threshold)

    def info(self, name, value):
        """A recorded measurement with no threshold (always passes)."""
        return self.check(name, value, "", True)

    @property
    def passed(self):
        return all(r[3] for r in self.rows)

    def write(self, directory):
        return write_table(Path(directory) / "summary.csv", SUMMARY_COLUMNS, self.rows)


def read_summary(directory):
    path = Path(directory) / "summary.csv"
    if not path.is_file():
        raise MissingSummary(f"no summary.csv in {directory}")
    return read_table(path)


# -- SVG ----------------------------------------------------------------------

def write_svg_paths(path, polylines, extent=1.0, size=480, circle=True, title=None):
    """Polylines in the square ``[-extent, extent]^2`` with an optional unit circle.

    ``polylines`` is a list of ``(n, 2)`` arrays; no external assets are used.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    half = size / 2.0
    scale = half / (extent * 1.05)
    colours = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<rect width="{size}" height="{size}" fill="white"/>']
    if title:
        out.append(f'<title>{title}</title>')
    if circle:
        out.append(f'<circle cx="{half:.2f}" cy="{half:.2f}" r="{scale:.2f}" fill="none" '
                   'stroke="#888" stroke-dasharray="4 3"/>')
    for i, pts in enumerate(polylines):
        pts = np.asarray(pts, dtype=float)
        pts = pts[np.all(np.isfinite(pts), axis=1)]
        coords = " ".join(f"{half + scale * x:.3f},{half - scale * y:.3f}" for x, y in pts)
        out.append(f'<polyline fill="none" stroke="{colours[i % len(colours)]}" stroke-width="1" '
                   f'points="{coords}"/>')
    out.append("</svg>")
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path


def default_out_root():
    """Output root from ``PEACOCKLAB_OUT`` (falls back to ``./peacocklab-out``)."""
    return Path(os.environ.get("PEACOCKLAB_OUT", "peacocklab-out"))
