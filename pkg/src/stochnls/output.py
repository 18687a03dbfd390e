"""Result files: observable CSVs, JSON summaries, two-column plot data, SVG and the manifest.

Every data file is a pure function of the configuration and seed.  Floats are written with
17 significant digits, so parsing a file gives back the in-memory values exactly.  Only
the manifest carries wall-clock information.
"""

import hashlib
import io
import json
import math
from pathlib import Path
import time

import numpy as np

from .integrator import ObservableSeries

__all__ = [
    "OUTPUT_SCHEMA_VERSION",
    "OutputError",
    "ResultWriter",
    "format_float",
    "series_to_csv",
    "read_series_csv",
    "xy_text",
    "write_xy",
    "read_xy",
    "svg_line_plot",
    "to_jsonable",
    "dump_json",
    "read_manifest",
    "file_sha256",
]

OUTPUT_SCHEMA_VERSION = "1.0"


class OutputError(OSError):
    """An output file or directory could not be written (exit code 4)."""


def format_float(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def series_to_csv(series):
    """CSV text for one trajectory: header ``t,mass,energy,modified_energy,v_norm_sq,residual_h``."""
    buf = io.StringIO()
    buf.write(",".join(ObservableSeries.COLUMNS) + "\n")
    for row in series.table():
        buf.write(",".join(format_float(v) for v in row) + "\n")
    return buf.getvalue()


def read_series_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != ObservableSeries.COLUMNS:
            raise ValueError(f"unexpected header {header}")
        rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
    arr = np.array(rows, dtype=float).reshape(-1, len(header))
    return ObservableSeries(*(arr[:, i] for i in range(arr.shape[1])))


def xy_text(x, y, header=None):
    lines = [] if header is None else [f"# {header}"]
    lines += [f"{format_float(a)} {format_float(b)}" for a, b in zip(x, y)]
    return "\n".join(lines) + "\n"


def write_xy(path, x, y, header=None):
    Path(path).write_text(xy_text(x, y, header))


def read_xy(path):
    data = np.loadtxt(path, comments="#", ndmin=2)
    return data[:, 0], data[:, 1]


def to_jsonable(obj):
    """Recursively convert numpy values; non-finite floats become ``null``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dump_json(obj):
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt_tick(v):
    return format(v, ".3g")


def svg_line_plot(series, title="", xlabel="", ylabel="", width=640, height=400, logx=False, logy=False):
    """A standalone SVG line chart; ``series`` is a list of ``(label, x, y)``."""
    pad_l, pad_r, pad_t, pad_b = 70, 20, 30, 50
    tx = np.log10 if logx else (lambda a: np.asarray(a, dtype=float))
    ty = np.log10 if logy else (lambda a: np.asarray(a, dtype=float))
    pts = []
    for label, x, y in series:
        x, y = np.asarray(x, float), np.asarray(y, float)
        ok = np.isfinite(x) & np.isfinite(y)
        if logx:
            ok &= x > 0
        if logy:
            ok &= y > 0
        pts.append((label, tx(x[ok]), ty(y[ok])))
    allx = np.concatenate([p[1] for p in pts]) if pts else np.zeros(1)
    ally = np.concatenate([p[2] for p in pts]) if pts else np.zeros(1)
    if allx.size == 0:
        allx = ally = np.zeros(1)
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    w, h = width - pad_l - pad_r, height - pad_t - pad_b

    def sx(v):
        return pad_l + (v - x0) / (x1 - x0) * w

    def sy(v):
        return pad_t + h - (v - y0) / (y1 - y0) * h

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{pad_l}" y="{pad_t}" width="{w}" height="{h}" fill="none" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle">{title}</text>',
        f'<text x="{pad_l + w / 2:.1f}" y="{height - 10}" text-anchor="middle">{xlabel}</text>',
        f'<text x="15" y="{pad_t + h / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 15 {pad_t + h / 2:.1f})">{ylabel}</text>',
    ]
    for i in range(5):
        xv = x0 + (x1 - x0) * i / 4
        yv = y0 + (y1 - y0) * i / 4
        xl = _fmt_tick(10**xv if logx else xv)
        yl = _fmt_tick(10**yv if logy else yv)
        out.append(f'<text x="{sx(xv):.1f}" y="{pad_t + h + 16}" text-anchor="middle">{xl}</text>')
        out.append(f'<text x="{pad_l - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yl}</text>')
    for k, (label, x, y) in enumerate(pts):
        c = colors[k % len(colors)]
        path = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{path}"/>')
        if len(x) <= 12:
            out += [f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="3" fill="{c}"/>' for a, b in zip(x, y)]
        out.append(f'<text x="{pad_l + 10}" y="{pad_t + 16 + 14 * k}" fill="{c}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


class ResultWriter:
    """Writes result files into one directory and records them for the manifest."""

    def __init__(self, directory, formats=("csv", "json", "xy")):
        self.directory = Path(directory)
        self.formats = set(formats)
        self.files = []
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
            probe = self.directory / ".write-test"
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            raise OutputError(f"cannot write to {self.directory}: {exc.strerror or exc}") from exc

    def _write(self, name, text):
        path = self.directory / name
        try:
            path.write_text(text)
        except OSError as exc:
            raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc
        self.files.append(name)
        return path

    def series_csv(self, name, series):
        if "csv" in self.formats:
            return self._write(name, series_to_csv(series))

    def summary(self, name, record):
        """JSON summaries are always written; they carry the pass flags."""
        return self._write(name, dump_json({"schema_version": OUTPUT_SCHEMA_VERSION, **record}))

    def xy(self, name, x, y, header=None, svg=None):
        """Two-column plot data; ``svg`` (title, xlabel, ylabel, logx, logy) also renders it."""
        if "xy" in self.formats:
            self._write(name, xy_text(x, y, header))
        if svg is not None and "svg" in self.formats:
            title, xlabel, ylabel, logx, logy = svg
            self._write(Path(name).with_suffix(".svg").name,
                        svg_line_plot([(ylabel, x, y)], title, xlabel, ylabel, logx=logx, logy=logy))

    def text(self, name, text):
        return self._write(name, text)

    def manifest(self, config, code_version, wall_time, extra=None):
        """Write ``manifest.json`` listing every file with its sha256."""
        record = {
            "schema_version": OUTPUT_SCHEMA_VERSION,
            "config_sha256": config.digest(),
            "config": config.to_dict(),
            "code_version": code_version,
            "created_unix": round(time.time(), 3),
            "wall_time_s": round(wall_time, 3),
            "files": [
                {"path": f, "sha256": file_sha256(self.directory / f),
                 "bytes": (self.directory / f).stat().st_size}
                for f in self.files
            ],
        }
        record.update(extra or {})
        path = self.directory / "manifest.json"
        try:
            path.write_text(dump_json(record))
        except OSError as exc:
            raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc
        return path


def read_manifest(path):
    """Load a manifest, refusing newer major schema versions."""
    data = json.loads(Path(path).read_text())
    major = int(str(data.get("schema_version", "0.0")).split(".")[0])
    if major > int(OUTPUT_SCHEMA_VERSION.split(".")[0]):
        raise ValueError(f"manifest schema {data['schema_version']} is newer than {OUTPUT_SCHEMA_VERSION}")
    return data
