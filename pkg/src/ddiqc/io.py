"""File formats: trajectory CSV, model JSON, JSON reports and SVG charts."""
import csv
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError
from .lti import StateSpaceModel, Trajectory

MODEL_SCHEMA = "ssmodel/1"
REPORT_SCHEMA = "report/1"
_HEADER_RE = re.compile(r"^(u|y)([1-9][0-9]*)$")


def fmt(x):
    """17 significant digits, enough for a bit-exact roundtrip."""
    return "%.17g" % x


# -- trajectories -------------------------------------------------------------

def _parse_header(row, path):
    if not row or row[0] != "k":
        raise ParseError(f"{path}:1: header must start with 'k', got {row[:1]}")
    m = p = 0
    for name in row[1:]:
        mt = _HEADER_RE.match(name)
        if not mt:
            raise ParseError(f"{path}:1: unrecognized column {name!r}")
        kind, idx = mt.group(1), int(mt.group(2))
        if kind == "u":
            if p or idx != m + 1:
                raise ParseError(f"{path}:1: expected 'u{m + 1}' or 'y1', got {name!r}")
            m += 1
        else:
            if idx != p + 1:
                raise ParseError(f"{path}:1: expected 'y{p + 1}', got {name!r}")
            p += 1
    if m == 0 or p == 0:
        raise ParseError(f"{path}:1: header needs at least one u and one y column")
    return m, p


def load_trajectory_csv(path):
    """Read a trajectory with header ``k,u1..um,y1..yp`` and rows ``k = 0, 1, ...``.

    Raises
    ------
    ParseError
        Malformed header, gaps in ``k``, wrong column counts, or non-numeric
        or non-finite cells; the message names the line.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}:1: empty file") from None
        m, p = _parse_header([h.strip() for h in header], path)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 1 + m + p:
                raise ParseError(f"{path}:{lineno}: expected {1 + m + p} columns, got {len(row)}")
            try:
                k = int(row[0])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: sample index {row[0]!r} is not an integer") from None
            if k != len(rows):
                raise ParseError(f"{path}:{lineno}: sample index {k} breaks the sequence "
                                 f"(expected {len(rows)})")
            try:
                vals = [float(c) for c in row[1:]]
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric value in {row[1:]}") from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError(f"{path}:{lineno}: non-finite value in {row[1:]}")
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    data = np.array(rows)
    return Trajectory(data[:, :m], data[:, m:])


def save_trajectory_csv(path, traj):
    m, p = traj.m, traj.p
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k"] + [f"u{i + 1}" for i in range(m)] + [f"y{i + 1}" for i in range(p)])
        for k in range(traj.N):
            w.writerow([k] + [fmt(v) for v in traj.u[k]] + [fmt(v) for v in traj.y[k]])


def write_pairs_csv(path, names, columns):
    """Plot data: one column per name, rows in parallel."""
    n = {len(c) for c in columns}
    if len(n) > 1:
        raise ValueError("columns must have equal length")
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*columns):
            w.writerow([fmt(v) if isinstance(v, float) else v for v in row])


# -- models -------------------------------------------------------------------

def model_to_dict(model):
    return {"schema": MODEL_SCHEMA, "A": model.A.tolist(), "B": model.B.tolist(),
            "C": model.C.tolist(), "D": model.D.tolist()}


def save_model_json(path, model):
    Path(path).write_text(dumps(model_to_dict(model)) + "\n")


def load_model_json(path):
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict) or obj.get("schema") != MODEL_SCHEMA:
        raise ParseError(f"{path}: expected an object with schema {MODEL_SCHEMA!r}")
    mats = {}
    for key in "ABCD":
        if key not in obj:
            raise ParseError(f"{path}: missing field {key!r}")
        try:
            mats[key] = np.array(obj[key], dtype=float)
        except (TypeError, ValueError):
            raise ParseError(f"{path}: field {key!r} is not a numeric matrix") from None
    try:
        return StateSpaceModel(mats["A"], mats["B"], mats["C"], mats["D"])
    except ValueError as exc:
        raise ParseError(f"{path}: inconsistent model ({exc})") from None


# -- JSON reports -------------------------------------------------------------

def _emit(obj, out, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, bool):
        out.append("null" if obj is None else ("true" if obj else "false"))
    elif isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        out.append(fmt(x) if math.isfinite(x) else "null")
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, np.ndarray):
        _emit(obj.tolist(), out, indent, level)
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(f"{pad}{json.dumps(str(k))}: ")
            _emit(v, out, indent, level + 1)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            parts = []
            for v in obj:
                _emit(v, parts, indent, level + 1)
                parts.append(", ")
            out.append("[" + "".join(parts[:-1]) + "]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad)
            _emit(v, out, indent, level + 1)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent=2):
    """JSON text with insertion-ordered keys, 17-digit floats, non-finite as null."""
    out = []
    _emit(obj, out, indent, 0)
    return "".join(out)


@dataclass
class ReportDocument:
    """Machine-readable result of one CLI command."""

    command: str
    argv: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    payload: dict = field(default_factory=dict)
    timing: float | None = None
    version: str = ""

    def as_dict(self):
        return {"schema": REPORT_SCHEMA, "command": self.command, "argv": list(self.argv),
                "config": self.config, "diagnostics": self.diagnostics, "payload": self.payload,
                "timing": self.timing, "version": self.version}


def report_json(doc):
    return dumps(doc.as_dict())


# -- SVG ----------------------------------------------------------------------

def svg_line_chart(path, x, series, xlabel="", ylabel="", title="", size=(640, 400)):
    """Write a self-contained SVG line chart; ``series`` maps label to y values."""
    W, H = size
    ml, mr, mt, mb = 70, 20, 30, 50
    x = np.asarray(x, float)
    ys = {k: np.asarray(v, float) for k, v in series.items()}
    allv = np.concatenate([v[np.isfinite(v)] for v in ys.values()]) if ys else np.zeros(1)
    x0, x1 = (float(x.min()), float(x.max())) if x.size else (0.0, 1.0)
    y0, y1 = (float(allv.min()), float(allv.max())) if allv.size else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def px(v):
        return ml + (v - x0) / (x1 - x0) * (W - ml - mr)

    def py(v):
        return H - mb - (v - y0) / (y1 - y0) * (H - mt - mb)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
             f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
             '<rect width="100%" height="100%" fill="white"/>',
             f'<line x1="{ml}" y1="{H - mb}" x2="{W - mr}" y2="{H - mb}" stroke="black"/>',
             f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{H - mb}" stroke="black"/>']
    for t in np.linspace(0, 1, 5):
        xv, yv = x0 + t * (x1 - x0), y0 + t * (y1 - y0)
        parts.append(f'<text x="{px(xv):.1f}" y="{H - mb + 16}" text-anchor="middle">{xv:.4g}</text>')
        parts.append(f'<text x="{ml - 6}" y="{py(yv) + 4:.1f}" text-anchor="end">{yv:.4g}</text>')
    for i, (label, y) in enumerate(ys.items()):
        c = colors[i % len(colors)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y) if math.isfinite(b))
        parts.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{W - mr - 4}" y="{mt + 14 * (i + 1)}" fill="{c}" '
                     f'text-anchor="end">{_esc(label)}</text>')
    parts.append(f'<text x="{(ml + W - mr) / 2}" y="{H - 12}" text-anchor="middle">{_esc(xlabel)}</text>')
    parts.append(f'<text x="16" y="{(mt + H - mb) / 2}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {(mt + H - mb) / 2})">{_esc(ylabel)}</text>')
    if title:
        parts.append(f'<text x="{W / 2}" y="18" text-anchor="middle">{_esc(title)}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def _esc(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
