"""Plain-text serialisation: bodies, trajectory snapshots, diagnostics CSV, SVG plots."""
import csv
import json
from pathlib import Path

import numpy as np

from .body import Backend, SupportField, get_grid, reconstruct
from .diagnostics import DiagnosticsRecord
from .errors import DomainError


def _fmt(x):
    # 17 significant digits round-trips every double exactly
    return f"{x:.16e}"


def format_body(body):
    lines = [f"{body.backend.value} {body.N}"]
    lines += [f"{_fmt(p)} {_fmt(v)}" for p, v in zip(body.nodes, body.u)]
    return "\n".join(lines) + "\n"


def _parse_body_lines(lines, start=0):
    try:
        backend_name, count = lines[start].split()
        backend = Backend(backend_name)
        N = int(count)
    except (ValueError, IndexError) as exc:
        raise DomainError(f"bad body header at line {start + 1}: {lines[start:start + 1]}") from exc
    rows = lines[start + 1:start + 1 + N]
    if len(rows) != N:
        raise DomainError(f"body block truncated: expected {N} rows, found {len(rows)}")
    data = np.array([[float(x) for x in row.split()] for row in rows])
    nodes = get_grid(backend, N).nodes
    if not np.allclose(data[:, 0], nodes, rtol=0, atol=1e-12):
        raise DomainError("parameter column does not match the grid nodes")
    return SupportField(backend, data[:, 1]), start + 1 + N


def parse_body(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    return _parse_body_lines(lines)[0]


def write_body(path, body):
    Path(path).write_text(format_body(body))


def read_body(path):
    return parse_body(Path(path).read_text())


def write_snapshots(path, states):
    """One ``t h dt`` line followed by a body block per state."""
    with open(path, "w") as fh:
        for s in states:
            fh.write(f"{_fmt(s.t)} {_fmt(s.h)} {_fmt(s.dt)}\n")
            fh.write(format_body(s.body))


def read_snapshots(path):
    """List of (t, h, dt, body) tuples."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    out, i = [], 0
    while i < len(lines):
        t, h, dt = (float(x) for x in lines[i].split())
        body, i = _parse_body_lines(lines, i + 1)
        out.append((t, h, dt, body))
    return out


def write_series(path, records):
    if not records:
        raise DomainError("no records to write")
    header = [name for name, _ in records[0].columns()]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for rec in records:
            w.writerow([v if isinstance(v, int) else repr(float(v)) for _, v in rec.columns()])


def read_series(path):
    with open(path, newline="") as fh:
        return [DiagnosticsRecord.from_columns(row) for row in csv.DictReader(fh)]


def audits_to_json(reports, extra=None):
    payload = {"audits": {name: rep.to_dict() for name, rep in sorted(reports.items())}}
    if extra:
        payload.update(extra)
    return json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else repr(x)
    return obj


_PALETTE = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"]


def _svg_polylines(curves, labels, size=480, pad=20):
    pts = np.vstack(curves)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    scale = (size - 2 * pad) / max(float((hi - lo).max()), 1e-300)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + 20 * len(labels)}">',
             '<rect width="100%" height="100%" fill="white"/>']
    for i, (c, label) in enumerate(zip(curves, labels)):
        xy = (c - lo) * scale + pad
        xy[:, 1] = size - xy[:, 1]
        path = " ".join(f"{x:.2f},{y:.2f}" for x, y in xy)
        color = _PALETTE[i % len(_PALETTE)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{path}"/>')
        parts.append(f'<text x="{pad}" y="{size + 15 + 20 * i}" font-size="12" fill="{color}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def snapshots_svg(states, max_curves=8):
    """Overlay of reconstructed boundaries.

    CIRCLE bodies are drawn as closed curves; AXISYMMETRIC bodies as the
    meridian profile (distance from the axis against height), mirrored.
    """
    if not states:
        raise DomainError("no states to plot")
    idx = np.unique(np.linspace(0, len(states) - 1, min(max_curves, len(states))).astype(int))
    curves, labels = [], []
    for i in idx:
        s = states[i]
        X = reconstruct(s.body)
        if s.body.backend is Backend.CIRCLE:
            c = np.vstack([X[:, :2], X[:1, :2]])
        else:
            half = X[:, [0, 2]]
            c = np.vstack([half, half[::-1] * [-1, 1], half[:1]])
        curves.append(c)
        labels.append(f"t = {s.t:.4g}")
    return _svg_polylines(curves, labels)
