"""Report output: CSV (the contract) and a dependency-free log-log SVG plot."""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path

from .study import StudyReport, StudyRow

CSV_COLUMNS = ("level", "h", "dof", "l2_error", "l2_order", "h1_error", "h1_order", "seconds")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def report_csv(report: StudyReport) -> str:
    """CSV text of a report; wall times only appear when ``report.timing`` is set."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in report.rows:
        vals = [getattr(row, c) for c in CSV_COLUMNS]
        if not report.timing:
            vals[-1] = None
        w.writerow([_fmt(v) for v in vals])
    return buf.getvalue()


def write_csv(report: StudyReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report_csv(report))
    return path


def _parse(v: str, kind):
    if v == "":
        return None
    return kind(v)


def read_csv(source) -> StudyReport:
    """Parse CSV text or a file written by :func:`write_csv`."""
    text = source if isinstance(source, str) and "\n" in source else Path(source).read_text()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError("not a study CSV (header mismatch)")
    out = []
    timing = False
    for r in rows[1:]:
        level, h, dof, l2, l2o, h1, h1o, secs = r
        timing = timing or secs != ""
        out.append(StudyRow(int(level), float(h), int(dof), float(l2), _parse(l2o, float),
                            float(h1), _parse(h1o, float), _parse(secs, float)))
    return StudyReport(rows=out, timing=timing)


def write_svg(report: StudyReport, path, width: int = 480, height: int = 360) -> Path:
    """Log-log plot of L2 and broken H1 errors against h with slope guides.

    Guides have slopes ``r + 1`` and ``r`` inferred from the finest observed
    orders (rounded), anchored at the coarsest point of each curve.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    series = []
    for name, key, color in (("L2", "l2_error", "#1f77b4"), ("H1", "h1_error", "#d62728")):
        pts = [(r.h, getattr(r, key)) for r in report.rows
               if r.h > 0 and getattr(r, key) is not None and getattr(r, key) > 0 and math.isfinite(getattr(r, key))]
        if pts:
            series.append((name, key, color, pts))
    m = 50
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    allpts = [p for s in series for p in s[3]]
    if allpts:
        lx = [math.log10(p[0]) for p in allpts]
        ly = [math.log10(p[1]) for p in allpts]
        x0, x1 = min(lx) - 0.1, max(lx) + 0.1
        y0, y1 = min(ly) - 0.3, max(ly) + 0.3

        def X(h):
            return m + (math.log10(h) - x0) / (x1 - x0) * (width - 2 * m)

        def Y(e):
            return height - m - (math.log10(e) - y0) / (y1 - y0) * (height - 2 * m)

        lines.append(f'<line x1="{m}" y1="{height - m}" x2="{width - m}" y2="{height - m}" stroke="black"/>')
        lines.append(f'<line x1="{m}" y1="{m}" x2="{m}" y2="{height - m}" stroke="black"/>')
        lines.append(f'<text x="{width / 2:.1f}" y="{height - 12}" font-size="12" text-anchor="middle">h</text>')
        lines.append(f'<text x="14" y="{height / 2:.1f}" font-size="12" transform="rotate(-90 14 {height / 2:.1f})" '
                     f'text-anchor="middle">error</text>')
        for name, key, color, pts in series:
            poly = " ".join(f"{X(h):.2f},{Y(e):.2f}" for h, e in pts)
            lines.append(f'<polyline points="{poly}" fill="none" stroke="{color}" stroke-width="2"/>')
            for h, e in pts:
                lines.append(f'<circle cx="{X(h):.2f}" cy="{Y(e):.2f}" r="3" fill="{color}"/>')
            orders = [getattr(r, key.replace("error", "order")) for r in report.rows]
            orders = [o for o in orders if o is not None and math.isfinite(o)]
            if orders and len(pts) > 1:
                slope = max(round(orders[-1]), 0)
                (h0, e0), h1 = pts[0], pts[-1][0]
                e1 = e0 * (h1 / h0) ** slope
                lines.append(
                    f'<line x1="{X(h0):.2f}" y1="{Y(e0):.2f}" x2="{X(h1):.2f}" y2="{Y(e1):.2f}" '
                    f'stroke="{color}" stroke-dasharray="4 3"/>'
                )
                lines.append(f'<text x="{X(h1) + 4:.2f}" y="{Y(e1):.2f}" font-size="10" fill="{color}">'
                             f'slope {slope}</text>')
            lx0, ly0 = pts[-1]
            lines.append(f'<text x="{X(lx0) + 4:.2f}" y="{Y(ly0) - 6:.2f}" font-size="11" fill="{color}">{name}</text>')
    lines.append("</svg>")
    path.write_text("\n".join(lines) + "\n")
    return path
