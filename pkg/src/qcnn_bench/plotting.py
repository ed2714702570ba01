"""Dependency-free SVG line charts of per-epoch metrics."""

from __future__ import annotations

from xml.sax.saxutils import escape

PANEL_W, PANEL_H, PAD = 360, 240, 40
COLORS = {"train": "#1f77b4", "test": "#d62728"}


def _panel(x0, title, rows, metric):
    epochs = [r["epoch"] for r in rows]
    series = {split: [r[f"{split}_{metric}"] for r in rows] for split in ("train", "test")}
    lo = min(min(v) for v in series.values())
    hi = max(max(v) for v in series.values())
    if metric == "accuracy":
        lo, hi = min(lo, 0.5), 1.0
    if hi - lo < 1e-12:
        hi = lo + 1.0
    e_lo, e_hi = min(epochs), max(epochs)
    e_span = max(e_hi - e_lo, 1)
    w, h = PANEL_W - 2 * PAD, PANEL_H - 2 * PAD

    def sx(e):
        return x0 + PAD + (e - e_lo) / e_span * w

    def sy(v):
        return PAD + (1 - (v - lo) / (hi - lo)) * h

    parts = [
        f'<text x="{x0 + PANEL_W / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{x0 + PAD}" y="{PAD}" width="{w}" height="{h}" fill="none" stroke="#888"/>',
        f'<text x="{x0 + PAD}" y="{PANEL_H - 12}" font-size="10">epoch {e_lo}</text>',
        f'<text x="{x0 + PAD + w}" y="{PANEL_H - 12}" font-size="10" text-anchor="end">{e_hi}</text>',
        f'<text x="{x0 + 4}" y="{PAD + 4}" font-size="10">{hi:.3g}</text>',
        f'<text x="{x0 + 4}" y="{PAD + h}" font-size="10">{lo:.3g}</text>',
    ]
    for k, (split, values) in enumerate(series.items()):
        pts = " ".join(f"{sx(e):.1f},{sy(v):.1f}" for e, v in zip(epochs, values))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{COLORS[split]}" stroke-width="2"/>')
        ly = PAD + 12 + 14 * k
        parts.append(f'<text x="{x0 + PAD + w - 4}" y="{ly}" font-size="11" text-anchor="end" fill="{COLORS[split]}">{split}</text>')
    return parts


def metrics_svg(rows, title="") -> str:
    """Two panels (accuracy, loss) with train and test curves."""
    if not rows:
        raise ValueError("no metrics to plot")
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{2 * PANEL_W}" height="{PANEL_H + 10}">']
    parts.append('<rect width="100%" height="100%" fill="white"/>')
    parts += _panel(0, f"{title} accuracy".strip(), rows, "accuracy")
    parts += _panel(PANEL_W, f"{title} loss".strip(), rows, "loss")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
