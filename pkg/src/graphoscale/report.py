"""Deterministic SVG rendering of an assessment profile."""

from xml.sax.saxutils import escape

from .scoring import Block

WIDTH = 760
BAR_X = 300
BAR_W = 380
ROW_H = 18
PANEL_W = 180
PANEL_H = 90
PANELS_PER_ROW = 4

BLOCK_TITLES = {
    Block.PROCESS_GRAPHOMOTOR: "Process: graphomotor tasks",
    Block.PROCESS_HANDWRITING: "Process: handwriting",
    Block.PRODUCT_HANDWRITING: "Product: handwriting",
    Block.PRODUCT_GRAPHOMOTOR: "Product: graphomotor tasks",
}

FLAG_COLOUR = "#c0392b"
OK_COLOUR = "#2e86c1"


def _f(v):
    return f"{v:.2f}"


def _text(x, y, s, size=11, anchor="start", weight="normal"):
    return (f'<text x="{_f(x)}" y="{_f(y)}" font-size="{size}" text-anchor="{anchor}" '
            f'font-weight="{weight}">{escape(s)}</text>')


def _bar(y, label, display, flag, reason):
    out = [_text(10, y + 12, label)]
    out.append(f'<rect x="{BAR_X}" y="{_f(y + 2)}" width="{BAR_W}" height="{ROW_H - 4}" '
               f'fill="#f2f2f2"/>')
    if display is None:
        out.append(_text(BAR_X + 4, y + 13, f"missing ({reason})", 10))
    else:
        colour = FLAG_COLOUR if flag else OK_COLOUR
        out.append(f'<rect x="{BAR_X}" y="{_f(y + 2)}" width="{_f(BAR_W * display)}" '
                   f'height="{ROW_H - 4}" fill="{colour}"/>')
        out.append(_text(BAR_X + BAR_W + 6, y + 13, _f(display), 10))
    mid = BAR_X + BAR_W / 2
    out.append(f'<line x1="{_f(mid)}" y1="{_f(y)}" x2="{_f(mid)}" y2="{_f(y + ROW_H)}" '
               f'stroke="#555" stroke-dasharray="2,2"/>')
    return out


def _kde_panel(x0, y0, result, entry):
    out = [f'<rect x="{_f(x0)}" y="{_f(y0)}" width="{PANEL_W}" height="{PANEL_H}" '
           f'fill="none" stroke="#999"/>',
           _text(x0 + 4, y0 + 12, result.manifestation, 9)]
    curve = entry.density if entry is not None else None
    if curve is None:
        out.append(_text(x0 + 4, y0 + 40, "no density", 9))
        return out
    grid, dens = curve.grid, curve.density
    lo, hi = float(grid[0]), float(grid[-1])
    marks = [v for v in (result.scaled, entry.threshold) if v is not None]
    lo, hi = min([lo] + marks), max([hi] + marks)
    span = hi - lo or 1.0
    top = float(max(dens)) or 1.0
    plot_top, plot_h = y0 + 18, PANEL_H - 24

    def px(v):
        return x0 + 4 + (PANEL_W - 8) * (v - lo) / span

    def py(d):
        return plot_top + plot_h * (1 - d / top)

    pts = " ".join(f"{_f(px(g))},{_f(py(d))}" for g, d in zip(grid, dens))
    out.append(f'<polyline points="{pts}" fill="none" stroke="#333" stroke-width="1"/>')
    tx = px(entry.threshold)
    out.append(f'<line x1="{_f(tx)}" y1="{_f(plot_top)}" x2="{_f(tx)}" '
               f'y2="{_f(plot_top + plot_h)}" stroke="#777" stroke-dasharray="3,2"/>')
    if result.scaled is not None:
        sx = px(result.scaled)
        colour = FLAG_COLOUR if result.flag else OK_COLOUR
        out.append(f'<circle cx="{_f(sx)}" cy="{_f(plot_top + plot_h)}" r="4" fill="{colour}"/>')
    return out


def render_svg(profile, table=None):
    """SVG report: global components, the four manifestation blocks, KDE panels.

    ``table`` supplies the cohort densities; without it the KDE panels are omitted.
    """
    body = []
    y = 10
    hdc = "n/a" if profile.hdc is None else str(profile.hdc)
    body.append(_text(10, y + 14, f"Subject {profile.subject}  grade {profile.grade}  HDC {hdc}",
                      14, weight="bold"))
    y += 30
    body.append(_text(10, y + 12, "Global components", 12, weight="bold"))
    y += ROW_H
    if not profile.components:
        body.append(_text(20, y + 12, "none fitted", 10))
        y += ROW_H
    for c in profile.components:
        body += _bar(y, f"{c.id} {c.label}", c.display, c.flag,
                     c.reason.value if c.reason else "")
        y += ROW_H
    for block in Block:
        rows = [m for m in profile.manifestations if m.block is block]
        y += 8
        body.append(_text(10, y + 12, BLOCK_TITLES[block], 12, weight="bold"))
        y += ROW_H
        if not rows:
            body.append(_text(20, y + 12, "no manifestations", 10))
            y += ROW_H
        for m in rows:
            task = m.task.name if m.task else "-"
            body += _bar(y, f"{m.manifestation} [{task}]", m.display, m.flag,
                         m.reason.value if m.reason else "")
            y += ROW_H
    if table is not None:
        entries = {e.manifestation: e for e in table.entries if e.grade == profile.grade}
        y += 12
        body.append(_text(10, y + 12, "Cohort densities (scaled feature; dot = subject)", 12,
                          weight="bold"))
        y += ROW_H + 4
        for i, m in enumerate(profile.manifestations):
            col, row = i % PANELS_PER_ROW, i // PANELS_PER_ROW
            body += _kde_panel(10 + col * (PANEL_W + 6), y + row * (PANEL_H + 6), m,
                               entries.get(m.manifestation))
        rows = -(-len(profile.manifestations) // PANELS_PER_ROW)
        y += rows * (PANEL_H + 6)
    height = y + 10
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
            f'viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">')
    return "\n".join([head, f'<rect width="{WIDTH}" height="{height}" fill="white"/>'] + body
                     + ["</svg>"]) + "\n"

