"""Dependency-free SVG rendering of sweep heatmaps and free-energy curves.

Output is deterministic: identical inputs give byte-identical files.
"""
from __future__ import annotations

import csv
import math
from xml.sax.saxutils import escape

__all__ = ["viridis", "heatmap_svg", "elbow_svg", "read_results", "read_overlays"]

_VIRIDIS = (
    "44015444025645045745055946075a46085c460a5d460b5e470d60470e61471063471164471365481467481668481769"
    "48186a481a6c481b6d481c6e481d6f481f70482071482173482374482475482576482677482878482979472a7a472c7a"
    "472d7b472e7c472f7d46307e46327e46337f463480453581453781453882443983443a83443b84433d84433e85423f85"
    "4240864241864142874144874045884046883f47883f48893e49893e4a893e4c8a3d4d8a3d4e8a3c4f8a3c508b3b518b"
    "3b528b3a538b3a548c39558c39568c38588c38598c375a8c375b8d365c8d365d8d355e8d355f8d34608d34618d33628d"
    "33638d32648e32658e31668e31678e31688e30698e306a8e2f6b8e2f6c8e2e6d8e2e6e8e2e6f8e2d708e2d718e2c718e"
    "2c728e2c738e2b748e2b758e2a768e2a778e2a788e29798e297a8e297b8e287c8e287d8e277e8e277f8e27808e26818e"
    "26828e26828e25838e25848e25858e24868e24878e23888e23898e238a8d228b8d228c8d228d8d218e8d218f8d21908d"
    "21918c20928c20928c20938c1f948c1f958b1f968b1f978b1f988b1f998a1f9a8a1e9b8a1e9c891e9d891f9e891f9f88"
    "1fa0881fa1881fa1871fa28720a38620a48621a58521a68522a78522a88423a98324aa8325ab8225ac8226ad8127ad81"
    "28ae8029af7f2ab07f2cb17e2db27d2eb37c2fb47c31b57b32b67a34b67935b77937b87838b9773aba763bbb753dbc74"
    "3fbc7340bd7242be7144bf7046c06f48c16e4ac16d4cc26c4ec36b50c46a52c56954c56856c66758c7655ac8645cc863"
    "5ec96260ca6063cb5f65cb5e67cc5c69cd5b6ccd5a6ece5870cf5773d05675d05477d1537ad1517cd2507fd34e81d34d"
    "84d44b86d54989d5488bd6468ed64590d74393d74195d84098d83e9bd93c9dd93ba0da39a2da37a5db36a8db34aadc32"
    "addc30b0dd2fb2dd2db5de2bb8de29bade28bddf26c0df25c2df23c5e021c8e020cae11fcde11dd0e11cd2e21bd5e21a"
    "d8e219dae319dde318dfe318e2e418e5e419e7e419eae51aece51befe51cf1e51df4e61ef6e620f8e621fbe723fde725"
)

CURVE_STYLE = {"SNR": "#d62728", "lambda3": "#ff7f0e", "lambda4": "#17becf"}
CURVE_LABEL = {"SNR": "SNR = 1", "lambda3": "\u03bb3\u00b2/\u03bb1 = 1", "lambda4": "\u03bb4\u00b2/\u03bb1 = 1"}


def viridis(t):
    """Hex colour for ``t`` in [0, 1] from the 256-stop table."""
    if not math.isfinite(t):
        t = 0.0
    k = min(max(int(round(t * 255)), 0), 255)
    return "#" + _VIRIDIS[6 * k:6 * k + 6]


def _num(x):
    return f"{x:.4g}"


def _xy(x):
    return f"{x:.2f}"


def read_results(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def read_overlays(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return [(r["curve"], float(r["delta"]), float(r["rho"])) for r in csv.DictReader(fh)]


def _edges(centres):
    """Cell boundaries around sorted centre coordinates."""
    if len(centres) == 1:
        c = centres[0]
        half = abs(c) * 0.05 or 0.5
        return [c - half, c + half]
    mids = [(a + b) / 2 for a, b in zip(centres[:-1], centres[1:])]
    return [2 * centres[0] - mids[0]] + mids + [2 * centres[-1] - mids[-1]]


def _branches(points):
    """Split overlay points of one curve into branches: at each delta the
    k-th smallest root belongs to branch k."""
    by_delta = {}
    for delta, rho in points:
        by_delta.setdefault(delta, []).append(rho)
    branches = {}
    for delta in sorted(by_delta):
        for k, rho in enumerate(sorted(by_delta[delta])):
            branches.setdefault(k, []).append((rho, delta))
    return [branches[k] for k in sorted(branches)]


def heatmap_svg(rows, overlays=(), value="mean_q", method=None, title=None):
    """Heatmap of ``value`` over the (rho, delta) grid of a results table.

    ``rows`` are dicts as read from results.csv (strings are accepted).
    Invalid cells are hatched; overlay curves are drawn as polylines.
    """
    if method is None and rows:
        method = rows[0]["method"]
    rows = [r for r in rows if r["method"] == method]
    if not rows:
        raise ValueError(f"no rows for method {method!r}")
    cells = {}
    for r in rows:
        i, j = int(r["i_rho"]), int(r["i_delta"])
        v = r[value]
        v = None if v in ("", None) else float(v)
        valid = str(r["valid"]).lower() in ("true", "1")
        cells[(i, j)] = (float(r["rho"]), float(r["delta"]), valid, v)
    n_i = max(i for i, _ in cells) + 1
    n_j = max(j for _, j in cells) + 1
    rhos = [next(c[0] for (i, _), c in sorted(cells.items()) if i == a) for a in range(n_i)]
    deltas = [next(c[1] for (_, j), c in sorted(cells.items()) if j == b) for b in range(n_j)]
    xe, ye = _edges(rhos), _edges(deltas)
    vals = [c[3] for c in cells.values() if c[2] and c[3] is not None]
    if value == "mean_ami":
        vmin, vmax = 0.0, 1.0
    else:
        vmin, vmax = (min(vals), max(vals)) if vals else (0.0, 1.0)
    if vmax <= vmin:
        vmax = vmin + 1.0

    W, H = 680, 520
    X0, Y0, PW, PH = 80, 40, 440, 400

    def px(rho):
        return X0 + (rho - xe[0]) / (xe[-1] - xe[0]) * PW

    def py(delta):
        return Y0 + PH - (delta - ye[0]) / (ye[-1] - ye[0]) * PH

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
        '<defs><pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse" '
        'patternTransform="rotate(45)"><rect width="6" height="6" fill="#d9d9d9"/>'
        '<line x1="0" y1="0" x2="0" y2="6" stroke="#8c8c8c" stroke-width="2"/></pattern></defs>',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{X0 + PW / 2}" y="24" text-anchor="middle" font-size="14">'
                   f'{escape(title)}</text>')
    out.append('<g id="cells">')
    for (i, j) in sorted(cells):
        _, _, valid, v = cells[(i, j)]
        x, x2 = px(xe[i]), px(xe[i + 1])
        y2, y = py(ye[j]), py(ye[j + 1])
        if valid and v is not None:
            fill = viridis((v - vmin) / (vmax - vmin))
            tip = f"rho={_num(rhos[i])} delta={_num(deltas[j])} {value}={_num(v)}"
        else:
            fill = "url(#hatch)"
            tip = f"rho={_num(rhos[i])} delta={_num(deltas[j])} invalid"
        out.append(f'<rect x="{_xy(x)}" y="{_xy(y)}" width="{_xy(x2 - x)}" height="{_xy(y2 - y)}" '
                   f'fill="{fill}"><title>{escape(tip)}</title></rect>')
    out.append('</g>')

    out.append(f'<g id="overlays" fill="none" stroke-width="2">')
    by_curve = {}
    for curve, delta, rho in overlays:
        by_curve.setdefault(curve, []).append((delta, rho))
    for curve in sorted(by_curve):
        colour = CURVE_STYLE.get(curve, "black")
        for branch in _branches(by_curve[curve]):
            pts = " ".join(f"{_xy(px(r))},{_xy(py(d))}" for r, d in branch
                           if xe[0] <= r <= xe[-1] and ye[0] <= d <= ye[-1])
            if pts:
                out.append(f'<polyline points="{pts}" stroke="{colour}"/>')
    out.append('</g>')

    out.append(f'<rect x="{X0}" y="{Y0}" width="{PW}" height="{PH}" fill="none" stroke="black"/>')
    for k in range(5):
        r = xe[0] + (xe[-1] - xe[0]) * k / 4
        d = ye[0] + (ye[-1] - ye[0]) * k / 4
        out.append(f'<text x="{_xy(px(r))}" y="{Y0 + PH + 16}" text-anchor="middle">{_num(r)}</text>')
        out.append(f'<text x="{X0 - 6}" y="{_xy(py(d) + 4)}" text-anchor="end">{_num(d)}</text>')
    out.append(f'<text x="{X0 + PW / 2}" y="{Y0 + PH + 36}" text-anchor="middle">\u03c1</text>')
    out.append(f'<text x="20" y="{Y0 + PH / 2}" text-anchor="middle" '
               f'transform="rotate(-90 20 {Y0 + PH / 2})">\u03b4</text>')

    cx, cw = X0 + PW + 20, 16
    out.append('<g id="colorbar">')
    steps = 64
    for k in range(steps):
        y = Y0 + PH - (k + 1) * PH / steps
        out.append(f'<rect x="{cx}" y="{_xy(y)}" width="{cw}" height="{_xy(PH / steps + 0.5)}" '
                   f'fill="{viridis(k / (steps - 1))}"/>')
    out.append(f'<rect x="{cx}" y="{Y0}" width="{cw}" height="{PH}" fill="none" stroke="black"/>')
    for k in range(5):
        v = vmin + (vmax - vmin) * k / 4
        y = Y0 + PH - PH * k / 4
        out.append(f'<text x="{cx + cw + 4}" y="{_xy(y + 4)}">{_num(v)}</text>')
    out.append(f'<text x="{cx}" y="{Y0 - 8}">{escape(value)}</text>')
    out.append('</g>')

    out.append('<g id="legend">')
    ly = H - 30
    lx = X0
    entries = [("hatch", "invalid")] + [(c, CURVE_LABEL.get(c, c)) for c in sorted(by_curve)]
    for key, label in entries:
        if key == "hatch":
            out.append(f'<rect x="{lx}" y="{ly - 9}" width="14" height="10" fill="url(#hatch)" '
                       'stroke="black" stroke-width="0.5"/>')
        else:
            out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 14}" y2="{ly - 4}" '
                       f'stroke="{CURVE_STYLE.get(key, "black")}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 18}" y="{ly}">{escape(label)}</text>')
        lx += 130
    out.append(f'<text x="{W - 10}" y="{ly}" text-anchor="end">{escape(method)}</text>')
    out.append('</g>')
    out.append('</svg>')
    return "\n".join(out) + "\n"


def elbow_svg(qs, f_values, q_star=None, title="BP free energy"):
    """Minimum free energy against the number of communities."""
    if len(qs) != len(f_values) or not qs:
        raise ValueError("need matching, non-empty q and free-energy lists")
    W, H = 480, 360
    X0, Y0, PW, PH = 70, 40, 370, 260
    qmin, qmax = min(qs), max(qs)
    fmin, fmax = min(f_values), max(f_values)
    if fmax == fmin:
        fmax = fmin + 1e-3
    pad = (fmax - fmin) * 0.08
    fmin, fmax = fmin - pad, fmax + pad

    def px(q):
        return X0 + (0.5 if qmax == qmin else (q - qmin) / (qmax - qmin)) * PW

    def py(f):
        return Y0 + PH - (f - fmin) / (fmax - fmin) * PH

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{X0 + PW / 2}" y="24" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{X0}" y="{Y0}" width="{PW}" height="{PH}" fill="none" stroke="black"/>',
    ]
    pts = " ".join(f"{_xy(px(q))},{_xy(py(f))}" for q, f in zip(qs, f_values))
    out.append(f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="2"/>')
    for q, f in zip(qs, f_values):
        colour = "#d62728" if q == q_star else "#1f77b4"
        out.append(f'<circle cx="{_xy(px(q))}" cy="{_xy(py(f))}" r="4" fill="{colour}">'
                   f'<title>q={q} f={f:.6f}</title></circle>')
        out.append(f'<text x="{_xy(px(q))}" y="{Y0 + PH + 16}" text-anchor="middle">{q}</text>')
    for k in range(5):
        f = fmin + (fmax - fmin) * k / 4
        out.append(f'<text x="{X0 - 6}" y="{_xy(py(f) + 4)}" text-anchor="end">{f:.3f}</text>')
    out.append(f'<text x="{X0 + PW / 2}" y="{Y0 + PH + 36}" text-anchor="middle">q</text>')
    out.append(f'<text x="16" y="{Y0 + PH / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {Y0 + PH / 2})">f_min</text>')
    if q_star is not None:
        out.append(f'<text x="{W - 10}" y="{H - 10}" text-anchor="end">q* = {q_star}</text>')
    out.append('</svg>')
    return "\n".join(out) + "\n"
