"""Static SVG figures: Hinton diagrams, assignment heat maps and Sankey flows.

Documents are assembled as strings; every drawable element carries
``data-*`` attributes with the quantities it encodes, so downstream tooling
(and the tests) can read geometry back without re-deriving the layout.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .analysis import ClusterFlow
from .dataset import CohortDataset
from .em import FitResult
from .errors import BernmixError, DimensionError, DomainError

CLUSTER_PALETTE = ("#7b3294", "#2c7fb8", "#31a354", "#de2d26")
ANSWER_COLORS = {"positive": "#08306b", "negative": "#9ecae1", "missing": "#bdbdbd"}
SWATCH_RANGE = (0.4, 1.0)
HINTON_BACKGROUND = "#7f7f7f"
HINTON_SQUARE = "#ffffff"


def _fmt(v: float) -> str:
    return f"{v:.6f}".rstrip("0").rstrip(".") or "0"


class _Svg:
    def __init__(self, width: float, height: float, title: str | None = None):
        self.width, self.height = width, height
        self.parts: list[str] = []
        if title:
            self.parts.append(f"<title>{escape(title)}</title>")

    def add(self, tag: str, text: str | None = None, **attrs) -> None:
        rendered = " ".join(f"{k.rstrip('_').replace('_', '-')}={quoteattr(str(v))}"
                            for k, v in attrs.items() if v is not None)
        if text is None:
            self.parts.append(f"<{tag} {rendered}/>")
        else:
            self.parts.append(f"<{tag} {rendered}>{escape(text)}</{tag}>")

    def open(self, tag: str, **attrs) -> None:
        rendered = " ".join(f"{k.rstrip('_').replace('_', '-')}={quoteattr(str(v))}"
                            for k, v in attrs.items() if v is not None)
        self.parts.append(f"<{tag} {rendered}>")

    def close(self, tag: str) -> None:
        self.parts.append(f"</{tag}>")

    def render(self) -> str:
        head = ('<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n'
                f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
                f'width="{_fmt(self.width)}" height="{_fmt(self.height)}" '
                f'viewBox="0 0 {_fmt(self.width)} {_fmt(self.height)}">')
        return head + "\n" + "\n".join(self.parts) + "\n</svg>\n"


def hinton_svg(weights, cell_size: float = 24.0, row_labels=None, col_labels=None,
               background: str = HINTON_BACKGROUND, color: str = HINTON_SQUARE) -> str:
    """Hinton diagram of a matrix of values in [0, 1].

    Each cell holds a centred square of side ``cell_size * sqrt(w / w_max)``,
    so square area is proportional to the weight. Zero weights draw nothing.
    """
    w = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    if w.size == 0 or w.ndim != 2:
        raise DimensionError("hinton_svg needs a nonempty 2-D matrix")
    if not np.all(np.isfinite(w)) or np.any(w < 0) or np.any(w > 1):
        raise DomainError("Hinton weights must lie in [0, 1]")
    rows, cols = w.shape
    w_max = w.max() if w.max() > 0 else 1.0
    left = 70.0 if row_labels is not None else 4.0
    top = 20.0 if col_labels is not None else 4.0
    svg = _Svg(left + cols * cell_size + 4, top + rows * cell_size + 4, "Hinton diagram")
    svg.add("rect", class_="hinton-background", x=_fmt(left), y=_fmt(top),
            width=_fmt(cols * cell_size), height=_fmt(rows * cell_size), fill=background)
    if col_labels is not None:
        for j, lab in enumerate(col_labels):
            svg.add("text", str(lab), x=_fmt(left + (j + 0.5) * cell_size), y=_fmt(top - 6),
                    font_size="10", text_anchor="middle")
    if row_labels is not None:
        for i, lab in enumerate(row_labels):
            svg.add("text", str(lab), x=_fmt(left - 6), y=_fmt(top + (i + 0.5) * cell_size + 3),
                    font_size="10", text_anchor="end")
    for i in range(rows):
        for j in range(cols):
            if w[i, j] <= 0:
                continue
            side = cell_size * math.sqrt(w[i, j] / w_max)
            cx = left + (j + 0.5) * cell_size
            cy = top + (i + 0.5) * cell_size
            svg.add("rect", class_="hinton-square", x=_fmt(cx - side / 2), y=_fmt(cy - side / 2),
                    width=_fmt(side), height=_fmt(side), fill=color,
                    data_row=i, data_col=j, data_weight=repr(float(w[i, j])))
    return svg.render()


def probability_gray(p: float, lo: float = SWATCH_RANGE[0], hi: float = SWATCH_RANGE[1]) -> str:
    """Linear map from ``lo`` (white) to ``hi`` (black); values below ``lo`` are white."""
    t = min(1.0, max(0.0, (p - lo) / (hi - lo)))
    level = int(round(255 * (1.0 - t)))
    return f"#{level:02x}{level:02x}{level:02x}"


def cluster_color(j: int, palette=CLUSTER_PALETTE) -> str:
    return palette[j % len(palette)]


def heatmap_order(fit: FitResult) -> np.ndarray:
    """Row order: by hard cluster, then by descending assignment probability, then id."""
    return np.lexsort((fit.patient_ids, -fit.assignment_prob, fit.hard_assignment))


def heatmap_svg(ds: CohortDataset, fit: FitResult, cell_w: float = 14.0, cell_h: float = 3.0,
                palette=CLUSTER_PALETTE, colors=ANSWER_COLORS) -> str:
    """Answer matrix grouped by assigned cluster, with a probability swatch per row."""
    if ds.n != fit.hard_assignment.size or ds.m != fit.params.m:
        raise DimensionError(f"fit covers {fit.hard_assignment.size}x{fit.params.m}, "
                             f"dataset is {ds.n}x{ds.m}")
    if not np.array_equal(ds.patient_ids, fit.patient_ids):
        raise DimensionError("fit and dataset patient ids differ")
    order = heatmap_order(fit)
    left, top = 4.0, 40.0
    band = cell_w
    swatch_x = left + band + 2 + ds.m * cell_w + 2
    width = swatch_x + cell_w + 4
    height = top + ds.n * cell_h + 4
    svg = _Svg(width, height, "Cluster heat map")
    for i, lab in enumerate(ds.column_labels):
        x = left + band + 2 + (i + 0.5) * cell_w
        svg.add("text", lab, x=_fmt(x), y=_fmt(top - 4), font_size="8", text_anchor="end",
                transform=f"rotate(-60 {_fmt(x)} {_fmt(top - 4)})")
    for pos, n in enumerate(order):
        y = top + pos * cell_h
        j = int(fit.hard_assignment[n])
        p = float(fit.assignment_prob[n])
        svg.open("g", class_="heatmap-row", data_patient=int(ds.patient_ids[n]), data_cluster=j,
                 data_probability=repr(p))
        svg.add("rect", class_="cluster-band", x=_fmt(left), y=_fmt(y), width=_fmt(band),
                height=_fmt(cell_h), fill=cluster_color(j, palette))
        for i, v in enumerate(ds.values[n]):
            kind = "missing" if np.isnan(v) else ("positive" if v == 1.0 else "negative")
            svg.add("rect", class_=f"cell {kind}", x=_fmt(left + band + 2 + i * cell_w), y=_fmt(y),
                    width=_fmt(cell_w), height=_fmt(cell_h), fill=colors[kind])
        svg.add("rect", class_="swatch", x=_fmt(swatch_x), y=_fmt(y), width=_fmt(cell_w),
                height=_fmt(cell_h), fill=probability_gray(p))
        svg.close("g")
    return svg.render()


def sankey_layout(flow: ClusterFlow, height: float = 400.0, gap: float = 12.0) -> dict:
    """Node and ribbon geometry for a Sankey diagram of ``flow``.

    Left nodes are fit-A clusters in index order; right nodes are fit-B
    clusters ordered by their aligned A cluster. One patient is ``scale``
    units tall everywhere, so ribbons stack exactly to node height.
    """
    f = np.asarray(flow.flow)
    total = int(f.sum())
    if f.size == 0 or total <= 0:
        raise BernmixError("sankey needs a flow with at least one patient")
    left_order = list(range(flow.k_a))
    right_order = flow.right_order()
    size_a, size_b = f.sum(axis=1), f.sum(axis=0)
    slots = max(len(left_order), len(right_order))
    scale = (height - gap * (slots - 1)) / total

    def stack(order, sizes):
        y, spans = 0.0, {}
        for c in order:
            spans[c] = (y, sizes[c] * scale)
            y += sizes[c] * scale + gap
        return spans

    left_nodes = stack(left_order, size_a)
    right_nodes = stack(right_order, size_b)
    right_rank = {b: r for r, b in enumerate(right_order)}
    out_cursor = {a: left_nodes[a][0] for a in left_order}
    ribbons = []
    for a in left_order:
        for b in sorted(range(flow.k_b), key=right_rank.get):
            if f[a, b] <= 0:
                continue
            thick = f[a, b] * scale
            ribbons.append({"source": a, "target": b, "count": int(f[a, b]), "thickness": thick,
                            "y0": out_cursor[a], "y1": None, "aligned": flow.is_aligned(a, b)})
            out_cursor[a] += thick
    # incoming ribbons stack in left-node order on the right
    in_cursor = {b: right_nodes[b][0] for b in right_order}
    for r in sorted(ribbons, key=lambda r: (right_rank[r["target"]], r["source"])):
        r["y1"] = in_cursor[r["target"]]
        in_cursor[r["target"]] += r["thickness"]
    return {"scale": scale, "left": left_nodes, "right": right_nodes, "ribbons": ribbons,
            "sizes_a": size_a.tolist(), "sizes_b": size_b.tolist()}


def sankey_svg(flow: ClusterFlow, width: float = 600.0, height: float = 400.0,
               palette=CLUSTER_PALETTE, labels=("Fit A", "Fit B")) -> str:
    lay = sankey_layout(flow, height - 60.0)
    top, node_w = 36.0, 18.0
    x0, x1 = 60.0, width - 60.0 - node_w
    svg = _Svg(width, height, "Sankey diagram")
    svg.add("text", labels[0], x=_fmt(x0 + node_w / 2), y="16", font_size="12", text_anchor="middle")
    svg.add("text", labels[1], x=_fmt(x1 + node_w / 2), y="16", font_size="12", text_anchor="middle")
    for r in lay["ribbons"]:
        ya, yb, t = top + r["y0"], top + r["y1"], r["thickness"]
        xa, xb = x0 + node_w, x1
        xm = 0.5 * (xa + xb)
        d = (f"M {_fmt(xa)} {_fmt(ya)} C {_fmt(xm)} {_fmt(ya)} {_fmt(xm)} {_fmt(yb)} {_fmt(xb)} {_fmt(yb)} "
             f"L {_fmt(xb)} {_fmt(yb + t)} C {_fmt(xm)} {_fmt(yb + t)} {_fmt(xm)} {_fmt(ya + t)} "
             f"{_fmt(xa)} {_fmt(ya + t)} Z")
        svg.add("path", class_="ribbon" + ("" if r["aligned"] else " swing"), d=d,
                fill=cluster_color(r["source"], palette), fill_opacity="0.45",
                data_source=r["source"], data_target=r["target"], data_count=r["count"],
                data_thickness=repr(float(t)), data_y0=repr(float(r["y0"])), data_y1=repr(float(r["y1"])))
        svg.add("text", str(r["count"]), class_="ribbon-label", x=_fmt(xm),
                y=_fmt(0.5 * (ya + yb) + t / 2 + 3), font_size="9", text_anchor="middle",
                data_source=r["source"], data_target=r["target"])
    for side, x, nodes, sizes in (("left", x0, lay["left"], lay["sizes_a"]),
                                  ("right", x1, lay["right"], lay["sizes_b"])):
        for c, (y, h) in nodes.items():
            color = cluster_color(c if side == "left" else max(int(flow.alignment[c]), 0), palette)
            svg.add("rect", class_=f"node {side}", x=_fmt(x), y=_fmt(top + y), width=_fmt(node_w),
                    height=_fmt(h), fill=color, data_cluster=c, data_size=int(sizes[c]),
                    data_height=repr(float(h)))
            tx = x - 4 if side == "left" else x + node_w + 4
            svg.add("text", f"{c + 1} ({int(sizes[c])})", x=_fmt(tx), y=_fmt(top + y + h / 2 + 3),
                    font_size="10", text_anchor="end" if side == "left" else "start")
    return svg.render()


@dataclass
class FigureSpec:
    """A figure request: ``kind`` selects the renderer, ``payload`` its data.

    hinton: a weights matrix; heatmap: ``(dataset, fit)``; sankey: a ClusterFlow.
    """

    kind: str
    payload: object
    width: float | None = None
    height: float | None = None
    palette: tuple[str, ...] = field(default=CLUSTER_PALETTE)
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("hinton", "heatmap", "sankey"):
            raise DomainError(f"unknown figure kind {self.kind!r}")


def render(spec: FigureSpec) -> str:
    if spec.kind == "hinton":
        return hinton_svg(spec.payload, **spec.options)
    if spec.kind == "heatmap":
        ds, fit = spec.payload
        return heatmap_svg(ds, fit, palette=spec.palette, **spec.options)
    kw = {k: v for k, v in (("width", spec.width), ("height", spec.height)) if v is not None}
    return sankey_svg(spec.payload, palette=spec.palette, **kw, **spec.options)


def companion_dict(spec: FigureSpec) -> dict:
    """Machine-readable twin of a figure: the data it draws, in drawing order."""
    out: dict = {"kind": spec.kind, "palette": list(spec.palette)}
    if spec.kind == "hinton":
        out["weights"] = np.atleast_2d(np.asarray(spec.payload, dtype=np.float64)).tolist()
        for key in ("row_labels", "col_labels"):
            if spec.options.get(key) is not None:
                out[key] = [str(v) for v in spec.options[key]]
    elif spec.kind == "heatmap":
        ds, fit = spec.payload
        out["column_labels"] = list(ds.column_labels)
        out["rows"] = [{"id": int(ds.patient_ids[n]), "cluster": int(fit.hard_assignment[n]),
                        "probability": float(fit.assignment_prob[n]), "answers": ds.row_pattern(n)}
                       for n in heatmap_order(fit)]
    else:
        out.update(spec.payload.to_dict())
    return out


def companion_json(spec: FigureSpec) -> str:
    return json.dumps(companion_dict(spec), indent=1)
