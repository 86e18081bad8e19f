import xml.etree.ElementTree as ET

import numpy as np
import pytest

from bernmix.analysis import sankey_flows
from bernmix.em import FitConfig, fit
from bernmix.errors import BernmixError, DomainError
from bernmix.report import (
    CLUSTER_PALETTE,
    FigureSpec,
    companion_dict,
    heatmap_order,
    heatmap_svg,
    hinton_svg,
    probability_gray,
    render,
    sankey_layout,
    sankey_svg,
)
from bernmix.simulate import sample_dataset

from conftest import WHEEZE_PROFILES, WHEEZE_WEIGHTS

NS = "{http://www.w3.org/2000/svg}"


def parse(svg):
    return ET.fromstring(svg)


def squares(root):
    return [e for e in root.iter(NS + "rect") if e.get("class") == "hinton-square"]


def test_hinton_area_proportional_to_weight():
    w = np.array([[0.4, 0.2, 0.1], [0.05, 0.0, 0.25]])
    root = parse(hinton_svg(w, cell_size=30))
    rects = squares(root)
    assert len(rects) == 5
    area = {(int(r.get("data-row")), int(r.get("data-col"))): float(r.get("width")) * float(r.get("height"))
            for r in rects}
    ref = area[(0, 0)] / 0.4
    for (i, j), a in area.items():
        assert a / ref == pytest.approx(w[i, j], rel=0.005)
    assert area[(0, 0)] == pytest.approx(900, rel=1e-6)


def test_hinton_squares_centred():
    root = parse(hinton_svg([[0.25]], cell_size=20))
    (r,) = squares(root)
    x, side = float(r.get("x")), float(r.get("width"))
    assert side == pytest.approx(20)
    root = parse(hinton_svg([[0.25, 1.0]], cell_size=20))
    small = [r for r in squares(root) if r.get("data-col") == "0"][0]
    assert float(small.get("width")) == pytest.approx(10)
    assert float(small.get("x")) + 5 == pytest.approx(4 + 10)


def test_hinton_rejects_bad_input():
    with pytest.raises(DomainError):
        hinton_svg([[1.5]])
    with pytest.raises(BernmixError):
        hinton_svg(np.zeros((0, 0)))


@pytest.mark.parametrize("p,color", [(0.4, "#ffffff"), (0.2, "#ffffff"), (1.0, "#000000"), (0.7, "#808080")])
def test_probability_gray(p, color):
    assert probability_gray(p) == color


@pytest.fixture(scope="module")
def fitted():
    s = sample_dataset(4, 6, 300, seed=6, lambda_override=WHEEZE_PROFILES, r_override=WHEEZE_WEIGHTS)
    return s.data, fit(s.data, FitConfig(k=4, seed=1, restarts=4, map_smoothing=(1.5, 1.5)))


def test_heatmap_rows_grouped_and_sorted(fitted):
    ds, f = fitted
    root = parse(heatmap_svg(ds, f))
    rows = [g for g in root.iter(NS + "g") if g.get("class") == "heatmap-row"]
    assert len(rows) == ds.n
    keys = [(int(g.get("data-cluster")), -float(g.get("data-probability"))) for g in rows]
    assert keys == sorted(keys)
    assert sorted(int(g.get("data-patient")) for g in rows) == ds.patient_ids.tolist()
    first = rows[0]
    swatch = [r for r in first.iter(NS + "rect") if r.get("class") == "swatch"][0]
    assert swatch.get("fill") == probability_gray(float(first.get("data-probability")))
    band = [r for r in first.iter(NS + "rect") if r.get("class") == "cluster-band"][0]
    assert band.get("fill") == CLUSTER_PALETTE[int(first.get("data-cluster"))]
    cells = [r for r in first.iter(NS + "rect") if r.get("class", "").startswith("cell")]
    assert len(cells) == ds.m


def test_heatmap_marks_missing(fitted):
    ds, f = fitted
    root = parse(heatmap_svg(ds, f))
    missing = [r for r in root.iter(NS + "rect") if r.get("class") == "cell missing"]
    assert len(missing) == int(ds.missing.sum())


def test_heatmap_order_ties_by_id(fitted):
    _, f = fitted
    order = heatmap_order(f)
    for a, b in zip(order, order[1:]):
        ka = (f.hard_assignment[a], -f.assignment_prob[a], f.patient_ids[a])
        kb = (f.hard_assignment[b], -f.assignment_prob[b], f.patient_ids[b])
        assert ka <= kb


@pytest.fixture(scope="module")
def flow(fitted):
    ds, f = fitted
    g = fit(ds, FitConfig(k=3, seed=2, restarts=4, map_smoothing=(1.5, 1.5)))
    return sankey_flows(f, g)


def test_sankey_ribbons_stack_to_nodes(flow):
    lay = sankey_layout(flow, height=300)
    for side, key, sizes in (("left", "source", lay["sizes_a"]), ("right", "target", lay["sizes_b"])):
        for c, (y, h) in lay[side].items():
            assert h == pytest.approx(sizes[c] * lay["scale"])
            mine = sorted((r for r in lay["ribbons"] if r[key] == c), key=lambda r: r["y0" if side == "left" else "y1"])
            assert sum(r["thickness"] for r in mine) == pytest.approx(h)
            cursor = y
            for r in mine:
                assert r["y0" if side == "left" else "y1"] == pytest.approx(cursor)
                cursor += r["thickness"]


def test_sankey_svg_labels_and_swings(flow):
    root = parse(sankey_svg(flow))
    ribbons = [p for p in root.iter(NS + "path") if "ribbon" in p.get("class")]
    assert sum(int(p.get("data-count")) for p in ribbons) == int(flow.flow.sum())
    swing_count = sum(int(p.get("data-count")) for p in ribbons if "swing" in p.get("class"))
    assert swing_count == len(flow.swings)
    labels = [t for t in root.iter(NS + "text") if t.get("class") == "ribbon-label"]
    assert sorted(int(t.text) for t in labels) == sorted(int(p.get("data-count")) for p in ribbons)
    for p in ribbons:
        assert float(p.get("data-thickness")) > 0


def test_render_dispatch_and_companion(fitted, flow):
    ds, f = fitted
    for spec in (FigureSpec("hinton", f.params.lam), FigureSpec("heatmap", (ds, f)), FigureSpec("sankey", flow)):
        parse(render(spec))
        assert companion_dict(spec)["kind"] == spec.kind
    with pytest.raises(DomainError):
        FigureSpec("pie", None)
