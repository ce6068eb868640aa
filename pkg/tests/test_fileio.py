from __future__ import annotations

import json
import re
from pathlib import Path

import pytest

from berkgreen.errors import InputError
from berkgreen.fileio import (
    dumps,
    load_measure,
    load_points,
    load_region,
    load_space,
    measure_from_json,
    measure_to_json,
    parse_point,
    point_to_json,
    points_from_json,
    points_to_json,
    region_from_json,
    region_to_json,
    space_from_json,
    space_to_json,
)
from berkgreen.metric_space import SpacePoint

DATA = Path(__file__).resolve().parents[1] / "sample_data"
LOCATED = re.compile(r"^.+:\d+:\d+: ")


def _write(tmp_path, text: str, name: str = "in.json") -> str:
    p = tmp_path / name
    p.write_text(text)
    return str(p)


@pytest.mark.parametrize("name", ["segment.json", "circle.json", "circle_tree.json"])
def test_space_round_trip(name):
    sp = load_space(str(DATA / name))
    doc = space_to_json(sp)
    again = space_from_json(json.loads(dumps(doc)))
    assert space_to_json(again) == doc
    assert set(again.full.edges) == set(sp.full.edges)


def test_measure_region_points_round_trip():
    circ = load_space(str(DATA / "circle.json"))
    haar = load_measure(str(DATA / "haar.json"), circ)
    assert haar.is_probability()
    assert measure_to_json(measure_from_json(measure_to_json(haar), space=circ)) == measure_to_json(haar)
    tree = load_space(str(DATA / "circle_tree.json"))
    mixed = load_measure(str(DATA / "mixed_measure.json"), tree)
    assert mixed.total_mass == pytest.approx(1.0)
    seg = load_space(str(DATA / "segment.json"))
    for name in ("region_tail.json", "region_endpoint.json"):
        r = load_region(str(DATA / name), seg)
        assert region_from_json(region_to_json(r), space=seg) == r
    pts = load_points(str(DATA / "points_circle.json"), circ)
    assert len(pts) == 4
    assert points_from_json(points_to_json(pts), space=circ) == pts


def test_point_forms():
    assert parse_point({"vertex": "c0"}) == SpacePoint.at("c0")
    assert parse_point({"edge": "a0", "offset": 0.25}) == SpacePoint.on("a0", 0.25)
    assert parse_point("a0:0.25") == SpacePoint.on("a0", 0.25)
    p = SpacePoint.on("e1", 1.5)
    assert parse_point(point_to_json(p)) == p
    with pytest.raises(InputError):
        parse_point({"edge": "a0"})


def test_malformed_json_reports_position(tmp_path):
    path = _write(tmp_path, '{\n  "vertices": [\n    {"id": "a", "type": "II"},\n')
    with pytest.raises(InputError, match=r"in\.json:4:\d+: malformed JSON"):
        load_space(path)


def test_loop_edge_reports_position(tmp_path):
    text = (
        '{\n  "vertices": [{"id": "a", "type": "II"}, {"id": "b", "type": "II"}],\n'
        '  "edges": [\n    {"id": "f", "u": "a", "v": "b", "length": 1.0},\n'
        '    {"id": "e", "u": "a", "v": "a", "length": 1.0}\n  ]\n}\n'
    )
    with pytest.raises(InputError, match=r"in\.json:5:6: .*loop") as exc:
        load_space(_write(tmp_path, text))
    assert LOCATED.match(str(exc.value))


def test_disconnected_names_unreachable_vertex(tmp_path):
    text = json.dumps(
        {
            "vertices": [{"id": "a", "type": "II"}, {"id": "b", "type": "II"}, {"id": "c", "type": "II"}],
            "edges": [{"id": "e", "u": "a", "v": "b", "length": 1.0}],
        },
        indent=2,
    )
    with pytest.raises(InputError, match=r"in\.json:\d+:\d+: .*not connected.*'c'"):
        load_space(_write(tmp_path, text))


@pytest.mark.parametrize(
    "doc, pattern",
    [
        ({"vertices": [{"id": "a", "type": "II"}], "edges": [], "extra": 1}, "unknown field 'extra'"),
        ({"vertices": [{"id": "a", "type": "II", "colour": "red"}], "edges": []}, "unknown field 'colour'"),
        (
            {
                "vertices": [{"id": "a", "type": "II"}, {"id": "b", "type": "II"}],
                "edges": [{"id": "e", "u": "a", "v": "b", "length": -1}],
            },
            "non-positive length",
        ),
        (
            {
                "vertices": [{"id": "a", "type": "II"}, {"id": "b", "type": "II"}],
                "edges": [{"id": "e", "u": "a", "v": "zz", "length": 1}],
            },
            "zz",
        ),
    ],
)
def test_invalid_space_documents(tmp_path, doc, pattern):
    with pytest.raises(InputError, match=pattern):
        load_space(_write(tmp_path, json.dumps(doc, indent=2)))


def test_measure_points_checked_against_space(tmp_path):
    seg = load_space(str(DATA / "segment.json"))
    bad = {"atoms": [{"point": {"edge": "e0", "offset": 3.0}, "weight": 1.0}], "densities": []}
    with pytest.raises(InputError):
        load_measure(_write(tmp_path, json.dumps(bad)), seg)
    bad = {"atoms": [{"point": {"vertex": "nowhere"}, "weight": 1.0}]}
    with pytest.raises(InputError):
        load_measure(_write(tmp_path, json.dumps(bad)), seg)


def test_missing_file():
    with pytest.raises(InputError, match="cannot read"):
        load_space("/nonexistent/space.json")
