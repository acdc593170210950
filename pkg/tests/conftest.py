"""Shared fixtures: a small hand-checkable network with two OD flows.

Eleven segments, eleven directed edges. One OD sends 300 vehicles over a
single four-segment path; the other sends 500 vehicles split evenly over two
five-segment alternatives that share their first two segments. Capacities sit
20% above assigned volume, so diverting one path's flow overloads its
upstream neighbor.
"""

import json
from pathlib import Path

import pytest

from roadrank.network import DatasetBundle, OdFlow, RoadNetwork, SegmentAttrs, TripPath

SEGS = ["v01", "v02", "v03", "v04", "v05", "v06", "v07", "v08", "v09", "v10", "v11"]
LENGTHS = dict(zip(SEGS, [120.0, 100.0, 110.0, 90.0, 150.0, 140.0, 100.0, 130.0, 80.0, 95.0, 105.0]))
LANES = dict(zip(SEGS, [1, 1, 1, 1, 2, 2, 2, 2, 2, 1, 1]))
SPEEDS = dict(zip(SEGS, [50.0, 50.0, 60.0, 50.0, 60.0, 60.0, 50.0, 50.0, 60.0, 50.0, 50.0]))
ASSIGNED = dict(zip(SEGS, [300.0, 300.0, 300.0, 300.0, 250.0, 250.0, 500.0, 500.0, 500.0, 250.0, 250.0]))
EDGES = [
    ["v01", "v02"],
    ["v02", "v03"],
    ["v03", "v04"],
    ["v08", "v09"],
    ["v09", "v05"],
    ["v05", "v06"],
    ["v06", "v07"],
    ["v09", "v10"],
    ["v10", "v11"],
    ["v11", "v07"],
    ["v07", "v08"],
]


def demo_documents():
    network = {
        "segments": [
            {
                "id": s,
                "lane_count": LANES[s],
                "speed_limit": SPEEDS[s],
                "capacity": round(1.2 * ASSIGNED[s], 1),
                "length": LENGTHS[s],
            }
            for s in SEGS
        ],
        "edges": EDGES,
    }
    od = [
        {"id": "od1", "origin": "v01", "destination": "v04", "volume": 300.0},
        {"id": "od2", "origin": "v08", "destination": "v07", "volume": 500.0},
    ]
    paths = [
        {"id": "pA", "od_id": "od1", "segments": ["v01", "v02", "v03", "v04"], "share": 1.0},
        {"id": "pB", "od_id": "od2", "segments": ["v08", "v09", "v05", "v06", "v07"], "share": 0.5},
        {"id": "pC", "od_id": "od2", "segments": ["v08", "v09", "v10", "v11", "v07"], "share": 0.5},
    ]
    return network, od, paths


def write_demo_dataset(directory: Path) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    network, od, paths = demo_documents()
    for name, doc in (("network.json", network), ("od.json", od), ("paths.json", paths)):
        (directory / name).write_text(json.dumps(doc, indent=1), encoding="utf-8")
    return directory


@pytest.fixture(scope="session")
def demo_dir(tmp_path_factory) -> Path:
    return write_demo_dataset(tmp_path_factory.mktemp("demo_data"))


@pytest.fixture(scope="session")
def demo_bundle() -> DatasetBundle:
    attrs = {
        s: SegmentAttrs(LANES[s], SPEEDS[s], round(1.2 * ASSIGNED[s], 1), LENGTHS[s]) for s in SEGS
    }
    net = RoadNetwork(tuple(SEGS), frozenset((a, b) for a, b in EDGES), attrs)
    ods = (OdFlow("od1", "v01", "v04", 300.0), OdFlow("od2", "v08", "v07", 500.0))
    paths = (
        TripPath("pA", "od1", ("v01", "v02", "v03", "v04"), 1.0),
        TripPath("pB", "od2", ("v08", "v09", "v05", "v06", "v07"), 0.5),
        TripPath("pC", "od2", ("v08", "v09", "v10", "v11", "v07"), 0.5),
    )
    return DatasetBundle(net, ods, paths)


@pytest.fixture(scope="session")
def demo_graphs(demo_bundle):
    from roadrank.tripgraph import build_attribute_graphs, build_trip_graph, normalize_kernels

    tg = build_trip_graph(demo_bundle, 2.0)
    kernels = normalize_kernels(tg)
    ags = build_attribute_graphs(demo_bundle, tg)
    return tg, kernels, ags
