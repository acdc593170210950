import json

import pytest

from roadrank.network import (
    DatasetInvariantError,
    DatasetParseError,
    DatasetReferenceError,
    assigned_volumes,
    generate_random_dataset,
    is_strongly_connected,
    load_dataset,
    save_dataset,
    validate_bundle,
)
from conftest import demo_documents, write_demo_dataset


def test_load_demo_dataset(demo_dir):
    bundle = load_dataset(demo_dir)
    assert len(bundle.network.segments) == 11
    assert len(bundle.network.edges) == 11
    assert len(bundle.od_flows) == 2
    assert len(bundle.paths) == 3
    assert validate_bundle(bundle) == []


def test_load_empty_od_and_paths_warns(tmp_path):
    write_demo_dataset(tmp_path)
    (tmp_path / "od.json").write_text("[]", encoding="utf-8")
    (tmp_path / "paths.json").write_text("[]", encoding="utf-8")
    with pytest.warns(UserWarning):
        bundle = load_dataset(tmp_path)
    assert bundle.od_flows == ()
    assert bundle.paths == ()


def test_load_rejects_disconnected_path(tmp_path):
    network, od, paths = demo_documents()
    paths.append({"id": "pX", "od_id": "od1", "segments": ["v01", "v03"], "share": 0.0})
    write_demo_dataset(tmp_path)
    (tmp_path / "paths.json").write_text(json.dumps(paths), encoding="utf-8")
    with pytest.raises(DatasetInvariantError, match="v01 -> v03"):
        load_dataset(tmp_path)


def test_load_rejects_unknown_segment(tmp_path):
    network, od, paths = demo_documents()
    paths[0]["segments"] = ["v01", "v02", "v99", "v04"]
    write_demo_dataset(tmp_path)
    (tmp_path / "paths.json").write_text(json.dumps(paths), encoding="utf-8")
    with pytest.raises(DatasetReferenceError, match="v99"):
        load_dataset(tmp_path)


def test_load_rejects_unknown_keys(tmp_path):
    network, od, paths = demo_documents()
    network["segments"][0]["color"] = "red"
    write_demo_dataset(tmp_path)
    (tmp_path / "network.json").write_text(json.dumps(network), encoding="utf-8")
    with pytest.raises(DatasetParseError, match="color"):
        load_dataset(tmp_path)


def test_load_reports_syntax_error_line(tmp_path):
    write_demo_dataset(tmp_path)
    (tmp_path / "od.json").write_text('[\n{"id": "od1",}\n]', encoding="utf-8")
    with pytest.raises(DatasetParseError, match="line 2"):
        load_dataset(tmp_path)


def test_validate_flags_share_sum(demo_bundle):
    bad = demo_bundle.paths[1]
    paths = (demo_bundle.paths[0], type(bad)(bad.id, bad.od_id, bad.segments, 0.4), demo_bundle.paths[2])
    bundle = type(demo_bundle)(demo_bundle.network, demo_bundle.od_flows, paths)
    violations = validate_bundle(bundle)
    assert any("od2" in v and "shares sum" in v for v in violations)


def test_validate_flags_negative_capacity(demo_bundle):
    attrs = dict(demo_bundle.network.attrs)
    a = attrs["v05"]
    attrs["v05"] = type(a)(a.lane_count, a.speed_limit, -1.0, a.length)
    net = type(demo_bundle.network)(demo_bundle.network.segments, demo_bundle.network.edges, attrs)
    bundle = type(demo_bundle)(net, demo_bundle.od_flows, demo_bundle.paths)
    violations = validate_bundle(bundle)
    assert any("v05" in v and "capacity" in v for v in violations)


def test_assigned_volumes(demo_bundle):
    loads = assigned_volumes(demo_bundle)
    assert loads["v02"] == 300.0
    assert loads["v09"] == 500.0  # carries both halves of the 500-vehicle OD
    assert loads["v10"] == 250.0


def test_generate_scale_and_connectivity():
    bundle = generate_random_dataset(110, 20, 3, seed=7)
    assert len(bundle.network.segments) == 110
    assert len(bundle.od_flows) == 20
    assert is_strongly_connected(bundle.network)
    assert validate_bundle(bundle) == []
    per_od = bundle.paths_by_od()
    assert all(1 <= len(v) <= 3 for v in per_od.values())
    for plist in per_od.values():
        assert abs(sum(p.share for p in plist) - 1.0) <= 1e-9


def test_generate_single_path_share():
    bundle = generate_random_dataset(4, 1, 1, seed=3)
    assert len(bundle.od_flows) == 1
    assert len(bundle.paths) == 1
    assert bundle.paths[0].share == 1.0


def test_generate_deterministic(tmp_path):
    a = generate_random_dataset(30, 5, 3, seed=11)
    b = generate_random_dataset(30, 5, 3, seed=11)
    assert a == b
    save_dataset(a, tmp_path / "one")
    save_dataset(b, tmp_path / "two")
    for name in ("network.json", "od.json", "paths.json"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_generate_seeds_differ():
    assert generate_random_dataset(30, 5, 3, seed=1) != generate_random_dataset(30, 5, 3, seed=2)


def test_generated_ids_zero_padded():
    bundle = generate_random_dataset(110, 2, 2, seed=0)
    assert all(len(s) == len(bundle.network.segments[0]) for s in bundle.network.segments)
    assert sorted(bundle.network.segments) == list(bundle.network.segments)
