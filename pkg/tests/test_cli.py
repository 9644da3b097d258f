import json
import math

import pytest

from greatscore.audit import MockServer
from greatscore.cli import main

THREE_MEAN = 0.33421710328413340  # (sqrt(pi/2) * 0.8 + 0 + 0) / 3, mpmath
THREE = [
    {"id": "a", "label": 0, "probs": [0.9, 0.1]},
    {"id": "b", "label": 0, "probs": [0.3, 0.7]},
    {"id": "c", "label": 0, "probs": [0.5, 0.5]},
]


@pytest.fixture
def three(tmp_path):
    p = tmp_path / "three.jsonl"
    p.write_text("".join(json.dumps(r) + "\n" for r in THREE))
    return p


@pytest.fixture
def affine(tmp_path):
    gen = tmp_path / "gen.json"
    gen.write_text(json.dumps({"classes": [{"A": [[1, 0], [0, 1]], "mu": [1, 0]},
                                           {"A": [[1, 0], [0, 1]], "mu": [-1, 0]}]}))
    model = tmp_path / "model.json"
    model.write_text(json.dumps({"W": [[1, 0.5], [-1, 0.2]], "b": [0, 0.1],
                                 "transform": {"mode": "softmax-T", "t1": 1.0, "t2": 1.0}}))
    return gen, model


def test_plan_prints_n(capsys):
    assert main(["plan", "--epsilon", "0.1", "--delta", "0.05"]) == 0
    assert capsys.readouterr().out.strip() == "n = 32088"


def test_score_three_records(three, capsys):
    assert main(["score", "--predictions", str(three)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["count"] == 3 and out["guarantee"] is None
    assert abs(out["mean"] - THREE_MEAN) <= 2 * math.ulp(THREE_MEAN)
    assert round(out["mean"], 5) == 0.33422


def test_score_writes_manifest(three, tmp_path):
    out = tmp_path / "est.json"
    assert main(["score", "--predictions", str(three), "--out", str(out), "--delta", "0.05"]) == 0
    est = json.loads(out.read_text())
    assert est["guarantee"]["delta"] == 0.05
    manifest = json.loads((tmp_path / "est.json.manifest.json").read_text())
    assert manifest["command"] == "score" and manifest["inputs"] == [str(three)]


def test_score_logits_need_transform(tmp_path, capsys):
    p = tmp_path / "l.jsonl"
    p.write_text(json.dumps({"id": "x", "label": 1, "logits": [0.0, 2.0]}) + "\n")
    assert main(["score", "--predictions", str(p)]) == 2
    assert main(["score", "--predictions", str(p), "--transform", "sigmoid-T", "--t1", "0.5"]) == 0
    assert json.loads(capsys.readouterr().out)["mean"] > 0


def test_score_affine_and_curve(affine, capsys):
    gen, model = affine
    assert main(["score", "--generator", str(gen), "--model", str(model), "--n", "300", "--seed", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["count"] == 300
    assert main(["curve", "--generator", str(gen), "--model", str(model), "--n", "300", "--radii", "0,0.5,1",
                 "--format", "csv"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "radius,certified_fraction" and len(lines) == 4


def test_score_endpoint(affine, capsys):
    gen, _ = affine
    with MockServer(lambda x: [0.8, 0.2] if x[0] > 0 else [0.2, 0.8]) as srv:
        code = main(["score", "--generator", str(gen), "--endpoint", srv.url, "--n", "20", "--labels", "stratified"])
    assert code == 0
    assert json.loads(capsys.readouterr().out)["count"] == 20


def test_endpoint_failure_exit_code(affine):
    gen, _ = affine
    with MockServer(lambda x: [0.8, 0.2], failures=[404] * 50) as srv:
        assert main(["score", "--generator", str(gen), "--endpoint", srv.url, "--n", "5"]) == 3


def run(argv):
    """Exit code whether the parser exits or main returns."""
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code


@pytest.mark.parametrize("argv,code", [
    ([], 1),
    (["frobnicate"], 1),
    (["plan", "--epsilon", "0.1"], 1),
    (["plan", "--epsilon", "0", "--delta", "0.1"], 2),
    (["score"], 1),
    (["score", "--predictions", "/no/such/file.jsonl"], 2),
    (["plan", "--epsilon", "0.1", "--delta", "0.5", "--jobs", "0"], 1),
])
def test_exit_codes(argv, code, capsys):
    assert run(argv) == code
    assert capsys.readouterr().err


def test_bad_records_exit_2(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"id": "x", "label": 0, "probs": [1.5, 0.1]}\n')
    assert main(["score", "--predictions", str(p)]) == 2
    p.write_text("not json\n")
    assert main(["score", "--predictions", str(p)]) == 2


def test_rank_and_calibrate(tmp_path, capsys):
    table = tmp_path / "t.csv"
    table.write_text("name,a,b,c\nm1,1,3,2\nm2,2,2,3\nm3,3,1,1\n")
    assert main(["rank", "--table", str(table), "--format", "csv"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "name,a,b,c"

    bundle = tmp_path / "bundle.jsonl"
    rows = []
    for name, scale in (("weak", 0.5), ("mid", 1.0), ("strong", 2.0)):
        for i in range(4):
            rows.append({"model": name, "id": f"s{i}", "label": i % 2,
                         "logits": [scale * (1 if i % 2 == 0 else -1), 0.0]})
    bundle.write_text("".join(json.dumps(r) + "\n" for r in rows))
    ref = tmp_path / "ref.csv"
    ref.write_text("model,distortion\nweak,0.1\nmid,0.2\nstrong,0.3\n")
    out = tmp_path / "cal.json"
    assert main(["calibrate", "--bundle", str(bundle), "--reference", str(ref), "--step", "0.01",
                 "--out", str(out)]) == 0
    res = json.loads(out.read_text())
    assert res["best_rho"] == 1.0 and len(res["trace"]) == 201


def test_verify_single_suite(capsys):
    assert main(["verify", "--suite", "planner", "--seed", "1"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_audit_command(tmp_path, capsys):
    groups = tmp_path / "groups.json"
    groups.write_text(json.dumps({"groups": [
        {"name": "Old", "samples": [{"id": "o1", "label": 0, "input": [1]}, {"id": "o2", "label": 0, "input": [2]}]},
        {"name": "Young", "samples": [{"id": "y1", "label": 1, "input": [3]}]}]}))
    with MockServer(lambda x: [0.975, 0.025]) as srv:
        assert main(["audit", "--endpoint", srv.url, "--groups", str(groups), "--rate", "500",
                     "--format", "csv", "--cache-dir", str(tmp_path / "cache")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "name,mean,count,epsilon,delta"
    assert lines[1].startswith("Old,1.19064843044972") and lines[2].startswith("Young,0,1")


def test_verify_all_exits_zero(capsys):
    assert main(["verify", "--suite", "all", "--seed", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 7 and all(line.startswith("[PASS]") for line in lines)
