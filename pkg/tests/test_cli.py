import json
import subprocess
import sys

import pytest

from aronsson_lab import cli




def test_presets_listing(capsys):
    assert cli.main(["presets"]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    names = [line.split()[0] for line in out]
    assert names == ["hormander-gauge", "grushin-gauge", "counterexample-infinity", "grushin-regularity", "hormander-feedback"]


def test_presets_json(capsys):
    assert cli.main(["presets", "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert len(data) == 5 and all({"name", "description"} <= set(d) for d in data)


def test_unknown_flag_exits_1():
    with pytest.raises(SystemExit) as exc:
        cli.main(["presets", "--bogus"])
    assert exc.value.code == 1


def test_unknown_config_key(tmp_path, capsys):
    cfg = cli.preset_config("grushin-gauge")
    cfg["params"]["trails"] = 10
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(cfg))
    assert cli.main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 1
    assert "params.trails" in capsys.readouterr().err


@pytest.mark.parametrize(
    "mutate,key",
    [
        (lambda c: c.update(colour="red"), "colour"),
        (lambda c: c["system"].update(q=1), "system.q"),
        (lambda c: c["candidate"].update(p=2), "candidate.p"),
        (lambda c: c.update(experiment="fly"), "experiment"),
        (lambda c: c.update(hamiltonian={"mode": "cubic"}), "hamiltonian.mode"),
    ],
)
def test_config_validation_names_key(mutate, key):
    cfg = cli.preset_config("grushin-gauge")
    mutate(cfg)
    with pytest.raises(cli.ConfigError, match=key.replace(".", r"\.")):
        cli.parse_config(cfg)


def test_resolved_config_materializes_defaults(tmp_path):
    assert cli.main(["run", "--preset", "hormander-gauge", "--out", str(tmp_path)]) == 0
    resolved = json.loads((tmp_path / "resolved-config.json").read_text())
    p = resolved["params"]
    assert p["grid_shape"] == [41, 41, 41] and p["grid_controls"] == 64
    assert p["trials"] == 200 and p["seed"] == 0
    assert resolved["hamiltonian"] == {"mode": "degree1", "scale": 1.0}
    # the resolved config reruns to the same report
    assert cli.main(["run", "--config", str(tmp_path / "resolved-config.json"), "--out", str(tmp_path / "again")]) == 0
    assert (tmp_path / "report.json").read_bytes() == (tmp_path / "again" / "report.json").read_bytes()


def test_reports_are_deterministic(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["run", "--preset", "grushin-gauge", "--out", str(tmp_path / d)]) == 0
    a = (tmp_path / "a" / "report.json").read_bytes()
    assert a == (tmp_path / "b" / "report.json").read_bytes()
    report = json.loads(a)
    assert all(e["anchor"] for e in report["experiments"])
    assert "started" in json.loads((tmp_path / "a" / "run-info.json").read_text())
    for name in ("residuals.csv", "certify_branches.csv", "amf_trials.csv", "representation.csv", "excond_witnesses.csv"):
        assert (tmp_path / "a" / name).exists()


def test_counterexample_preset(tmp_path):
    assert cli.main(["run", "--preset", "counterexample-infinity", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    br = report["experiments"][0]["summary"]["branches"]
    assert [b["classification"] for b in br.values()] == ["nonincreasing", "nondecreasing", "constant"]
    assert report["passed"]


def test_failed_check_exits_2(tmp_path):
    cfg = {
        "experiment": "amf-test",
        "system": {"kind": "isotropic", "n": 2},
        "candidate": {"kind": "quadratic", "Q": [[1, 0], [0, 1]]},
        "params": {"box": [[0.5, 1.5], [0.5, 1.5]]},
    }
    path = tmp_path / "q.json"
    path.write_text(json.dumps(cfg))
    assert cli.main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert not report["passed"] and report["experiments"][0]["summary"]["refuting"]
    # declaring the expected refutation makes the same run pass
    cfg["params"]["expect_amf_pass"] = False
    path.write_text(json.dumps(cfg))
    assert cli.main(["run", "--config", str(path), "--out", str(tmp_path / "o2")]) == 0


def test_hormander_feedback_preset(tmp_path):
    assert cli.main(["run", "--preset", "hormander-feedback", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    sim = rep["experiments"][0]["summary"]
    assert sim["event"] == "target_hit" and abs(sim["t_end"] - 1.0) <= 1e-3
    assert (tmp_path / "trajectory.csv").exists() and (tmp_path / "bound_compare.csv").exists()


def test_grushin_regularity_preset(tmp_path):
    assert cli.main(["run", "--preset", "grushin-regularity", "--out", str(tmp_path), "--threads", "1"]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    names = [e["name"] for e in rep["experiments"]]
    assert names == ["mintime-grid", "modulus", "bound-compare"]
    assert (tmp_path / "grid.csv").exists() and (tmp_path / "grid.json").exists()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "aronsson_lab", "presets", "--json"], capture_output=True, text=True)
    assert res.returncode == 0 and len(json.loads(res.stdout)) == 5
