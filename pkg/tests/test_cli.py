import csv
import json

import pytest

from acdisc.cli import EXIT_INTERNAL, EXIT_OK, EXIT_PRECONDITION, EXIT_USAGE, main


@pytest.fixture
def scene(tmp_path):
    def make(**extra):
        data = {"structure": {"n": 1, "repr": "standard"},
                "fields": {"u": {"repr": "norm_sq"}}}
        data.update(extra)
        path = tmp_path / "scene.json"
        path.write_text(json.dumps(data))
        return str(path)
    return make


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_lambda0(scene, tmp_path, capsys):
    code, out, _ = run(capsys, "lambda0", "--scene", scene(), "--out", str(tmp_path / "o"))
    assert code == EXIT_OK
    assert "lambda0=4.000000" in out
    report = json.loads((tmp_path / "o" / "lambda0.json").read_text())
    assert report["headline"]["value"] == pytest.approx(4.0, abs=1e-9)
    assert len(report["manifest_hash"]) == 64


def test_attach(scene, tmp_path, capsys):
    code, out, _ = run(capsys, "attach", "--scene", scene(), "--anchor", "0,0", "--dir", "1,0",
                       "--out", str(tmp_path), "--grid", "32")
    assert code == EXIT_OK and "residual=" in out
    rows = list(csv.DictReader(open(tmp_path / "attach.csv")))
    assert rows and set(rows[0]) == {"zeta_re", "zeta_im", "x1", "y1", "residual"}
    head = json.loads((tmp_path / "attach_disc.json").read_text())
    assert head["grid_N"] == 32 and head["band_residual"] == 0


@pytest.mark.parametrize("argv", [["bogus"], ["lambda0", "--grid", "x"], []])
def test_usage_errors(argv, capsys):
    code, _, err = run(capsys, *argv)
    assert code == EXIT_USAGE
    assert "usage:" in err


def test_missing_scene(capsys):
    code, _, err = run(capsys, "levi")
    assert code == EXIT_USAGE and "--scene" in err


def test_precondition_exit(scene, tmp_path, capsys):
    code, out, err = run(capsys, "kobayashi", "--scene", scene(), "--out", str(tmp_path))
    assert code == EXIT_PRECONDITION
    assert "status=precondition" in out and "u(p)" in err


def test_internal_error(scene, tmp_path, capsys):
    path = scene(structure={"n": 1, "repr": "mystery"})
    code, out, _ = run(capsys, "validate", "--scene", path, "--out", str(tmp_path))
    assert code == EXIT_INTERNAL and "status=error" in out


def test_kobayashi_and_check(scene, tmp_path, capsys):
    path = scene(fields={"u": {"repr": "norm_sq", "offset": -1.0}},
                 kobayashi={"p": [0, 0], "v": [1, 0], "upper": True})
    code, out, _ = run(capsys, "kobayashi", "--scene", path, "--out", str(tmp_path),
                       "--grid", "32")
    assert code == EXIT_OK
    report = json.loads((tmp_path / "kobayashi.json").read_text())
    res = report["result"]
    assert res["lower"] <= 1 <= res["upper"] * 1.05
    assert res["constants"]["c_prime"] > 0
    code, out, _ = run(capsys, "--check", str(tmp_path / "kobayashi.json"),
                       "--out", str(tmp_path))
    assert code == EXIT_OK and "check=pass" in out
    report["headline"]["value"] *= 2
    (tmp_path / "kobayashi.json").write_text(json.dumps(report))
    code, out, _ = run(capsys, "--check", str(tmp_path / "kobayashi.json"),
                       "--out", str(tmp_path))
    assert code == EXIT_INTERNAL and "check=fail" in out


@pytest.mark.parametrize("command, extra", [
    ("validate", {}),
    ("levi", {"point": [0.2, 0.1]}),
    ("psh-build", {"psh": {"p": [0, 0], "r": 0.5, "A": 2.0}}),
    ("chart", {"chart": {"p": [0, 0], "epsilon": 0.05}}),
    ("solve-disc", {"disc": {"p": [0.1, 0], "v": [0.5, 0]}}),
])
def test_commands_succeed(command, extra, scene, tmp_path, capsys):
    code, out, _ = run(capsys, command, "--scene", scene(**extra), "--out", str(tmp_path),
                       "--grid", "16")
    assert code == EXIT_OK, out
    assert out.startswith(f"command={command} ") and out.strip().endswith("status=ok")
    assert (tmp_path / f"{command}.json").exists()


def test_study_deterministic(scene, tmp_path, capsys):
    path = scene(experiment={"amplitudes": [0.0, 0.01], "anchors": [[0.0]],
                             "directions": [[0.5]], "grid_N": 32})
    texts = []
    for name in ("a", "b"):
        code, out, _ = run(capsys, "study", "--scene", path, "--out", str(tmp_path / name),
                           "--seed", "4")
        assert code == EXIT_OK
        texts.append((tmp_path / name / "study.csv").read_bytes())
    assert texts[0] == texts[1]
