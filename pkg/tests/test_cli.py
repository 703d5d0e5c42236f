import json
import subprocess
import sys

import mpmath
import pytest

from twistbad.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


def test_quality_golden(capsys, tmp_path):
    code, out = run(capsys, "quality", "--Q", "100", "--kinds", "homogeneous,dual", "--out", str(tmp_path))
    assert code == 0
    hom = out["certificates"]["homogeneous"]
    assert hom["argmin_q"] == [1]
    assert abs(mpmath.mpf(hom["gamma"]) - (3 - mpmath.sqrt(5)) / 2) < mpmath.mpf(10) ** -45
    assert (tmp_path / "quality.json").exists()
    assert (tmp_path / "quality.csv").read_text().startswith("Q,argmin_q,gamma,kind")


def test_quality_rational_theta_gives_zero(capsys):
    code, out = run(capsys, "quality", "--theta", "3/7", "--Q", "10")
    assert code == 0
    assert mpmath.mpf(out["certificates"]["homogeneous"]["gamma"]) == 0
    assert out["certificates"]["homogeneous"]["argmin_q"] == [7]


@pytest.mark.parametrize(
    "argv",
    [
        ("quality", "--theta", "sqrt2;sqrt3", "--k", "0.5,0.6"),
        ("quality", "--kinds", "twisted"),
        ("quality", "--kinds", "sideways"),
        ("game", "--beta", "1.5"),
        ("game", "--bob", "sleepy"),
        ("lambda", "--r-max", "0"),
        ("pipeline", "--theta", "sqrt2;sqrt3", "--k", "0.1,0.9", "--curve", "parabola"),
    ],
)
def test_validation_exit_code(capsys, argv):
    code, out = run(capsys, *argv)
    assert code == 2
    assert out["exit_code"] == 2


def test_non_numeric_flag_rejected():
    with pytest.raises(SystemExit) as exc:
        main(["quality", "--Q", "abc"])
    assert exc.value.code == 2


def test_game_artifacts(capsys, tmp_path):
    code, out = run(capsys, "game", "--out", str(tmp_path), "--quiet")
    assert code == 0 and out is None
    lines = (tmp_path / "transcript.jsonl").read_text().splitlines()
    assert len(lines) >= 6
    witness = json.loads((tmp_path / "witness.json").read_text())
    res = witness["result"]
    assert res["completed"] and res["post_check"]["positive"]
    assert witness["game_config"]["R_game"].startswith("8")


def test_parabola_witness_on_curve(capsys):
    code, out = run(capsys, "game", "--theta", "sqrt2;sqrt3", "--k", "0.9,0.1", "--curve", "parabola")
    assert code == 0
    x, y = (mpmath.mpf(v) for v in out["result"]["witness_point"])
    assert abs(y - x * x) < mpmath.mpf(10) ** -40


def test_pipeline_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["pipeline", "--out", str(a), "--quiet"]) == 0
    assert main(["pipeline", "--out", str(b), "--quiet"]) == 0
    capsys.readouterr()
    for name in ("pipeline.json", "pipeline.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rec = json.loads((a / "pipeline.json").read_text())
    assert rec["status"] == 0
    assert rec["stages"]["transference"]["passed"]
    assert rec["stages"]["negative_control"]["failed_as_predicted"]


def test_seed_changes_random_bob(capsys):
    _, a = run(capsys, "game", "--bob", "seeded_random", "--seed", "1")
    _, b = run(capsys, "game", "--bob", "seeded_random", "--seed", "1")
    _, c = run(capsys, "game", "--bob", "seeded_random", "--seed", "2")
    assert a == b
    assert a["result"]["witness_y"] != c["result"]["witness_y"]


def test_empty_admissible_range_is_a_warning(capsys):
    code, out = run(capsys, "transfer", "--r-max", "1")
    assert code == 5
    assert out["transference"]["Q_admissible"] == 0
    assert out["transference"]["warnings"]


def test_lambda_and_transfer(capsys, tmp_path):
    code, out = run(capsys, "lambda", "--out", str(tmp_path))
    assert code == 0
    assert [e["u"] for e in out["lambda"]["entries"]] == [[8], [34], [233], [987], [6765], [28657]]
    assert (tmp_path / "lambda.csv").read_text().splitlines()[0] == "psi,r,u"
    code, out = run(capsys, "transfer", "--x", "sqrt2-1")
    assert code == 0
    assert out["transference"]["passed"]
    assert out["transference"]["Q_checked"] == out["transference"]["Q_admissible"] > 1000


def test_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"quality": {"theta": "sqrt2", "Q": 50}}))
    code, out = run(capsys, "quality", "--config", str(cfg))
    assert code == 0 and out["config"]["theta"] == "sqrt2" and out["config"]["Q"] == 50
    code, out = run(capsys, "quality", "--config", str(cfg), "--Q", "7")
    assert out["config"]["Q"] == 7
    flat = tmp_path / "flat.json"
    flat.write_text(json.dumps({"theta": "sqrt3", "Q": 9}))
    _, out = run(capsys, "quality", "--config", str(flat))
    assert out["config"]["theta"] == "sqrt3"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"quality": {"colour": "red"}}))
    code, _ = run(capsys, "quality", "--config", str(bad))
    assert code == 2


def test_precision_doubling_agrees(capsys):
    _, a = run(capsys, "transfer")
    _, b = run(capsys, "transfer", "--precision", "100")
    ta, tb = a["transference"], b["transference"]
    assert ta["Q_admissible"] == tb["Q_admissible"]
    assert abs(mpmath.mpf(ta["c_x"]) - mpmath.mpf(tb["c_x"])) < mpmath.mpf(10) ** -45
    assert tb["precision_digits"] == 100


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "twistbad", "quality", "--Q", "20"],
        capture_output=True,
        text=True,
        cwd=tmp_path,
        check=False,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["certificates"]["homogeneous"]["argmin_q"] == [1]
    assert "exit 0" in proc.stderr
