import csv
import io
import subprocess
import sys

import pytest

from tamedjump.cli import SUMMARY_HEADER, fmt, main
from tamedjump.config import parse_config
from tamedjump.problems import BUILTINS

NOISELESS = """\
lambda = 0
x0 = 1
horizon = 1
drift_u = -x
drift_v = 0*x
diffusion = 0*x
jump = 0*x
"""


def run(*argv):
    buf = io.StringIO()
    code = main(list(argv), out=buf)
    return code, buf.getvalue()


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def noiseless_file(tmp_path):
    path = tmp_path / "noiseless.txt"
    path.write_text(NOISELESS)
    return str(path)


class TestThreshold:
    def test_sts_linear(self):
        code, text = run("threshold", "sts-linear", "--a", "-1", "--b", "2", "--c", "-0.9",
                         "--lambda", "9")
        assert code == 0
        assert "indicator = -6.91" in text
        assert "hypothesis l < 0: pass" in text
        value = float(text.split("threshold = ")[1].split()[0])
        assert value == pytest.approx(0.083444, abs=1e-6)

    def test_sts_linear_unstable_problem(self):
        code, text = run("threshold", "sts-linear", "--a", "1", "--b", "0", "--c", "0",
                         "--lambda", "0")
        assert code == 2
        assert "hypothesis l < 0 failed" in text

    def test_sts_nonlinear_preset_fails_hypothesis(self):
        code, text = run("threshold", "sts-nonlinear", "--preset", "cubic-drift")
        assert code == 2
        assert "hypothesis 2beta-beta_bar > 0 failed" in text
        assert "0.4132231405 (informational)" in text
        assert "threshold = none" in text

    def test_ncts_linear_per_dt(self):
        code, text = run("threshold", "ncts-linear", "--preset", "linear-test", "--dt", "0.05")
        assert code == 0 and "branch A" in text
        code, text = run("threshold", "ncts-linear", "--preset", "linear-test", "--dt", "0.1")
        assert code == 0 and "threshold = none" in text

    def test_ncts_nonlinear(self):
        code, text = run("threshold", "ncts-nonlinear", "--K", "0.1", "--theta", "0.1", "--C",
                         "0.1", "--lambda", "1", "--mu", "1", "--beta", "1", "--beta-bar", "1")
        assert code == 0
        assert "threshold = 0.9" in text

    def test_exact(self):
        code, text = run("threshold", "exact-nonlinear", "--preset", "cubic-drift")
        assert code == 0 and "alpha = -0.02" in text
        code, text = run("threshold", "exact-linear", "--preset", "linear-sec4")
        assert code == 0 and "stable: yes" in text

    @pytest.mark.parametrize("argv", [
        ["threshold", "sts-linear", "--a", "-1"],
        ["threshold", "sts-linear", "--a", "x", "--b", "0", "--c", "0", "--lambda", "0"],
        ["threshold", "ncts-linear", "--preset", "linear-test"],
        ["threshold", "sts-linear", "--preset", "nope"],
        ["threshold", "sts-linear", "--preset", "cubic-drift"],
        ["threshold", "bogus"],
        [],
    ])
    def test_usage_errors(self, argv, capsys):
        with pytest.raises(SystemExit) as info:
            code = main(argv, out=io.StringIO())
            raise SystemExit(code)
        assert info.value.code == 1


def test_amplification_table():
    code, text = run("amplification", "--preset", "linear-test", "--dt", "0.2,0.005")
    assert code == 0 and text.startswith("# l = -6.91\n")
    rows = list(csv.reader(l for l in text.splitlines() if not l.startswith("#")))
    assert rows[0] == ["dt", "R", "rate", "stable"]
    assert float(rows[1][1]) == pytest.approx(2.9304, abs=1e-12) and rows[1][3] == "0"
    assert float(rows[2][1]) == pytest.approx(0.967521, abs=1e-6) and rows[2][3] == "1"


class TestSimulate:
    def test_noiseless_ncts(self, tmp_path, noiseless_file):
        code, _ = run("simulate", "--problem", noiseless_file, "--scheme", "NCTS", "--dt", "0.1",
                      "--steps", "2", "--out", str(tmp_path / "o"))
        assert code == 0
        rows = read_csv(tmp_path / "o" / "trajectory_NCTS_dt0.1_path00000.csv")
        assert rows[0] == ["step", "time", "x1"]
        x1 = 1 - 0.1 / 1.1
        x2 = x1 - 0.1 * x1 / (1 + 0.1 * x1)
        assert [float(r[2]) for r in rows[1:]] == pytest.approx([1.0, x1, x2], abs=1e-15)
        assert x2 == pytest.approx(0.825758, abs=1e-6)

    def test_zero_steps(self, tmp_path):
        code, _ = run("simulate", "--problem", "linear-test", "--dt", "0.01", "--steps", "0",
                      "--out", str(tmp_path))
        assert code == 0
        rows = read_csv(tmp_path / "trajectory_STS_dt0.01_path00000.csv")
        assert rows == [["step", "time", "x1"], ["0", "0", "1"]]

    def test_same_seed_same_bytes(self, tmp_path):
        for d in ("a", "b"):
            assert run("simulate", "--problem", "linear-test", "--dt", "0.01", "--paths", "3",
                       "--seed", "9", "--out", str(tmp_path / d))[0] == 0
        for i in range(3):
            name = f"trajectory_STS_dt0.01_path{i:05d}.csv"
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_missing_file(self, tmp_path):
        code, _ = run("simulate", "--problem", str(tmp_path / "absent.txt"), "--dt", "0.1",
                      "--out", str(tmp_path))
        assert code == 1

    def test_bad_file_reports_line(self, tmp_path, capsys):
        path = tmp_path / "bad.txt"
        path.write_text(NOISELESS + "colour = red\n")
        code, _ = run("simulate", "--problem", str(path), "--dt", "0.1", "--out", str(tmp_path))
        assert code == 1
        assert "line 8" in capsys.readouterr().err


@pytest.mark.parametrize("name", ["linear-test", "cubic-drift", "nonlinear-sec4"])
def test_dump_config_round_trip(name):
    code, text = run("experiment", "--problem", name, "--dump-config")
    assert code == 0
    assert parse_config(text) == BUILTINS[name if name in BUILTINS else "cubic-drift"].config


class TestExperiment:
    def test_smoke(self, tmp_path):
        code, text = run("experiment", "--problem", "linear-test", "--paths", "2", "--steps", "1",
                         "--out", str(tmp_path))
        assert code == 0
        listed = text.split()
        assert len(listed) == 4 * 3 + 4 + 1
        rows = read_csv(tmp_path / "moments_STS_dt0.005.csv")
        assert rows[0] == ["step", "time", "msq", "stderr", "overflowed"]
        assert len(rows) == 3
        assert float(rows[2][3]) > 0 and rows[2][4] == "0"
        for r in rows[1:]:
            assert r[2] == fmt(float(r[2]))
        summary = read_csv(tmp_path / "summary.csv")
        assert summary[0] == SUMMARY_HEADER
        assert len(summary) == 13
        sts = [r for r in summary if r[0] == "STS"]
        assert all(float(r[13]) == pytest.approx(0.0834440285, rel=1e-9) for r in sts)
        svg = (tmp_path / "moments_STS.svg").read_text()
        assert svg.lstrip().startswith("<?xml") and 'version="1.1"' in svg

    def test_problem_file_needs_dt(self, tmp_path, noiseless_file):
        code, _ = run("experiment", "--problem", noiseless_file, "--out", str(tmp_path))
        assert code == 1

    def test_failure_removes_partial_output(self, tmp_path):
        path = tmp_path / "blowup.txt"
        path.write_text("lambda = 0\nx0 = 10\nhorizon = 1\ndrift = -x^3\n"
                        "diffusion = 0*x\njump = 0*x\n")
        out = tmp_path / "o"
        code, _ = run("experiment", "--problem", str(path), "--schemes", "NCTS,EM", "--dt", "0.1",
                      "--paths", "4", "--out", str(out))
        assert code == 1
        assert list(out.iterdir()) == []

    def test_fixed_seed_reproducible(self, tmp_path):
        for d in ("a", "b"):
            run("experiment", "--problem", "cubic-drift", "--schemes", "SSBE", "--dt", "0.04",
                "--paths", "300", "--out", str(tmp_path / d))
        for name in ("moments_SSBE_dt0.04.csv", "moments_SSBE.svg", "summary.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "tamedjump", "threshold", "sts-linear",
                           "--preset", "linear-test"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "threshold = 0.0834440285" in proc.stdout
