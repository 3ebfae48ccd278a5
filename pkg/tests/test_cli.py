import subprocess
import sys

import numpy as np
import pytest

from semitamed.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestValidate:
    def test_example_passes(self, capsys):
        code, out, _ = run(capsys, "validate", "--model", "paper-example", "--samples", "200")
        assert code == 0
        assert out.startswith("config: ")
        assert "seed=0" in out.splitlines()[0]

    def test_broken_fixture_fails(self, capsys):
        code, _, _ = run(capsys, "validate", "--model", "paper-example-broken-g", "--samples", "50")
        assert code == 1

    def test_unknown_model(self, capsys):
        code, _, err = run(capsys, "validate", "--model", "nosuch")
        assert code == 2 and "nosuch" in err

    def test_unknown_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["validate", "--model", "paper-example", "--bogus"])
        assert exc.value.code == 2


class TestSimulate:
    def test_finite_and_reproducible(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["simulate", "--model", "paper-example", "--scheme", "direct-tamed",
                "--steps", "256", "--seed", "42"]
        assert run(capsys, *args, "--out", str(a))[0] == 0
        assert run(capsys, *args, "--out", str(b))[0] == 0
        assert a.read_bytes() == b.read_bytes()
        data = np.genfromtxt(a, delimiter=",", skip_header=1)
        assert data.shape == (257, 7)
        assert np.all(np.isfinite(data[:, :5]))

    def test_dual_scheme(self, capsys, tmp_path):
        out = tmp_path / "d.csv"
        code, _, _ = run(capsys, "simulate", "--model", "paper-example", "--scheme", "dual-tamed",
                         "--steps", "64", "--out", str(out))
        assert code == 0
        assert out.read_text().startswith("n,t,X_1,X_2,X_3,u_1")

    def test_not_power_of_two(self, capsys, tmp_path):
        code, _, err = run(capsys, "simulate", "--model", "paper-example", "--steps", "100",
                           "--out", str(tmp_path / "x.csv"))
        assert code == 2 and "power of two" in err

    def test_unwritable_output(self, capsys, tmp_path):
        code, _, _ = run(capsys, "simulate", "--model", "paper-example", "--steps", "16",
                         "--out", str(tmp_path / "missing" / "x.csv"))
        assert code == 2


class TestConverge:
    ARGS = ["converge", "--model", "paper-example", "--nref", "512", "--nlist", "16,32,64",
            "--workers", "2"]

    def test_runs_and_writes(self, capsys, tmp_path):
        out, svg = tmp_path / "c.csv", tmp_path / "c.svg"
        code, text, _ = run(capsys, *self.ARGS, "--paths", "8", "--out", str(out), "--svg", str(svg))
        assert code == 0
        first = text.splitlines()[0]
        assert "nlist=16,32,64" in first and "workers=2" in first and "backend=" in first
        assert "slope=" in text
        lines = out.read_text().splitlines()
        assert lines[0] == "N,h,error_p,stderr,diverged_fraction" and lines[-1].startswith("# slope=")
        assert svg.read_text().count("<svg") == 1

    def test_single_path(self, capsys, tmp_path):
        out = tmp_path / "c.csv"
        code, text, _ = run(capsys, *self.ARGS, "--paths", "1", "--out", str(out))
        assert code == 0
        rows = out.read_text().splitlines()[1:-1]
        assert all(r.split(",")[3] == "n/a" for r in rows)
        assert "n/a" in text

    def test_non_divisor(self, capsys, tmp_path):
        code, _, err = run(capsys, "converge", "--model", "paper-example", "--nref", "512",
                           "--nlist", "16,48", "--paths", "2", "--out", str(tmp_path / "c.csv"))
        assert code == 2 and "48" in err

    def test_reference_too_coarse(self, capsys, tmp_path):
        code, _, err = run(capsys, "converge", "--model", "paper-example", "--nref", "64",
                           "--nlist", "32", "--paths", "2", "--out", str(tmp_path / "c.csv"))
        assert code == 2 and "at least 4" in err

    def test_identical_output(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run(capsys, *self.ARGS, "--paths", "6", "--seed", "3", "--out", str(a))
        run(capsys, *self.ARGS, "--paths", "6", "--seed", "3", "--out", str(b))
        assert a.read_bytes() == b.read_bytes()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "semitamed", "validate", "--model", "nosuch"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert proc.stdout.startswith("config: ")
