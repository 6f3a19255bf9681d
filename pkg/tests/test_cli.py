import csv
import subprocess
import sys

import numpy as np
import pytest

from integro_spectral import cli, specdata
from integro_spectral.chareq import winding


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _kv(path):
    return dict(line.split(" = ", 1) for line in path.read_text().splitlines())


def test_forward_zero_kernel(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# closed-form check\npreset = zero-kernel\nlambdas = 1\n")
    assert cli.main(["forward", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "phi_0.csv")
    data = np.array(rows[1:], dtype=float)
    err = np.abs(data[:, 1] + 1j * data[:, 2] - np.exp(-1j * data[:, 0]))
    assert err.max() < 1e-8


def test_forward_smooth_file_shapes(tmp_path):
    assert cli.main(["forward", "--preset", "smooth-1", "--out", str(tmp_path)]) == 0
    for name in ("phi_0.csv", "eta_0.csv"):
        assert len(_rows(tmp_path / name)) == 2000 + 2
    assert _rows(tmp_path / "lambdas.csv")[1] == ["0", "1", "0"]


def test_malformed_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("grid_n = 100\ngird_n = 200\n")
    assert cli.main(["forward", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "bad.cfg:2" in capsys.readouterr().err


@pytest.mark.parametrize("text", ["grid_n = 101\n", "grid_n = -4\n", "box = 1 0 0 1\n", "preset = nope\n",
                                  "tol\n"])
def test_config_values_rejected(tmp_path, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    assert cli.main(["eigs", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_eigs_zero_kernel(tmp_path, capsys):
    assert cli.main(["eigs", "--preset", "zero-kernel", "--out", str(tmp_path)]) == 0
    assert len(_rows(tmp_path / "eigenvalues.csv")) == 1
    cert = _kv(tmp_path / "certificate.txt")
    assert cert["outer_winding"] == "0" and cert["multiplicity_sum"] == "0"
    assert "inside the search box only" in capsys.readouterr().out


def test_eigs_smooth_identity_report(tmp_path):
    assert cli.main(["eigs", "--preset", "smooth-1", "--out", str(tmp_path)]) == 0
    res = np.array([r[2] for r in _rows(tmp_path / "identity_report.csv")[1:]], dtype=float)
    assert len(res) == 25 and res.max() < 1e-6
    cert = _kv(tmp_path / "certificate.txt")
    assert cert["outer_winding"] == cert["multiplicity_sum"]
    assert int(cert["multiplicity_sum"]) == len(_rows(tmp_path / "eigenvalues.csv")) - 1


def test_eigs_boundary_zero_exit(tmp_path, monkeypatch, capsys):
    # route the search through a function that vanishes along every boundary
    def flat(p, box, tol):
        winding(lambda z: np.zeros_like(z), box)
    monkeypatch.setattr(cli, "find_eigenvalues", flat)
    assert cli.main(["eigs", "--preset", "smooth-1", "--out", str(tmp_path)]) == 4
    assert "boundary zero" in capsys.readouterr().err


def test_eigs_grid_doubling(tmp_path):
    out = {}
    for n in (2000, 4000):
        d = tmp_path / str(n)
        assert cli.main(["eigs", "--preset", "smooth-1", "--grid-n", str(n), "--box", "-3", "3", "-1", "1",
                         "--out", str(d)]) == 0
        out[n] = float(_kv(d / "certificate.txt")["identity_max_residual"])
    assert 12 < out[2000] / out[4000] < 20


def test_specdata_smooth(tmp_path):
    assert cli.main(["specdata", "--preset", "smooth-1", "--out", str(tmp_path)]) == 0
    sd = specdata.load(tmp_path / "spectral_data.csv")
    assert len(sd) == sum(m for _, m in sd.runs) > 0


def test_invert_init_truth(tmp_path):
    cfg = tmp_path / "inv.cfg"
    cfg.write_text("init = truth\nM = 12\n")
    assert cli.main(["invert", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rep = _kv(tmp_path / "recovery_report.txt")
    assert int(rep["iterations"]) <= 2 and rep["converged"] == "True"
    assert len(_rows(tmp_path / "coefficients.csv")) == 7


def test_invert_not_converged_exit(tmp_path):
    cfg = tmp_path / "inv.cfg"
    cfg.write_text("init = perturbed\nM = 12\nmax_iter = 1\n")
    assert cli.main(["invert", "--config", str(cfg), "--out", str(tmp_path)]) == 6
    assert _kv(tmp_path / "recovery_report.txt")["converged"] == "False"


def test_invert_bad_init(tmp_path):
    cfg = tmp_path / "inv.cfg"
    cfg.write_text("init = truth\nM = 12\ninit_r = 1, 0\n")
    assert cli.main(["invert", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_example2_command(tmp_path, capsys):
    code = cli.main(["example2", "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert "max |lambda - lambda~|" in out
    assert len(_rows(tmp_path / "example2_report.csv")) == 3
    assert code == 0 and "identical data (< 1e-7): PASS" in out


def test_entry_point_runs(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "integro_spectral.cli", "forward", "--preset", "zero-kernel",
                           "--grid-n", "100", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "phi_0.csv").exists()
