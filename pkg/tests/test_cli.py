import csv
import json
import math
import os

import numpy as np
import pytest

from shemoments.cli import RunConfig, main, parse_targets
from shemoments.errors import ConfigError

WHITE = """\
[kernel]
variant = white_noise
[heat]
nu = 1
[measure]
type = dirac
point = 0
[grid]
t_min = 0.001
t_max = 100
n = 21
[fronts]
lip = 1
Lip = 1
beta = 1
numeric_theta_star = false
[moments]
lip = 1
Lip = 1
targets = 1 0 0; 0.5 0 0.5
[simulate]
lam = 0
half_width = 10
n_x = 200
t_max = 1
n_t = 400
n_paths = 60
n_batches = 30
targets = 0.5 0 0; 1 0 0.5
[output]
seed = 5
"""


def _write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_kernel_white_noise_column(tmp_path):
    cfg = _write(tmp_path, WHITE)
    out = tmp_path / "o"
    assert main(["kernel", "--config", cfg, "--out", str(out)]) == 0
    rows = _read(out / "kernel.csv")
    assert rows[0] == ["t [time]", "k [f]", "h1 [f*time]"]
    t = np.array([float(r[0]) for r in rows[1:]])
    k = np.array([float(r[1]) for r in rows[1:]])
    np.testing.assert_allclose(k, (2 * math.pi * t) ** -0.5, rtol=1e-9)
    assert (out / "kernel.svg").read_text().startswith("<svg")


def test_kernel_constant_column(tmp_path):
    cfg = _write(tmp_path, "[kernel]\nvariant = constant\n[heat]\nnu = 2\n")
    out = tmp_path / "o"
    assert main(["kernel", "--config", cfg, "--out", str(out)]) == 0
    assert all(float(r[1]) == 1.0 for r in _read(out / "kernel.csv")[1:])


def test_kernel_riesz_slope(tmp_path):
    cfg = _write(tmp_path, "[kernel]\nvariant = riesz\nalpha = 1.5\n[heat]\nnu = 1\ndim = 3\n")
    out = tmp_path / "o"
    assert main(["kernel", "--config", cfg, "--out", str(out)]) == 0
    rows = _read(out / "kernel.csv")[1:]
    lt = np.log([float(r[0]) for r in rows])
    lk = np.log([float(r[1]) for r in rows])
    assert np.polyfit(lt, lk, 1)[0] == pytest.approx(-0.75, abs=1e-3)


def test_phase_riesz_verdict(tmp_path):
    cfg = _write(tmp_path, "[kernel]\nvariant = riesz\nalpha = 1\n[heat]\nnu = 1\ndim = 3\n"
                           "[phase]\nlip = 1\n")
    out = tmp_path / "o"
    assert main(["phase", "--config", cfg, "--out", str(out)]) == 0
    assert "verdict = FULLY_INTERMITTENT_ALL_LAMBDA" in (out / "phase.txt").read_text()


def test_fronts_white_noise_lower_index(tmp_path):
    cfg = _write(tmp_path, WHITE)
    out = tmp_path / "o"
    assert main(["fronts", "--config", cfg, "--out", str(out)]) == 0
    rows = _read(out / "fronts.csv")
    col = rows[0].index("lower_index_lemma [length/time]")
    assert f"{float(rows[1][col]):.6g}" == "0.0847335"


def test_json_format(tmp_path):
    cfg = _write(tmp_path, WHITE)
    out = tmp_path / "o"
    assert main(["moments", "--config", cfg, "--out", str(out), "--format", "json"]) == 0
    data = json.loads((out / "moments.json").read_text())
    assert len(data) == 2
    assert float(data[0]["lower [u^2]"]) <= float(data[0]["upper [u^2]"])


def test_validate_lambda_zero_passes(tmp_path):
    cfg = _write(tmp_path, WHITE)
    out = tmp_path / "o"
    assert main(["validate", "--config", cfg, "--out", str(out)]) == 0
    rows = _read(out / "validate.csv")
    assert len(rows) == 3 and all(r[-1] == "True" for r in rows[1:])


def test_byte_identical_reruns(tmp_path):
    cfg = _write(tmp_path, WHITE.replace("lam = 0", "lam = 1"))
    for cmd in ("simulate", "moments", "kernel"):
        a, b = tmp_path / f"{cmd}_a", tmp_path / f"{cmd}_b"
        assert main([cmd, "--config", cfg, "--out", str(a)]) == 0
        assert main([cmd, "--config", cfg, "--out", str(b)]) == 0
        for name in sorted(os.listdir(a)):
            assert (a / name).read_bytes() == (b / name).read_bytes()


def test_seed_flag_changes_simulation(tmp_path):
    cfg = _write(tmp_path, WHITE.replace("lam = 0", "lam = 1"))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", cfg, "--out", str(a), "--seed", "1"]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(b), "--seed", "2"]) == 0
    assert (a / "simulate.csv").read_bytes() != (b / "simulate.csv").read_bytes()


def test_unknown_key_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, "[kernel]\nvariant = riesz\nalpah = 1\n[heat]\nnu = 1\n")
    assert main(["kernel", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "alpah" in capsys.readouterr().err


def test_unknown_section_and_missing_file(tmp_path):
    cfg = _write(tmp_path, "[kernal]\nvariant = riesz\n")
    assert main(["kernel", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert main(["kernel", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path / "o")]) == 2


def test_numeric_failure_exit_code(tmp_path):
    # explicit scheme instability is a configuration error; an indefinite grid covariance is numeric
    text = WHITE.replace("variant = white_noise", "variant = box\na = 1").replace("lam = 0", "lam = 1")
    text = text.replace("n_x = 200", "n_x = 2048").replace("n_t = 400", "n_t = 20000")
    cfg = _write(tmp_path, text)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


def test_stability_violation_exit_code(tmp_path):
    cfg = _write(tmp_path, WHITE.replace("n_t = 400", "n_t = 10"))
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_parse_targets():
    assert parse_targets("1 0 0.5; 2 -1 1", 1) == [(1.0, 0.0, 0.5), (2.0, -1.0, 1.0)]
    t, x, xp = parse_targets("1 | 0 0 | 1 0", 2)[0]
    assert t == 1.0 and list(x) == [0.0, 0.0] and list(xp) == [1.0, 0.0]
    with pytest.raises(ConfigError):
        parse_targets("1 0", 1)


def test_run_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        RunConfig("[heat]\nnu = 1\nmu = 2\n")
