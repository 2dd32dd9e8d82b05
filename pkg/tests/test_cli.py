import json
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from cmrp import presets
from cmrp.cli import main, parse_scenario, run
from cmrp.errors import ConfigurationError

MINIMAL = """
[scenario]
task = premium
seed = 1
preset = example2
"""


def write(tmp_path, text, name="s.ini"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


def test_minimal_example2_scenario_parses():
    sc = parse_scenario(MINIMAL)
    assert sc.task == "premium" and sc.seed == 1
    assert sc.preset.params["b2"] == 3.5
    assert sc.budget["n_perm"] == 199 and sc.budget["times"] == (1.0, 5.0, 10.0)


def test_all_errors_reported_together():
    text = """
    [scenario]
    task = martingale
    preset = example2

    [budget]
    n_pathz = 10
    n_ks = 0

    [preset]
    b2 = 5.0
    """
    with pytest.raises(ConfigurationError) as exc:
        parse_scenario(textwrap.dedent(text))
    msg = str(exc.value)
    assert "seed is mandatory" in msg
    assert "unknown key 'n_pathz'" in msg
    assert "invalid n_ks" in msg
    assert "b2 < b1" in msg


def test_duplicate_key_rejected():
    with pytest.raises(ConfigurationError, match="malformed"):
        parse_scenario("[scenario]\ntask = premium\nseed = 1\nseed = 2\npreset = example2\n")


def test_example1_small_c_rejected():
    with pytest.raises(ConfigurationError, match="c > 2"):
        parse_scenario(MINIMAL.replace("example2", "example1") + "[preset]\nc = 2\n")


def test_unknown_section_and_preset_param():
    with pytest.raises(ConfigurationError) as exc:
        parse_scenario(MINIMAL + "[extra]\na = 1\n[preset]\nbogus = 1\n")
    assert "unknown section [extra]" in str(exc.value)
    assert "unknown parameter 'bogus'" in str(exc.value)


def test_custom_model_with_expression_tilt():
    text = """
    [scenario]
    task = validate
    seed = 3

    [model]
    mixing.family = gamma
    mixing.rate = 4
    mixing.shape = 4
    kernel.family = gamma
    kernel.shape = 1.3
    claims.family = exponential
    claims.rate = 1

    [tilt]
    gamma = ln(1 - 0.1) + 0.1*x
    rho = theta/1.25
    xi = (3.5/4)^4 * exp(0.5*theta)
    q_claims.family = exponential
    q_claims.rate = 0.9
    q_mixing.family = gamma
    q_mixing.rate = 3.5
    q_mixing.shape = 4
    """
    sc = parse_scenario(textwrap.dedent(text))
    ref = presets.example2()
    rows = np.array([[0.5], [1.0], [2.0]])
    assert np.allclose(sc.tilt.xi(rows), ref.tilt.xi(rows))
    assert np.allclose(sc.tilt.gamma(rows[:, 0]), ref.tilt.gamma(rows[:, 0]))
    assert run(sc.__class__(**{**sc.__dict__, "out_dir": __import__("pathlib").Path("/tmp/cmrp-test-validate")})) == 0


def test_n_paths_zero_exit_2(tmp_path):
    cfg = write(tmp_path, MINIMAL.replace("premium", "martingale") + "[budget]\nn_paths = 0\n")
    assert main(["martingale", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_missing_config_and_preset_exit_2(tmp_path):
    assert main(["premium", "--seed", "1", "--out", str(tmp_path)]) == 2


def test_task_conflict_exit_2(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    assert main(["ruin", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_premium_task_writes_closed_form_row(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    out = tmp_path / "out"
    assert main(["premium", "--config", str(cfg), "--out", str(out)]) == 0
    lines = (out / "premium_summary.csv").read_text().splitlines()
    assert lines[0] == "schema_version,quantity,value,error,closed_form"
    p_p = [l for l in lines if ",p_P," in l][0].split(",")
    assert float(p_p[2]) == pytest.approx(4 / (4 * 1.3), rel=1e-8)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["schema_version"] == "1" and summary["exit_code"] == 0


def test_counterexample_premium_exit_0(tmp_path):
    assert main(["premium", "--preset", "example2-cou", "--seed", "1", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["premium"]["mixed"] == "reversed" and summary["premium"]["counterexample"]


MART = """
[scenario]
task = martingale
seed = 11
preset = example2

[budget]
n_paths = 20000
n_ks = 10000
n_perm = 99
times = 1, 5
"""


def test_martingale_passes_and_mutation_fails(tmp_path):
    cfg = write(tmp_path, MART)
    assert main(["martingale", "--config", str(cfg), "--out", str(tmp_path / "a"), "--threads", "4"]) == 0
    bad = write(tmp_path, MART + "[mutation]\nalpha_shift = 0.1\n", "bad.ini")
    assert main(["martingale", "--config", str(bad), "--out", str(tmp_path / "b"), "--threads", "4"]) == 1


def test_byte_identical_csv_across_thread_counts(tmp_path):
    cfg = write(tmp_path, MART)
    main(["martingale", "--config", str(cfg), "--out", str(tmp_path / "t1"), "--threads", "1"])
    main(["martingale", "--config", str(cfg), "--out", str(tmp_path / "t8"), "--threads", "8"])
    assert (tmp_path / "t1" / "checks.csv").read_bytes() == (tmp_path / "t8" / "checks.csv").read_bytes()
    assert (tmp_path / "t1" / "summary.json").read_bytes() == (tmp_path / "t8" / "summary.json").read_bytes()


def test_ruin_task_small(tmp_path):
    text = """
    [scenario]
    task = ruin
    seed = 2
    preset = exp-exp-ruin

    [budget]
    n_paths = 5000

    [ruin]
    u = 0.5, 5
    horizon = 20
    """
    cfg = write(tmp_path, text)
    assert main(["ruin", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
    rows = (tmp_path / "r" / "ruin.csv").read_text().splitlines()
    assert rows[0] == "schema_version,u,psi_hat,stderr,n,ruined,truncated,oracle"
    assert len(rows) == 3


def test_simulate_json_format(tmp_path):
    code = main(["simulate", "--preset", "example3", "--seed", "4", "--format", "json", "--out", str(tmp_path)])
    assert code == 0
    doc = json.loads((tmp_path / "summary.json").read_text())
    assert len(doc["tables"]["paths"]) == 3 * 1000


def test_module_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "cmrp", "validate", "--preset", "example3", "--seed", "1", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0, res.stderr
