import json
from pathlib import Path

import numpy as np
import pytest

from nlgrad import cli
from nlgrad.witness import ExperimentTable

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def _denoise(**over):
    doc = {
        "command": "denoise",
        "seed": 3,
        "grid": {"dims": [10]},
        "weight": {"kind": "constant", "c": 1.0},
        "p": 1,
        "fidelity": {"lambda": 2.0, "q": 2, "data": {"kind": "random"}},
        "uniqueness_starts": 3,
    }
    doc.update(over)
    return doc


def test_denoise_writes_report_and_fields(tmp_path):
    code, rep = cli.run(_write(tmp_path, _denoise()), tmp_path / "out", deterministic=True)
    assert code == 0 and rep["pass"]
    out = tmp_path / "out"
    saved = json.loads((out / "report.json").read_text())
    for key in ("command", "claim", "config", "seed", "assertions", "pass", "residuals", "results", "timestamp"):
        assert key in saved
    assert saved["config"]["fidelity"]["lambda"] == 2.0
    assert all((out / f).exists() for f in saved["files"])


def test_unknown_weight_kind_names_key(tmp_path, capsys):
    doc = _denoise(weight={"kind": "cosine"})
    assert cli.main(["--config", str(_write(tmp_path, doc)), "--out", str(tmp_path / "o")]) == 2
    assert "weight.kind" in capsys.readouterr().err
    assert not (tmp_path / "o" / "report.json").exists()


def test_unknown_key_is_rejected(tmp_path, capsys):
    doc = _denoise(solver={"max_iter": 5})
    assert cli.main(["--config", str(_write(tmp_path, doc))]) == 2
    assert "solver.max_iter" in capsys.readouterr().err


def test_q_below_p_is_config_error(tmp_path):
    doc = _denoise(p=2, fidelity={"lambda": 1.0, "q": 1.5, "data": {"kind": "random"}}, uniqueness_starts=0)
    assert cli.run(_write(tmp_path, doc), tmp_path / "o")[0] == 2


def test_non_convergence_exit_and_report(tmp_path):
    doc = _denoise(solver={"max_iters": 20, "tol": 1e-15}, uniqueness_starts=0,
                   weight={"kind": "gaussian", "bandwidth": 0.3})
    code, rep = cli.run(_write(tmp_path, doc), tmp_path / "o")
    assert code == 3
    assert rep["numerical_failure"] and not rep["pass"]
    assert (tmp_path / "o" / "report.json").exists()


def test_failed_assertion_exit_code(tmp_path):
    doc = {"command": "diagnose-weight", "grid": {"dims": [40]}, "weight": {"kind": "constant"},
           "K": [[0.2], [0.8]], "expect": {"lower_bounded": False}}
    code, rep = cli.run(_write(tmp_path, doc), tmp_path / "o")
    assert code == 1 and not rep["pass"]


def test_seed_override_changes_data(tmp_path):
    path = _write(tmp_path, _denoise(uniqueness_starts=0))
    _, a = cli.run(path, tmp_path / "a", seed=1, deterministic=True)
    _, b = cli.run(path, tmp_path / "b", seed=2, deterministic=True)
    assert a["seed"] == 1 and b["seed"] == 2
    assert a["results"] != b["results"]


def test_deterministic_reruns_identical(tmp_path):
    path = _write(tmp_path, _denoise())
    reports = []
    for name in ("a", "b"):
        cli.run(path, tmp_path / name, deterministic=True)
        rep = json.loads((tmp_path / name / "report.json").read_text())
        rep.pop("timestamp")
        reports.append(json.dumps(rep, sort_keys=True))
    assert reports[0] == reports[1]


def test_threads_env(monkeypatch):
    monkeypatch.setenv("NLGRAD_THREADS", "4")
    assert cli.workers_from_env(False) == 4
    assert cli.workers_from_env(True) == 1


def test_emit_plotdata_columns(tmp_path):
    tab = ExperimentTable(("L", "measure", "seminorm_pow", "ratio"), [(1.0, 1.0, 2.0, 2.0), (2.0, 2.0, 4.5, 2.25)], {})
    lines = cli.emit_plotdata(tab, tmp_path / "g.dat").read_text().splitlines()
    assert lines[0] == "# measure seminorm_pow"
    np.testing.assert_allclose([float(v) for v in lines[2].split()], [2.0, 4.5])
    tab = ExperimentTable(("eps", "grid_n", "lp_norm_pow"), [(0.5, 10, 0.25), (0.25, 20, 0.0625)], {})
    lines = cli.emit_plotdata(tab, tmp_path / "l.dat").read_text().splitlines()
    assert lines[0] == "# log_eps log_value"
    np.testing.assert_allclose([float(v) for v in lines[1].split()], [np.log(0.5), np.log(0.25)])


def test_batch_sandwich(tmp_path):
    code, rep = cli.run(CONFIGS / "sandwich_batch.json", tmp_path / "o", deterministic=True)
    assert code == 0 and rep["pass"]


@pytest.mark.parametrize("name", ["dual_check", "adjoint_audit", "diagnose_theta", "testfn_gaussian", "growth_scan_affine", "lp_scaling"])
def test_shipped_configs(tmp_path, name):
    code, rep = cli.run(CONFIGS / f"{name}.json", tmp_path / "o", deterministic=True)
    assert code == 0 and rep["pass"], rep["assertions"]
