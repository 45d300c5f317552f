import csv
import json

import numpy as np
import pytest

from roq import campaign
from roq.cli import main
from roq.multiclass import McssInstance
from roq.paths import TscPath
from roq.tandem import TscInstance, sojourn_bound


def write(path, obj):
    path.write_text(json.dumps(obj))
    return path


@pytest.fixture
def tsc_file(tmp_path):
    return write(tmp_path / "tsc.json", {"J": 2, "n": 200, "lambda": 1.0, "mu": [1 / 0.9, 1 / 0.9],
                                         "gamma_a": 230, "gamma_s": [230, 230]})


def test_bound_tsc(tmp_path, tsc_file):
    out = tmp_path / "o"
    assert main(["bound", "--model", "tsc", "--instance", str(tsc_file), "--out", str(out)]) == 0
    rep = json.loads((out / "bound.json").read_text())
    assert set(rep) >= {"formula_id", "inputs", "value", "preconditions_checked"}
    inst = TscInstance.from_json(tsc_file)
    assert rep["value"] == sojourn_bound(inst).value


def test_bound_mcss_both_values(tmp_path):
    f = write(tmp_path / "m.json", {"J": 1, "lambda": [1.0], "mu": [2.0], "P": [[0]],
                                    "gamma_a": [230], "gamma_s": [230]})
    out = tmp_path / "o"
    assert main(["bound", "--model", "mcss", "--instance", str(f), "--out", str(out)]) == 0
    rep = json.loads((out / "bound.json").read_text())
    assert set(rep["values"]) == {"busy_period", "workload"}


def test_bound_small_gamma_exit_code(tmp_path, capsys):
    f = write(tmp_path / "t.json", {"J": 1, "n": 5, "lambda": 1.0, "mu": [2.0], "gamma_a": 1, "gamma_s": [1]})
    assert main(["bound", "--model", "tsc", "--instance", str(f), "--out", str(tmp_path)]) == 2
    assert "gamma-large" in capsys.readouterr().err


def test_missing_instance_is_runtime_error(tmp_path):
    assert main(["bound", "--model", "tsc", "--instance", str(tmp_path / "nope.json")]) == 1


def test_validate_tsc_clean_and_deterministic(tmp_path):
    args = ["validate", "--model", "tsc", "--replications", "6", "--jobs", "300", "--seed", "5"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "validate.json").read_text()
    assert a == (tmp_path / "b" / "validate.json").read_text()
    assert json.loads(a)["violations"] == 0


def test_validate_tamper_is_caught(tmp_path):
    out = tmp_path / "t"
    code = main(["validate", "--model", "tsc", "--replications", "2", "--jobs", "100", "--tamper",
                 "--out", str(out)])
    assert code == 3
    dumped = sorted((out / "violations").iterdir())
    assert len(dumped) == 2
    path = TscPath.from_csv(dumped[0])
    assert path.n == 100


def test_validate_mcss(tmp_path):
    out = tmp_path / "m"
    assert main(["validate", "--model", "mcss", "--replications", "3", "--horizon", "500",
                 "--policy", "priority:1,0", "--out", str(out)]) == 0
    rep = json.loads((out / "validate.json").read_text())
    assert rep["busy_violations"] == rep["peak_violations"] == rep["lemma_violations"] == 0
    assert rep["lemma_times_checked"] == 60


def test_config_file(tmp_path):
    cfg = write(tmp_path / "c.json", {"model": "tsc", "replications": 2, "jobs": 50,
                                      "arrivals": {"kind": "deterministic", "value": 1.0},
                                      "services": [{"kind": "uniform", "lo": 0.1, "hi": 1.5}] * 2})
    out = tmp_path / "o"
    assert main(["validate", "--config", str(cfg), "--out", str(out)]) == 0
    assert json.loads((out / "validate.json").read_text())["replications"] == 2


def test_adversary(tmp_path):
    f = write(tmp_path / "a.json", {"J": 2, "n": 10, "lambda": 1.0, "mu": [1.25, 1.25],
                                    "gamma_a": 230, "gamma_s": [230, 230]})
    out = tmp_path / "o"
    assert main(["adversary", "--model", "tsc", "--instance", str(f), "--out", str(out)]) == 0
    rep = json.loads((out / "adversary.json").read_text())
    assert rep["agreement"] and rep["degenerate"]["agree"] and rep["enumeration"]["mismatches"] == 0
    assert rep["lil"]["max_value"] < rep["lil"]["closed_form"]
    assert len(rep["lil"]["argmax_chain"]) == 2


def test_curve_tsc(tmp_path):
    out = tmp_path / "c"
    assert main(["curve", "--model", "tsc", "--rho-grid", "0.5,0.7,0.9", "--replications", "3",
                 "--jobs", "300", "--out", str(out)]) == 0
    with open(out / "curve.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    bounds = [float(r["bound"]) for r in rows]
    assert bounds == sorted(bounds) and len(set(bounds)) == 3
    assert all(float(r["ratio"]) >= 1 for r in rows)
    svg = (out / "curve.svg").read_text()
    assert svg.startswith("<svg") and svg.count("<polyline") == 2


def test_curve_mcss(tmp_path):
    out = tmp_path / "c"
    assert main(["curve", "--model", "mcss", "--rho-grid", "0.4,0.6", "--replications", "2",
                 "--horizon", "1000", "--out", str(out)]) == 0


def test_curve_grid_errors(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["curve", "--model", "tsc", "--rho-grid", "", "--out", str(tmp_path)])
    assert exc.value.code == 2
    assert main(["curve", "--model", "tsc", "--rho-grid", "0.5,1.0", "--out", str(tmp_path)]) == 1


def test_campaign_record_contents():
    inst = TscInstance(J=2, n=400, lam=1.0, mu=(1.25, 1.25))
    summary, recs = campaign.validate_tsc(inst, 3, seed=0)
    assert summary["violations"] == 0
    for r in recs:
        assert r.w_n <= r.envelope_value < r.closed_form
        assert r.path is None


def test_lemma_times_are_admissible():
    inst = McssInstance(J=2, lam=(0.3, 0.0), mu=(1.0, 1.0), P=((0, 1), (0, 0)))
    ts = campaign.lemma_times(inst, 100.0, seed=1, rep=0)
    assert ts.size == 20 and np.all(ts >= 100.0) and np.all(ts <= 400.0)


def test_threads_flag_does_not_change_results(tmp_path):
    args = ["validate", "--model", "tsc", "--replications", "4", "--jobs", "200", "--seed", "3"]
    assert main(args + ["--threads", "1", "--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--threads", "2", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "validate.json").read_text() == (tmp_path / "b" / "validate.json").read_text()
