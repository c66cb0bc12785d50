import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from minnorm import fileio
from minnorm.cli import main

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
GOLDEN = Path(__file__).with_name("golden")


def write_yaml(path, doc):
    path.write_text(yaml.safe_dump(doc))
    return path


def assert_matches_golden(produced, golden):
    a, b = fileio.read_table(produced, allow_missing=True), fileio.read_table(golden, allow_missing=True)
    assert list(a) == list(b)
    for col in a:
        # in-sample errors past the threshold sit at round-off level
        np.testing.assert_allclose(a[col], b[col], rtol=1e-9, atol=1e-10, equal_nan=True, err_msg=col)


@pytest.fixture
def toy_expand(tmp_path):
    fileio.write_csv(tmp_path / "toy.csv", ["x", "y"], [[1.0, 2.0, 3.0, 4.0], [0.0, 1.0, 0.0, 1.0]])
    doc = {
        "input": "toy.csv", "outcome": "y",
        "columns": [{"name": "x", "kind": "continuous"}],
        "plan": {"bins_per_continuous": 2, "interactions": False},
        "seeds": {"jitter": 0},
    }
    return write_yaml(tmp_path / "expand.yaml", doc)


def test_toy_expansion(toy_expand, tmp_path):
    assert main(["expand-features", "--config", str(toy_expand), "--out", str(tmp_path / "o")]) == 0
    t = fileio.read_table(tmp_path / "o" / "expanded_train.csv")
    assert list(t)[0] == "intercept" and len(t) == 4
    X = fileio.table_matrix(t, list(t)[:3])
    np.testing.assert_array_equal(X, [[1, 1, 0], [1, 1, 0], [1, 0, 1], [1, 0, 1]])
    prov = fileio.read_rows(tmp_path / "o" / "provenance.csv")[1]
    assert [r[1] for r in prov] == ["intercept", "bin", "bin"]


def test_expansion_rerun_is_byte_identical(toy_expand, tmp_path):
    main(["expand-features", "--config", str(toy_expand), "--out", str(tmp_path / "a")])
    main(["expand-features", "--config", str(toy_expand), "--out", str(tmp_path / "b")])
    for name in ("expanded_train.csv", "provenance.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_expansion_unknown_column(tmp_path, toy_expand, capsys):
    doc = yaml.safe_load(toy_expand.read_text())
    doc["columns"].append({"name": "ghost", "kind": "dummy"})
    cfg = write_yaml(tmp_path / "bad.yaml", doc)
    assert main(["expand-features", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "ghost" in capsys.readouterr().err


def test_shipped_expansion_with_eval(tmp_path):
    doc = yaml.safe_load((CONFIGS / "expand_features.yaml").read_text())
    doc["input"] = str((CONFIGS / doc["input"]).resolve())
    doc["eval_input"] = doc["input"]
    cfg = write_yaml(tmp_path / "e.yaml", doc)
    assert main(["expand-features", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    tr = fileio.read_table(tmp_path / "expanded_train.csv")
    ev = fileio.read_table(tmp_path / "expanded_eval.csv")
    assert list(tr) == list(ev)
    assert np.array_equal(tr["intercept"], ev["intercept"])
    assert not np.array_equal(tr[list(tr)[1]], ev[list(ev)[1]])  # independent jitter draws


def test_ols_curve_golden(tmp_path):
    assert main(["ols-curve", "--config", str(CONFIGS / "ols_curve.yaml"), "--out", str(tmp_path), "--no-chart"]) == 0
    for name in ("ols_curve_m1.csv", "ols_curve_m10.csv"):
        assert_matches_golden(tmp_path / name, GOLDEN / name)
    assert not list(tmp_path.glob("*.svg"))


def test_sc_curve_golden(tmp_path):
    assert main(["sc-curve", "--config", str(CONFIGS / "sc_curve.yaml"), "--out", str(tmp_path)]) == 0
    assert_matches_golden(tmp_path / "sc_curve.csv", GOLDEN / "sc_curve.csv")
    assert (tmp_path / "sc_curve.svg").read_text().startswith("<?xml")


def test_ols_subset_size_beyond_eval(tmp_path, capsys):
    doc = yaml.safe_load((CONFIGS / "ols_curve.yaml").read_text())
    doc["evaluation"]["m"] = [201]
    doc["train"] = str((CONFIGS / doc["train"]).resolve())
    doc["eval"] = str((CONFIGS / doc["eval"]).resolve())
    cfg = write_yaml(tmp_path / "o.yaml", doc)
    assert main(["ols-curve", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "exceeds" in capsys.readouterr().err


def test_missing_input_names_path(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "o.yaml", {"train": "nowhere.csv", "eval": "e.csv",
                                            "seeds": {"ordering": 0, "eval_draws": 0}})
    assert main(["ols-curve", "--config", str(cfg), "--out", str(tmp_path)]) == 3
    assert "nowhere.csv" in capsys.readouterr().err
    assert main(["verify", "--config", str(tmp_path / "absent.yaml")]) == 3


def test_sc_grid_beyond_pool(tmp_path, capsys):
    doc = yaml.safe_load((CONFIGS / "sc_curve.yaml").read_text())
    doc["panel"]["path"] = str((CONFIGS / doc["panel"]["path"]).resolve())
    doc["grid"] = [1, 13]
    cfg = write_yaml(tmp_path / "s.yaml", doc)
    assert main(["sc-curve", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "13" in capsys.readouterr().err


def test_sc_without_post_periods(tmp_path):
    doc = yaml.safe_load((CONFIGS / "sc_curve.yaml").read_text())
    doc["panel"].update(path=str((CONFIGS / doc["panel"]["path"]).resolve()), T=3, S=0)
    doc["grid"] = [1, 2]
    cfg = write_yaml(tmp_path / "s.yaml", doc)
    with pytest.warns(UserWarning):
        assert main(["sc-curve", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = fileio.read_rows(tmp_path / "sc_curve.csv")[1]
    assert [r[2] for r in rows] == ["", ""]


def test_unknown_key_exit_code(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "v.yaml", {"seeds": {"suites": 0}, "colour": 1})
    assert main(["verify", "--config", str(cfg)]) == 1
    assert "colour: unknown key" in capsys.readouterr().err


def test_threads_must_be_positive(capsys):
    assert main(["verify", "--threads", "0"]) == 1


def test_verify_json(tmp_path):
    doc = {"counts": {"prop1": 5, "prop2": 5, "prop3": 5, "prop4": 5, "qp": 3, "tiebreak": 2},
           "mc_draws": 0, "seeds": {"suites": 2}}
    cfg = write_yaml(tmp_path / "v.yaml", doc)
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "verify_report.json").read_text())
    assert rep["passed"] is True and rep["suites"]


def test_verify_rank_deficient_exits_numerical(tmp_path):
    doc = yaml.safe_load((CONFIGS / "verify_rank_deficient.yaml").read_text())
    doc["counts"] = {k: 2 for k in doc["counts"]}
    cfg = write_yaml(tmp_path / "v.yaml", doc)
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert json.loads((tmp_path / "verify_report.json").read_text())["passed"] is False
