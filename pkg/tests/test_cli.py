import io
import json
from pathlib import Path

import numpy as np
import pytest

from hoinfer.cli import ingest, load_config, main, parse_config
from hoinfer.exceptions import ValidationError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def test_exact_enum_defaults_to_the_sixteen_observation_fixture(tmp_path):
    code, out, _ = run("exact-enum", "--out", str(tmp_path))
    assert code == 0
    res = json.loads((tmp_path / "exact.json").read_text())
    assert res["support"] == list(range(-6, 7))
    assert res["support_size"] == 13
    assert sum(int(c) for c in res["counts"]) == res["reference_set_size"]
    assert "reference set size" in out
    rows = (tmp_path / "exact.tsv").read_text().splitlines()
    assert rows[0] == "t\tcount\tpmf" and len(rows) == 14


def test_exact_enum_conditioning_on_one_component(tmp_path):
    code, _, _ = run("exact-enum", "--config", str(CONFIGS / "sixteen.json"), "--out", str(tmp_path))
    assert code == 0
    assert json.loads((tmp_path / "exact.json").read_text())["reference_set_size"] == 8008


def test_efficiency_default_design(tmp_path):
    code, _, _ = run("efficiency", "--out", str(tmp_path))
    assert code == 0
    res = json.loads((tmp_path / "efficiency.json").read_text())
    assert res["psi"]["ratio"] == pytest.approx(0.75, abs=1e-6)


def test_urine_intervals(tmp_path):
    code, out, _ = run("ci", "--config", str(CONFIGS / "urine.json"), "--out", str(tmp_path))
    assert code == 0
    ci = json.loads((tmp_path / "ci.json").read_text())["intervals"]
    assert np.round(ci["wald"], 4).tolist() == [-0.0636, -0.0004]
    assert np.round(ci["wald_a"], 4).tolist() == [-0.0568, 0.0016]
    assert np.round(ci["r"], 4).tolist() == [-0.0668, -0.0025]
    assert np.round(ci["rstar"], 4).tolist() == [-0.0587, 0.0005]
    assert "rstar" in out


def test_outputs_are_byte_identical_across_runs(tmp_path):
    for k in (1, 2):
        assert run("ci", "--config", str(CONFIGS / "urine.json"), "--out", str(tmp_path / f"o{k}"))[0] == 0
        assert run("exact-enum", "--out", str(tmp_path / f"e{k}"))[0] == 0
    for sub in ("o", "e"):
        a, b = tmp_path / f"{sub}1", tmp_path / f"{sub}2"
        names = sorted(p.name for p in a.iterdir())
        assert names == sorted(p.name for p in b.iterdir())
        for nm in names:
            assert (a / nm).read_bytes() == (b / nm).read_bytes()


def test_pvalue_needs_psi0(tmp_path):
    code, _, err = run("pvalue", "--config", str(CONFIGS / "urine.json"), "--out", str(tmp_path / "o"))
    assert code == 2 and "psi0" in err
    assert not (tmp_path / "o").exists()
    code, _, _ = run("pvalue", "--config", str(CONFIGS / "urine.json"), "--psi0", "0", "--out", str(tmp_path / "o"))
    assert code == 0
    pv = json.loads((tmp_path / "o" / "pvalue.json").read_text())["pvalues"]
    assert round(pv["wald"]["two_sided"], 3) == 0.047
    assert round(pv["wald_a"]["two_sided"], 3) == 0.064


@pytest.mark.parametrize("argv, needle", [
    (["ci", "--pivot", "lr"], "invalid choice"),
    (["ci", "--level", "1.5"], "level"),
    (["contour"], "nlreg"),
    (["sample"], "regscale"),
    (["ci", "--variant", "frw"], "variant"),
    (["fit", "--seed", "-1"], "seed"),
    (["frobnicate"], "invalid choice"),
])
def test_usage_errors_exit_2_without_output(tmp_path, argv, needle):
    out = tmp_path / "o"
    code, _, err = run(*argv, "--config", str(CONFIGS / "urine.json"), "--out", str(out))
    assert code == 2
    assert needle in err
    assert not out.exists()


def test_missing_config_for_model_commands(tmp_path):
    code, _, err = run("ci", "--out", str(tmp_path / "o"))
    assert code == 2 and "config" in err


def test_schema_violations_name_the_offending_key(tmp_path):
    cfg = write_json(tmp_path / "c.json", {"model_class": "logistic", "dataset": "urine", "interest": "urea", "colour": 1})
    code, _, err = run("fit", "--config", cfg, "--out", str(tmp_path / "o"))
    assert code == 2 and "colour" in err
    cfg = write_json(tmp_path / "c.json", {"model_class": "logistic", "dataset": "urine", "pivots": ["lr"]})
    code, _, err = run("fit", "--config", cfg, "--out", str(tmp_path / "o"))
    assert code == 2 and "pivots/0" in err
    assert not (tmp_path / "o").exists()


def test_malformed_json_reports_line(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{\n  "model_class": "logistic",\n  "dataset": urine\n}\n')
    with pytest.raises(ValidationError, match="line 3"):
        load_config(p)


def test_config_round_trip():
    cfg = load_config(CONFIGS / "c3.json")
    again = parse_config(json.loads(cfg.dumps()), cfg.base_dir)
    assert again.to_dict() == cfg.to_dict()
    assert again.dumps() == cfg.dumps()
    assert cfg.data_file == CONFIGS / "C3.csv"


def test_config_requires_one_data_source():
    with pytest.raises(ValidationError, match="exactly one"):
        parse_config({"model_class": "logistic"})
    with pytest.raises(ValidationError, match="start"):
        parse_config({"model_class": "nlreg", "dataset": "urine", "nlreg": {"builtin": "logistic4-errinvar"}})


def test_missing_data_file_exits_2(tmp_path):
    cfg = write_json(tmp_path / "c.json", {"model_class": "regscale", "data_path": "nope.csv", "response": "y"})
    code, _, err = run("fit", "--config", cfg, "--out", str(tmp_path / "o"))
    assert code == 2 and "nope.csv" in err


def test_separated_data_exit_3(tmp_path):
    x = np.arange(10.0)
    rows = "".join(f"{int(v > 4.5)},{v},{np.sin(v):.4f}\n" for v in x)
    (tmp_path / "d.csv").write_text("y,x,w\n" + rows)
    cfg = write_json(tmp_path / "c.json", {"model_class": "logistic", "data_path": "d.csv", "response": "y",
                                            "interest": "x", "covariates": ["w"]})
    code, _, err = run("ci", "--config", cfg, "--out", str(tmp_path / "o"))
    assert code == 3 and "NumericalError" in err
    assert not (tmp_path / "o").exists()


def test_ingest_reports_line_numbers(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,2\n3\n")
    with pytest.raises(ValidationError, match="line 3: expected 2 fields"):
        ingest(p)
    p.write_text("a,b\n1,2\n3,x\n")
    with pytest.raises(ValidationError, match="line 3: non-numeric value 'x' in column 'b'"):
        ingest(p)
    p.write_text("a,a\n1,2\n")
    with pytest.raises(ValidationError, match="duplicate"):
        ingest(p)
    p.write_text("")
    with pytest.raises(ValidationError, match="empty"):
        ingest(p)


def test_ingest_missing_values_are_dropped_on_selection(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,c\n1,2,NA\n3,,5\n6,7,8\n")
    table = ingest(p)
    assert table.missing_report() == {"a": 0, "b": 1, "c": 1}
    sel = table.select(["a", "c"])
    assert sel["a"].tolist() == [3.0, 6.0] and table.dropped == [0]
    with pytest.raises(ValidationError, match="unknown column"):
        table.select(["d"])


def test_regscale_fit_profile_and_sample(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(12)
    y = 1 + 0.5 * x + np.log(rng.weibull(1.0, 12))
    (tmp_path / "d.csv").write_text("y,x\n" + "".join(f"{a:.17g},{b:.17g}\n" for a, b in zip(y, x)))
    cfg = write_json(tmp_path / "c.json", {
        "model_class": "regscale", "data_path": "d.csv", "response": "y", "covariates": ["x"], "interest": "x",
        "regscale": {"law": "logweibull"}, "seed": 4,
        "sampler": {"iterations": 3000, "burn_in": 200, "thin": 2, "pilot_iterations": 300}})
    for cmd in ("fit", "profile", "sample"):
        code, _, err = run(cmd, "--config", cfg, "--out", str(tmp_path / cmd))
        assert code == 0, err
    assert (tmp_path / "profile" / "profile_x.tsv").read_text().startswith("psi\tlp\tla\tr\tq\trstar\twald\tflags")
    chain = (tmp_path / "sample" / "chain.tsv").read_text().splitlines()
    assert chain[0].split("\t") == ["intercept", "x", "log_sigma"]
    again = tmp_path / "again"
    assert run("sample", "--config", cfg, "--out", str(again))[0] == 0
    assert (again / "chain.tsv").read_bytes() == (tmp_path / "sample" / "chain.tsv").read_bytes()
