import json

import pytest

from regradius.cli import ConfigError, main, parse_config, run_experiment


def minimal_config(**overrides):
    doc = {
        "mapping": {"kind": "smooth-builtin", "builtin": "identity"},
        "base_point": {"x": [0.0], "y": [0.0]},
        "norms": {"domain_p": 2, "range_p": 2},
        "schedule": {"geometric": {"levels": 5}, "samples_per_scale": 80,
                     "refine_rounds": 5},
        "tasks": ["rg"],
        "seed": 3,
        "K": 4,
    }
    doc.update(overrides)
    return doc


def test_parse_minimal_config():
    cfg = parse_config(json.dumps(minimal_config()))
    assert cfg.seed == 3
    assert [t.name for t in cfg.tasks] == ["rg"]


def test_parse_rejects_nondecreasing_radii():
    doc = minimal_config(schedule={"radii": [0.1, 0.5, 1.0]})
    with pytest.raises(ConfigError) as err:
        parse_config(doc)
    assert any("decreasing" in e for e in err.value.errors)


def test_parse_rejects_interpolate_without_r():
    doc = minimal_config(tasks=[{"name": "interpolate"}])
    with pytest.raises(ConfigError) as err:
        parse_config(doc)
    assert any("requires field 'r'" in e for e in err.value.errors)


def test_parse_rejects_unknown_task_and_collects_errors():
    doc = minimal_config(tasks=["rg", "frobnicate"], seed=-1)
    with pytest.raises(ConfigError) as err:
        parse_config(doc)
    msgs = "\n".join(err.value.errors)
    assert "frobnicate" in msgs
    assert "seed" in msgs


def test_parse_rejects_matrix_dimension_mismatch():
    doc = minimal_config(mapping={"kind": "linear", "matrix": [[1.0, 0.0]]})
    with pytest.raises(ConfigError) as err:
        parse_config(doc)
    assert any("matrix" in e for e in err.value.errors)


def test_run_experiment_identity(tmp_path):
    cfg = parse_config(minimal_config(tasks=["rg", "bounds",
                                             {"name": "strong_check", "expect": True}]))
    code = run_experiment(cfg, out_dir=str(tmp_path))
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    rg_entry = next(r for r in report["results"] if r["task"] == "rg")
    assert rg_entry["estimate"]["value"] == pytest.approx(1.0, rel=0.05)
    lines = (tmp_path / "traces.csv").read_text().strip().splitlines()
    assert lines[0] == "task,delta,value"
    assert len(lines) > 5


def test_run_experiment_verdict_failure(tmp_path):
    # expecting strong regularity from the two-branch mapping must fail
    doc = minimal_config(mapping={"kind": "smooth-builtin", "builtin": "abs-branches"},
                         tasks=[{"name": "strong_check", "expect": True}])
    code = run_experiment(parse_config(doc), out_dir=str(tmp_path))
    assert code == 2


def test_main_validate_and_parse_error(tmp_path, capsys):
    good = tmp_path / "good.json"
    good.write_text(json.dumps(minimal_config()))
    assert main(["validate", "--config", str(good)]) == 0
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", "--config", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "config error" in err
    missing_r = tmp_path / "missing.json"
    missing_r.write_text(json.dumps(minimal_config(tasks=[{"name": "interpolate"}])))
    assert main(["validate", "--config", str(missing_r)]) == 1


def test_main_missing_file():
    assert main(["run", "--config", "/nonexistent/cfg.json"]) == 4
