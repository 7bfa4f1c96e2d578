import json

import pytest

from riskrec import cli
from riskrec.config import ConfigError, PipelineConfig
from riskrec.report import build_report

FAST = {
    "generator": {"n_customers": 2500, "seed": 5},
    "bootstrap": 5,
    "folds": 3,
    "candidates": [
        {"method": "direct", "label": "OLS/L1"},
        {"method": "two_model", "label": "OLS/L2"},
    ],
    "forward": {"kind": "gbm", "n_rounds": 20, "max_depth": 3},
}


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({**FAST, "out": str(tmp_path / "out")}))
    return path


def run(*args):
    return cli.main([str(a) for a in args])


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("full")
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps({**FAST, "out": str(root / "a")}))
    assert run("run", "--config", cfg) == 0
    assert run("run", "--config", cfg, "--out", root / "b") == 0
    return root


def test_run_writes_every_artifact(full_run):
    names = {p.name for p in (full_run / "a").iterdir()}
    assert {"portfolio.csv", "portfolio.truth.csv", "partition.json", "selection.json",
            "selection.md", "decisions_cl.csv", "decisions_cl_cvar.csv",
            "decisions_cl_cvar_fl.csv", "decisions_predict_only.csv", "evaluation.json",
            "evaluation.md", "report.md", "forward_model.json"} <= names


def test_rerun_is_byte_identical(full_run):
    for path in sorted((full_run / "a").iterdir()):
        assert path.read_bytes() == (full_run / "b" / path.name).read_bytes(), path.name


def test_report_has_tables(full_run):
    text = (full_run / "a" / "report.md").read_text()
    assert text.count("|---") >= 4
    assert "Missing artifacts" not in text


def test_evaluation_contents(full_run):
    ev = json.loads((full_run / "a" / "evaluation.json").read_text())
    assert set(ev["policies"]) == {"cl", "cl-cvar", "cl-cvar-fl", "predict-only"}
    for entry in ev["policies"].values():
        sizes = sum(r["size"] for r in entry["scenarios"].values())
        assert sizes == sum(c["count"] for c in entry["distribution"].values())
    assert set(ev["baselines"]) >= {"always_control", "uniform_random"}


def test_stagewise_happy_path(config_file, tmp_path, capsys):
    out = tmp_path / "out"
    assert run("simulate", "--config", config_file) == 0
    assert run("recommend", "--config", config_file, "--policy", "cl-cvar-fl") == 0
    assert run("evaluate", "--config", config_file, "--policy", "cl-cvar-fl") == 0
    assert (out / "decisions_cl_cvar_fl.csv").exists()
    assert not (out / "decisions_cl.csv").exists()
    assert set(json.loads((out / "evaluation.json").read_text())["policies"]) == {"cl-cvar-fl"}


def test_missing_portfolio_is_config_error(tmp_path, capsys):
    assert run("select", "--out", tmp_path / "nothing") == 2
    assert "portfolio" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"bootstrapp": 3}))
    assert run("run", "--config", bad) == 2
    assert "bootstrapp" in capsys.readouterr().err


@pytest.mark.parametrize("flags, key", [(["--eps", "0.7"], "trim_eps"), (["--p", "1.5"], "p"),
                                        (["--bootstrap", "0"], "bootstrap")])
def test_flag_ranges(tmp_path, capsys, flags, key):
    assert run("discretize", "--out", tmp_path, *flags) == 2
    assert key in capsys.readouterr().err


def test_bad_portfolio_is_data_error(tmp_path, capsys):
    (tmp_path / "portfolio.csv").write_text("id,bureau_score\nC1,700\n")
    assert run("discretize", "--out", tmp_path) == 3
    assert "missing column" in capsys.readouterr().err


def test_levels_flag_sets_cut_points(config_file, tmp_path):
    assert run("simulate", "--config", config_file) == 0
    assert run("discretize", "--config", config_file, "--levels", "1.5") == 0
    part = json.loads((tmp_path / "out" / "partition.json").read_text())
    assert part["cut_points"] == [1.5] and len(part["levels"]) == 2


def test_report_lists_missing_artifacts(tmp_path, capsys):
    assert run("report", "--out", tmp_path) == 0
    text = (tmp_path / "report.md").read_text()
    assert "selection.json" in text and "Missing artifacts" in text
    assert "missing artifact" in capsys.readouterr().err


def test_selection_only_report(full_run, tmp_path):
    (tmp_path / "selection.json").write_bytes((full_run / "a" / "selection.json").read_bytes())
    text, missing = build_report(tmp_path)
    assert "Model selection" in text and "Scenario evaluation" not in text
    assert missing == ["partition.json", "evaluation.json"]


def test_config_round_trip_and_override():
    cfg = PipelineConfig.from_dict({**FAST, "cut_points": [1.3, 1.8], "policies": ["cl"]})
    assert PipelineConfig.from_dict(json.loads(cfg.to_json())) == cfg
    assert cfg.override(seed=9, p=None).seed == 9
    assert cfg.override().p == cfg.p
    assert cfg.gen_config().n_customers == 2500


@pytest.mark.parametrize("data, key", [
    ({"policies": ["nope"]}, "policies"), ({"folds": 1}, "folds"),
    ({"generator": {"k_levels": 0}}, "generator"), ({"candidates": [{"method": "x"}]}, "candidates"),
    ({"correction_order": 2}, "correction_order"), ({"lgd": 2.0}, "lgd"),
])
def test_config_errors_name_the_key(data, key):
    with pytest.raises(ConfigError, match=key):
        PipelineConfig.from_dict(data)


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="config"):
        PipelineConfig.load(tmp_path / "none.json")
    (tmp_path / "x.json").write_text("[1]")
    with pytest.raises(ConfigError, match="object"):
        PipelineConfig.load(tmp_path / "x.json")


def test_bad_levels_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        run("discretize", "--levels", "a,b")
    assert exc.value.code == 2
