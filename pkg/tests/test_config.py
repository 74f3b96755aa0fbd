from pathlib import Path

import pytest

from covlab.config import SCENARIOS, GridConfig, ScenarioConfig, TimeConfig, load_config, parse_config
from covlab.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_defaults_are_valid():
    for name in SCENARIOS:
        cfg = ScenarioConfig.default(name)
        cfg.validate()
        assert cfg.grid.h > 0 and cfg.time.dt > 0


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.ini")), ids=lambda p: p.stem)
def test_shipped_configs_parse(path):
    cfg = load_config(path)
    assert cfg.name in SCENARIOS


def test_parse_minimal_and_options():
    cfg = parse_config("[scenario]\nname = rank-one-singular\ncoupling = 0.25\n")
    assert cfg.grid == GridConfig(8.0, 256) and cfg.time == TimeConfig(2.0, 64)
    assert cfg.option("coupling", "x") == "0.25"
    assert cfg.seed == 20240917


def test_parse_overrides():
    text = """
[scenario]
name = shift-trace-restoration
seed = 3
[grid]
x_max = 8
n_points = 128
[time]
t_max = 1
n_steps = 16
[tolerances]
trace-restoration = 2e-3
[solver]
method = dyson
[output]
format = csv
path = out.csv
"""
    cfg = parse_config(text)
    assert cfg.seed == 3 and cfg.grid.n_points == 128 and cfg.time.dt == 1 / 16
    assert cfg.tol("trace-restoration", 1.0) == 2e-3 and cfg.tol("other", 0.5) == 0.5
    assert cfg.solver.method == "dyson" and cfg.output.format == "csv"
    assert "path" not in cfg.to_dict()["output"]


@pytest.mark.parametrize(
    "text,needle",
    [
        ("[grid]\nn_points = 4\n", "scenario.name is required"),
        ("[scenario]\nname = nope\n", "unknown scenario"),
        ("[scenario]\nname = covariance-suite\n[grid]\nn_points = many\n", "grid.n_points"),
        ("[scenario]\nname = covariance-suite\n[grid]\nx_max = -1\n", "grid.x_max"),
        ("[scenario]\nname = covariance-suite\n[solver]\nmethod = magic\n", "solver.method"),
        ("[scenario]\nname = covariance-suite\n[output]\nformat = xml\n", "output.format"),
        ("[scenario]\nname = covariance-suite\n[bogus]\nx = 1\n", "unknown section"),
        ("[scenario]\nname = shift-trace-restoration\n[time]\nn_steps = 100\n", "multiple of the grid spacing"),
        ("[scenario]\nname = rank-one-singular\n[time]\nn_steps = 32\n", "step == h"),
        ("[scenario]\nname = shift-trace-restoration\n[time]\nt_max = 9\nn_steps = 288\n", "leaves nothing"),
        ("[scenario]\nname = fock-identities\n[time]\nt_max = 0.01\n", "whole number of cells"),
        ("not an ini file", "no section headers"),
    ],
)
def test_parse_errors(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(text)


def test_all_problems_listed():
    text = "[scenario]\nname = covariance-suite\n[grid]\nx_max = -1\n[solver]\nmethod = magic\n"
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert "grid.x_max" in str(exc.value) and "solver.method" in str(exc.value)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "none.ini")


def test_refined():
    cfg = ScenarioConfig.default("shift-trace-restoration")
    r = cfg.refined(2)
    assert r.grid.n_points == 512 and r.time.n_steps == 128
    r.validate()
