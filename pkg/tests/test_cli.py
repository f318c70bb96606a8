import json
import pathlib

import pytest

from banksim.cli import run_cli

PRESETS = pathlib.Path(__file__).resolve().parents[1] / "presets"


def write_config(tmp_path, text):
    p = tmp_path / "config.toml"
    p.write_text(text)
    return str(p)


SMALL_SIM = """
[model]
r = 0.05
sigma = 0.2
[model.birth_rate]
form = "constant"
c = 1.0
[model.default_rate]
form = "constant"
c = 0.2
[model.birth_size]
form = "exponential"
rate = 1.0
[model.contagion]
form = "uniform_over_count"
d = 1.0
[model.scaling]
setting = 1
[init.dist]
form = "exponential"
rate = 1.0
[experiment]
seed = 7
N0 = 3
horizon = 1.0
grid_dt = 0.5
"""


class TestExitCodes:
    def test_simulate_success(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_SIM)
        out = tmp_path / "results"
        code = run_cli(["simulate", "--config", cfg, "--out", str(out)])
        assert code == 0
        assert (out / "manifest.json").exists()
        assert (out / "grid.csv").exists()
        assert (out / "events.csv").exists()

    def test_missing_config_exits_2(self, tmp_path):
        out = tmp_path / "r"
        code = run_cli(["simulate", "--config", str(tmp_path / "nope.toml"),
                        "--out", str(out)])
        assert code == 2
        assert not out.exists()

    def test_malformed_config_exits_2(self, tmp_path):
        cfg = write_config(tmp_path, "this is [not toml")
        code = run_cli(["simulate", "--config", cfg, "--out", str(tmp_path / "r")])
        assert code == 2

    def test_incomplete_config_exits_2(self, tmp_path):
        cfg = write_config(tmp_path, "[model]\nr = 0.05\n")
        code = run_cli(["simulate", "--config", cfg, "--out", str(tmp_path / "r")])
        assert code == 2

    def test_unknown_subcommand_exits_2(self, capsys):
        code = run_cli(["frobnicate", "--config", "x"])
        assert code == 2


class TestManifest:
    def test_manifest_embeds_config_and_seed(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_SIM)
        out = tmp_path / "results"
        assert run_cli(["simulate", "--config", cfg, "--out", str(out),
                        "--seed", "99"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 99
        assert manifest["kind"] == "simulate"
        assert manifest["config"]["model"]["r"] == 0.05
        assert sorted(manifest["outputs"]) == ["events.csv", "grid.csv", "path.json"]

    def test_seed_override_changes_outputs(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_SIM)
        a, b = tmp_path / "a", tmp_path / "b"
        run_cli(["simulate", "--config", cfg, "--out", str(a)])
        run_cli(["simulate", "--config", cfg, "--out", str(b), "--seed", "99"])
        assert (a / "grid.csv").read_text() != (b / "grid.csv").read_text()


class TestPresets:
    def test_stability_preset(self, tmp_path):
        out = tmp_path / "stab"
        code = run_cli(["stability", "--config", str(PRESETS / "example34.toml"),
                        "--out", str(out)])
        assert code == 0
        doc = json.loads((out / "stability.json").read_text())
        assert doc["stable_margin"] < 0

    def test_meanfield_preset(self, tmp_path):
        out = tmp_path / "mf"
        code = run_cli(["meanfield", "--config", str(PRESETS / "fig2.toml"),
                        "--out", str(out)])
        assert code == 0
        first_lines = (out / "ode.csv").read_text().splitlines()[:2]
        assert first_lines[0] == "t,m"
        assert float(first_lines[1].split(",")[1]) == 2.0

    def test_all_presets_parse(self):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        for p in PRESETS.glob("*.toml"):
            with open(p, "rb") as fh:
                cfg = tomllib.load(fh)
            assert "model" in cfg and "experiment" in cfg
