"""Config loading, number formatting, emitted CSV and exit codes."""
import json
import math

import pytest

from tfbounds import cli
from tfbounds.cli import (ConfigError, config_from_dict, emit_table, figure_data, format_value, load_config,
                          main)
from tfbounds.combinatorics import LogMagnitude
from tfbounds.composer import TransformerSpec
from tfbounds.genbound import GenBoundInput
from tfbounds.multiindex import ENUM_CAP_ENV
from tfbounds.primitives import ArchSpec


def write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


class TestFormat:
    @pytest.mark.parametrize("value,text", [
        (17, "17.00"), (13300, "1.33E+04"), (945.21, "945.21"), (1340, "1.34E+03"),
        (0.0, "0.00"), (2.2e11, "2.20E+11"), (math.inf, "inf"),
    ])
    def test_values(self, value, text):
        assert format_value(value) == text

    def test_log_magnitudes_beyond_float(self):
        assert format_value(LogMagnitude(400.5)) == "3.16E+400"
        assert format_value(LogMagnitude.of(17.0)) == "17.00"
        assert format_value(LogMagnitude.zero()) == "0.00"

    def test_emit_table(self, tmp_path):
        rows = [{"order": 1, "bound": 17.0}, {"order": 2, "bound": LogMagnitude.of(13300)}]
        text = emit_table(rows, meta={"config": "abc", "mode": "exact", "variant": "level"})
        lines = text.splitlines()
        assert lines[0].startswith("# ") and "config=abc" in lines[0] and "version=" in lines[0]
        assert lines[1:] == ["order,bound", "1,17.00", "2,1.33E+04"]
        out = tmp_path / "t.csv"
        emit_table(rows, str(out))
        assert out.read_text().splitlines()[1] == "order,bound"

    def test_emit_empty(self):
        with pytest.raises(ValueError):
            emit_table([])


class TestConfig:
    def test_arch_defaults(self, tmp_path):
        cfg = load_config(write(tmp_path, "a.json", {"i": 5, "C_K": 0.01}))
        assert isinstance(cfg, ArchSpec)
        assert cfg.w == 1.0 and cfg.C_a == 0.0 and cfg.C_beta == 0.0

    def test_field_path_errors(self, tmp_path):
        with pytest.raises(ConfigError, match=r"config\.i"):
            config_from_dict({"i": -2})
        with pytest.raises(ConfigError, match=r"config\.w"):
            config_from_dict({"w": 1.5})
        with pytest.raises(ConfigError, match=r"config\.blocks\[1\]\.M"):
            config_from_dict({"blocks": [{"M": 1}, {"M": 0}]})
        with pytest.raises(ConfigError, match=r"config\.bogus"):
            config_from_dict({"bogus": 1})
        with pytest.raises(ConfigError, match="invalid JSON"):
            bad = tmp_path / "bad.json"
            bad.write_text("{")
            load_config(str(bad))

    def test_transformer_and_genbound(self):
        tf = config_from_dict({"blocks": [{"i": 3, "o": 3}, {"i": 3, "o": 2}], "out_dim": 2})
        assert isinstance(tf, TransformerSpec) and tf.depth == 2
        gb = config_from_dict({"kappa": 0.5, "Md": 2, "constants": [1, 2, {"log10": 5}]})
        assert isinstance(gb, GenBoundInput)
        assert gb.constants[2].log10 == 5 and gb.t == math.inf

    def test_presets(self):
        assert load_config("preset:block").gamma == 0.01
        with pytest.raises(ConfigError):
            load_config("preset:nothing")


class TestCommands:
    def test_activation(self, tmp_path, capsys):
        assert main(["activation"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[1] == "activation,order,bound"
        assert len(out) == 2 + 40
        assert "softplus,1,0.25" in out

    def test_block_bounds_perceptron(self, capsys):
        assert main(["block-bounds", "preset:perceptron", "--block", "feedforward", "--max-order", "1"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[-1] == "feedforward,1,,17.00"
        assert out[1].startswith("# config {")

    def test_config_error_exit(self, tmp_path):
        assert main(["block-bounds", write(tmp_path, "c.json", {"i": 0})]) == 2
        assert main(["block-bounds", str(tmp_path / "missing.json")]) == 2

    def test_cap_exit(self, monkeypatch):
        monkeypatch.setenv(ENUM_CAP_ENV, "2")
        assert main(["block-bounds", "preset:block", "--variant", "type", "--max-order", "3"]) == 3

    def test_verify_exit_codes(self, tmp_path, monkeypatch, capsys):
        path = write(tmp_path, "s.json", {"M": 2, "i": 2, "k": 2, "v": 2, "l": 4, "o": 2})
        assert main(["verify", path, "--component", "dotp", "--trials", "1", "--grid", "4"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["violations"] == []
        monkeypatch.setattr(cli, "soundness_check", lambda *a, **k: {"violations": [{"x": 1}]})
        assert main(["verify", path, "--trials", "1"]) == 4

    def test_genbound_and_transitions(self, tmp_path, capsys):
        path = write(tmp_path, "g.json", {"kappa": 0.5, "delta": 0.05, "Md": 2, "constants": [1, 1, 1]})
        assert main(["genbound", path, "--max-order", "2", "--N", "10", "1000000"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[2] == "N,best_s,bound"
        assert main(["transitions", path, "--max-order", "2"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[3].startswith("0,0")

    def test_byte_identical(self, tmp_path):
        for args in (["block-bounds", "preset:block", "--variant", "type"],
                     ["figure", "type_vs_level"],
                     ["verify", "preset:multihead", "--component", "attention", "--trials", "2", "--grid", "8"]):
            a, b = tmp_path / "a.out", tmp_path / "b.out"
            main(args + ["-o", str(a)])
            main(args + ["-o", str(b)])
            assert a.read_bytes() == b.read_bytes()


class TestFigures:
    def test_activation_curves(self):
        assert len(figure_data("activation_curves")) == 40

    def test_type_vs_level(self):
        rows = figure_data("type_vs_level")
        typ = {r["x"]: float(r["y_log10"]) for r in rows if r["series"] == "type"}
        lvl = {r["x"]: float(r["y_log10"]) for r in rows if r["series"] == "level"}
        assert sorted(typ) == [1, 2, 3, 4, 5]
        assert all(lvl[s] >= typ[s] for s in typ)

    def test_transition_vs_dim(self):
        rows = figure_data("transition_vs_dim", s_max=2)
        assert {r["x"] for r in rows} == set(range(2, 21))
        assert {r["series"] for r in rows} == {"tau_1", "tau_2"}

    @pytest.mark.parametrize("which", ["block_comparison", "architecture_sweep"])
    def test_other_figures(self, which):
        rows = figure_data(which, s_max=3)
        assert rows and set(rows[0]) == {"series", "x", "y_log10"}

    def test_unknown(self):
        with pytest.raises(ValueError):
            figure_data("nothing")
