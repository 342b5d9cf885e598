"""Preset text format: roundtrips, defaults, and line-numbered errors."""

import pytest

from mseg.decoder import DecoderCfg, model_preset
from mseg.errors import ConfigError
from mseg.presets import format_preset, load_preset, parse_preset, save_preset

MINIMAL = """\
name mini
multiplier 1.7
stem conv 16 3 2
stage 8 4 32 down
tap f8 1 down 8
"""


class TestParse:
    def test_minimal(self):
        bcfg, dcfg = parse_preset(MINIMAL)
        assert bcfg.name == "mini"
        assert bcfg.multiplier == 1.7
        assert bcfg.activation == "relu6" and bcfg.norm == "bn"   # defaults
        assert len(bcfg.stem) == 1 and len(bcfg.stages) == 1 and len(bcfg.taps) == 1
        assert dcfg == DecoderCfg()

    def test_comments_and_blanks_ignored(self):
        text = "# header\n\n" + MINIMAL.replace("stage", "stage", 1) + "  # trailing\n"
        bcfg, _ = parse_preset(text + "norm none  # inline comment\n")
        assert bcfg.norm == "none"

    def test_decoder_directives(self):
        text = MINIMAL + "decoder rfb_out_ch 8\ndecoder dilations 2 4 6\ndecoder norm none\n"
        _, dcfg = parse_preset(text)
        assert dcfg.rfb_out_ch == 8
        assert dcfg.dilations == (2, 4, 6)
        assert dcfg.norm == "none"

    @pytest.mark.parametrize("line,lineno", [
        ("stage 8 four 32 down", 6),
        ("widget 3", 6),
        ("tap f16 2 middle 16", 6),
        ("stem conv 16 3", 6),
    ])
    def test_bad_line_reports_its_number(self, line, lineno):
        with pytest.raises(ConfigError, match=f"line {lineno}"):
            parse_preset(MINIMAL + line + "\n")

    def test_missing_required_fields(self):
        with pytest.raises(ConfigError, match="name"):
            parse_preset("multiplier 1.7\nstem conv 16 3 2\nstage 8 4 32 down\ntap f8 1 down 8\n")
        with pytest.raises(ConfigError, match="stem"):
            parse_preset("name x\nmultiplier 1.7\n")

    def test_semantic_validation_still_applies(self):
        # multiplier 1.0 passes parsing but fails BackboneCfg/plan validation downstream
        with pytest.raises(ConfigError, match="validation"):
            parse_preset(MINIMAL.replace("multiplier 1.7", "multiplier 1.7") +
                         "decoder rfb_out_ch 0\n")


class TestRoundtrip:
    @pytest.mark.parametrize("name", ["hardnet68-mseg", "tiny", "small"])
    def test_builtin_presets_roundtrip(self, name):
        bcfg, dcfg = model_preset(name)
        bcfg2, dcfg2 = parse_preset(format_preset(bcfg, dcfg))
        assert bcfg2 == bcfg
        assert dcfg2 == dcfg

    def test_file_roundtrip(self, tmp_path):
        bcfg, dcfg = model_preset("tiny")
        p = tmp_path / "tiny.preset"
        save_preset(p, bcfg, dcfg)
        assert load_preset(p) == (bcfg, dcfg)

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_preset(tmp_path / "absent.preset")
