"""Exporter CLI: exit codes, flag parsing, manifest output."""

import json

import numpy as np
import pytest
import torch

from msegexport.cli import main
from msegexport.container import read_container_file


@pytest.fixture
def setup(tmp_path):
    torch.save({"r.w": torch.ones(2, 3), "r.b": torch.zeros(3)}, tmp_path / "c.pth")
    (tmp_path / "n.map").write_text("r.w o.w\nr.b o.b\n")
    return tmp_path


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


class TestExport:
    def test_export_and_manifest_out(self, setup, capsys):
        out = setup / "w.mw1"
        code, cap = run(capsys, "export", "--checkpoint", str(setup / "c.pth"),
                        "--map", str(setup / "n.map"), "--out", str(out),
                        "--manifest-out", str(setup / "m.json"),
                        "--set-meta", "preset=tiny", "--set-meta", "input_size=64")
        assert code == 0
        printed = json.loads(cap.out)
        on_disk = json.loads((setup / "m.json").read_text())
        assert printed == on_disk
        assert [e["name"] for e in printed["entries"]] == ["o.w", "o.b"]
        _, meta = read_container_file(out)
        assert meta == {"preset": "tiny", "input_size": 64}  # 64 json-decoded to int

    def test_expected_mismatch_exits_2_with_diff(self, setup, capsys):
        (setup / "e.json").write_text('[{"name": "o.w", "shape": [2, 3]}]')
        code, cap = run(capsys, "export", "--checkpoint", str(setup / "c.pth"),
                        "--map", str(setup / "n.map"), "--out", str(setup / "w.mw1"),
                        "--expected", str(setup / "e.json"))
        assert code == 2
        assert "unexpected o.b" in cap.err

    def test_missing_checkpoint_exits_2(self, setup, capsys):
        code, cap = run(capsys, "export", "--checkpoint", str(setup / "nope.pth"),
                        "--map", str(setup / "n.map"), "--out", str(setup / "w.mw1"))
        assert code == 2

    def test_bad_meta_flag_exits_1(self, setup, capsys):
        code, cap = run(capsys, "export", "--checkpoint", str(setup / "c.pth"),
                        "--map", str(setup / "n.map"), "--out", str(setup / "w.mw1"),
                        "--set-meta", "no_equals_sign")
        assert code == 1
        assert "usage error" in cap.err

    def test_unknown_subcommand_exits_1(self, capsys):
        assert run(capsys, "frobnicate")[0] == 1


class TestProbeCommand:
    def test_probe_writes_container(self, tmp_path, capsys):
        img = np.random.default_rng(0).integers(0, 256, (30, 40, 3), dtype=np.uint8)
        p = tmp_path / "i.ppm"
        p.write_bytes(b"P6\n40 30\n255\n" + img.tobytes())
        code, cap = run(capsys, "probe", "--in", str(p), "--out", str(tmp_path / "p.mw1"),
                        "--size", "64", "--mean", "0,0,0", "--std", "1,1,1")
        assert code == 0
        entries, meta = read_container_file(tmp_path / "p.mw1")
        assert entries[0][0] == "probe" and entries[0][1].shape == (1, 3, 64, 64)
        assert meta["mean"] == [0.0, 0.0, 0.0]

    def test_small_size_exits_1(self, tmp_path, capsys):
        assert run(capsys, "probe", "--in", "x.ppm", "--out", "y", "--size", "32")[0] == 1

    def test_bad_mean_exits_1(self, tmp_path, capsys):
        code, _ = run(capsys, "probe", "--in", "x.ppm", "--out", "y",
                      "--size", "64", "--mean", "1,2")
        assert code == 1


class TestManifestCommand:
    def test_table_and_json(self, setup, capsys):
        main(["export", "--checkpoint", str(setup / "c.pth"),
              "--map", str(setup / "n.map"), "--out", str(setup / "w.mw1")])
        capsys.readouterr()
        code, cap = run(capsys, "manifest", "--weights", str(setup / "w.mw1"),
                        "--format", "json")
        assert code == 0
        doc = json.loads(cap.out)
        assert doc["total_params"] == 9 and doc["n_entries"] == 2
        code, cap = run(capsys, "manifest", "--weights", str(setup / "w.mw1"))
        assert code == 0 and "o.w" in cap.out and "total params 9" in cap.out

    def test_corrupt_container_exits_2(self, tmp_path, capsys):
        (tmp_path / "bad.mw1").write_bytes(b"not a container at all")
        assert run(capsys, "manifest", "--weights", str(tmp_path / "bad.mw1"))[0] == 2
