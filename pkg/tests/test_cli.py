"""Command-line interface: exit codes, formats, and file products."""

import json
import subprocess
import sys

import numpy as np
import pytest

from mseg import imageio
from mseg.cli import main
from mseg.decoder import build_preset_model
from mseg.synthblobs import gen_blobs
from mseg.weights import load_weights, save_weights


@pytest.fixture(scope="module")
def toy_weights(tmp_path_factory):
    """One quick CLI training run shared by the infer/bench tests."""
    out = tmp_path_factory.mktemp("w") / "toy.mw1"
    rc = main(["train-toy", "--policy", "adam", "--scale", "tiny", "--samples", "4",
               "--epochs", "1", "--seed", "0", "--size", "64", "--out", str(out)])
    assert rc == 0
    return out


def run_json(capsys, argv):
    rc = main(argv + ["--format", "json"])
    out = capsys.readouterr().out
    return rc, json.loads(out)


class TestSummary:
    def test_table_has_config_header(self, capsys):
        assert main(["summary", "--preset", "tiny", "--size", "64"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("# config ")
        assert json.loads(out.splitlines()[0][len("# config "):])["preset"] == "tiny"
        assert "TOTAL" in out

    def test_json_matches_library(self, capsys):
        rc, d = run_json(capsys, ["summary", "--preset", "tiny", "--size", "64"])
        assert rc == 0
        assert d["total_params"] == build_preset_model("tiny").param_count()
        assert d["config"]["cmd"] == "summary"
        assert len(d["weight_entries"]) > 0

    def test_preset_file(self, capsys, tmp_path):
        from mseg.decoder import model_preset
        from mseg.presets import save_preset
        p = tmp_path / "own.preset"
        save_preset(p, *model_preset("tiny"))
        rc, d = run_json(capsys, ["summary", "--preset", str(p), "--size", "64"])
        assert rc == 0
        assert d["total_params"] == build_preset_model("tiny").param_count()

    def test_unknown_preset_is_usage_error(self, capsys):
        assert main(["summary", "--preset", "nope", "--size", "64"]) == 1
        assert "usage error" in capsys.readouterr().err


class TestExitCodes:
    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_bad_flag_value(self, capsys):
        assert main(["eval", "--pred", "x", "--gt", "y", "--thresh", "1.5"]) == 1

    def test_missing_file(self, capsys, tmp_path):
        assert main(["infer", "--weights", str(tmp_path / "no.mw1"),
                     "--in", "a.ppm", "--out", "b.pgm"]) == 2

    def test_corrupt_weights(self, capsys, tmp_path, toy_weights):
        bad = tmp_path / "bad.mw1"
        bad.write_bytes(toy_weights.read_bytes()[:40])
        img = tmp_path / "in.ppm"
        imageio.write_ppm(img, np.zeros((64, 64, 3), dtype=np.uint8))
        assert main(["infer", "--weights", str(bad), "--in", str(img),
                     "--out", str(tmp_path / "m.pgm")]) == 2

    @pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
    def test_nonfinite_forward_is_numeric_error(self, capsys, tmp_path, toy_weights):
        store = load_weights(toy_weights)
        name = next(iter(store))
        store[name] = np.full_like(store[name], np.inf)
        bad = tmp_path / "inf.mw1"
        save_weights(bad, store)
        img = tmp_path / "in.ppm"
        imageio.write_ppm(img, np.zeros((64, 64, 3), dtype=np.uint8))
        rc = main(["infer", "--weights", str(bad), "--in", str(img),
                   "--out", str(tmp_path / "m.pgm")])
        assert rc == 3
        assert "numeric" in capsys.readouterr().err


class TestInfer:
    def test_mask_matches_input_dims(self, capsys, tmp_path, toy_weights):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 256, size=(50, 70, 3), dtype=np.uint8)
        src, dst = tmp_path / "in.ppm", tmp_path / "out.pgm"
        imageio.write_ppm(src, img)
        rc, d = run_json(capsys, ["infer", "--weights", str(toy_weights),
                                  "--in", str(src), "--out", str(dst)])
        assert rc == 0
        mask = imageio.read_pgm(dst)
        assert mask.shape == (50, 70)                      # original dims, not network size
        assert set(np.unique(mask)) <= {0, 255}
        assert d["mask_shape"] == [50, 70]
        assert 0.0 <= d["foreground_fraction"] <= 1.0
        assert d["config"]["preset"] == "tiny"             # resolved from weight meta

    def test_threshold_one_gives_empty_mask(self, capsys, tmp_path, toy_weights):
        img = tmp_path / "in.ppm"
        imageio.write_ppm(img, np.zeros((64, 64, 3), dtype=np.uint8))
        dst = tmp_path / "m.pgm"
        rc, d = run_json(capsys, ["infer", "--weights", str(toy_weights), "--in", str(img),
                                  "--out", str(dst), "--thresh", "1.0"])
        assert rc == 0
        mask = imageio.read_pgm(dst)
        assert d["foreground_fraction"] in (0.0, float((mask == 255).mean()))


class TestEval:
    def make_dirs(self, tmp_path, identical=True):
        pred, gt = tmp_path / "pred", tmp_path / "gt"
        pred.mkdir(), gt.mkdir()
        ds = gen_blobs(seed=13, n=3, size=64)
        for i, s in enumerate(ds.samples):
            u8 = imageio.mask_to_u8(s.mask[0].astype(np.float64))
            imageio.write_pgm(gt / f"s{i}.pgm", u8)
            imageio.write_pgm(pred / f"s{i}.pgm", u8 if identical else 255 - u8)
        return pred, gt

    def test_identical_dirs_score_one(self, capsys, tmp_path):
        pred, gt = self.make_dirs(tmp_path)
        rc, d = run_json(capsys, ["eval", "--pred", str(pred), "--gt", str(gt)])
        assert rc == 0
        assert d["mdice"] == 1.0 and d["miou"] == 1.0 and d["mae"] == 0.0
        assert d["n_images"] == 3

    def test_inverted_predictions_score_zero_dice(self, capsys, tmp_path):
        pred, gt = self.make_dirs(tmp_path, identical=False)
        rc, d = run_json(capsys, ["eval", "--pred", str(pred), "--gt", str(gt)])
        assert rc == 0 and d["mdice"] == 0.0

    def test_json_out_file(self, capsys, tmp_path):
        pred, gt = self.make_dirs(tmp_path)
        dst = tmp_path / "report.json"
        assert main(["eval", "--pred", str(pred), "--gt", str(gt), "--json-out", str(dst)]) == 0
        assert json.loads(dst.read_text())["mdice"] == 1.0

    def test_id_mismatch(self, capsys, tmp_path):
        pred, gt = self.make_dirs(tmp_path)
        (pred / "s0.pgm").rename(pred / "zz.pgm")
        assert main(["eval", "--pred", str(pred), "--gt", str(gt)]) == 2
        assert "id mismatch" in capsys.readouterr().err

    def test_empty_dir(self, capsys, tmp_path):
        (tmp_path / "empty").mkdir()
        _, gt = self.make_dirs(tmp_path)
        assert main(["eval", "--pred", str(tmp_path / "empty"), "--gt", str(gt)]) == 2


class TestBench:
    def test_json_fields(self, capsys):
        rc, d = run_json(capsys, ["bench", "--preset", "tiny", "--size", "64",
                                  "--warmup", "1", "--iters", "10"])
        assert rc == 0
        assert d["measure_iters"] == 10 and len(d["latencies_s"]) == 10
        assert d["median_s"] > 0 and d["fps"] > 0
        assert "platform" in d and "note" in d

    def test_iters_floor_is_usage_error(self, capsys):
        assert main(["bench", "--preset", "tiny", "--iters", "5"]) == 1


class TestTrainToy:
    def test_products_and_meta(self, capsys, tmp_path):
        out = tmp_path / "w.mw1"
        rc, d = run_json(capsys, ["train-toy", "--policy", "sgd", "--scale", "tiny",
                                  "--samples", "4", "--epochs", "1", "--seed", "1",
                                  "--size", "64", "--out", str(out)])
        assert rc == 0
        store = load_weights(out)
        assert store.meta["preset"] == "tiny"
        assert store.meta["policy"] == "sgd-policy"
        assert store.meta["mean"] == [0.0, 0.0, 0.0]       # trained on raw [0,1] images
        assert set(store.names()) == {n for n, _ in build_preset_model("tiny").weight_entries()}
        curve = json.loads((tmp_path / "w.mw1.curve.json").read_text())
        assert len(curve["train_loss"]) == 1
        report = json.loads((tmp_path / "w.mw1.report.json").read_text())
        assert report["n_images"] == 1
        assert d["report"]["mdice"] == report["mdice"]


class TestEntryPoint:
    def test_module_invocation(self):
        proc = subprocess.run([sys.executable, "-m", "mseg.cli", "summary", "--preset",
                               "tiny", "--size", "64"], capture_output=True, text=True)
        assert proc.returncode == 0
        assert "TOTAL" in proc.stdout
