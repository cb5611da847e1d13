import csv
import json
import os

import numpy as np
import pytest

from bingan.cli import (
    _eval_threads,
    build_train_config,
    main,
    parse_config_file,
)
from bingan.data import load_container
from bingan.errors import ConfigError
from bingan.quantize import load_descriptors
from bingan.raster import read_pnm, write_pnm


def run(argv, capsys=None):
    return main(argv)


class TestConfigFile:
    def test_parse_basic(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text(
            "# comment\n"
            "epochs = 2\n"
            "lambda_dmr = 0.1  # inline comment\n"
            "\n"
            "batch_size = 8\n"
        )
        vals = parse_config_file(p)
        assert vals == {"epochs": "2", "lambda_dmr": "0.1", "batch_size": "8"}

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("momentum = 0.9\n")
        with pytest.raises(ConfigError, match="unknown"):
            parse_config_file(p)

    def test_duplicate_key_rejected(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("epochs = 1\nepochs = 2\n")
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_file(p)

    def test_missing_equals_rejected(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("epochs 2\n")
        with pytest.raises(ConfigError):
            parse_config_file(p)

    def test_build_train_config_coercion_and_reg_split(self):
        cfg = build_train_config(
            {"epochs": "3", "lambda_bre": "0.02", "learning_rate": "1e-3"},
            {"task": "toy", "seed": 5},
        )
        assert cfg.epochs == 3
        assert cfg.learning_rate == pytest.approx(1e-3)
        assert cfg.reg.lambda_bre == 0.02
        assert cfg.seed == 5

    def test_bad_numeric_value(self):
        with pytest.raises(ConfigError):
            build_train_config({"epochs": "three"}, {})

    def test_none_overrides_ignored(self):
        cfg = build_train_config({}, {"task": None, "seed": None})
        assert cfg.task == "retrieval"


class TestEvalThreads:
    def test_default(self, monkeypatch):
        monkeypatch.delenv("BINGAN_THREADS", raising=False)
        assert _eval_threads() == 1

    def test_env_value(self, monkeypatch):
        monkeypatch.setenv("BINGAN_THREADS", "6")
        assert _eval_threads() == 6

    def test_invalid_env(self, monkeypatch):
        monkeypatch.setenv("BINGAN_THREADS", "many")
        with pytest.raises(ConfigError):
            _eval_threads()


class TestExitCodes:
    def test_config_error_is_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("warp_drive = on\n")
        code = run(["train", "--data", "nope.bgds", "--out", str(tmp_path),
                    "--config", str(bad)])
        assert code == 2
        assert capsys.readouterr().err.startswith("config-error:")

    def test_missing_file_is_3(self, tmp_path, capsys):
        code = run(["extract", "--ckpt", str(tmp_path / "no.bgck"),
                    "--data", "x", "--out", "y"])
        assert code == 3
        err = capsys.readouterr().err
        assert err.count("\n") == 1  # single-line message

    def test_corrupt_container_is_3(self, tmp_path, capsys):
        bad = tmp_path / "bad.bgds"
        bad.write_bytes(b"BGDS" + b"\x00" * 32)
        code = run(["train", "--data", str(bad), "--out", str(tmp_path)])
        assert code == 3
        assert capsys.readouterr().err.startswith("format-error:")


class TestSynthAndImport:
    def test_synth_pairs_roundtrip(self, tmp_path, capsys):
        out = tmp_path / "p.bgds"
        assert run(["synth", "--task", "pairs", "--seed", "3", "--n-pairs", "10",
                    "--out", str(out)]) == 0
        ds = load_container(out)
        assert len(ds) == 10
        manifest = json.loads((tmp_path / "p.manifest.json").read_text())
        assert manifest["command"] == "synth"
        assert str(out) in manifest["outputs"]

    def test_synth_retrieval(self, tmp_path):
        out = tmp_path / "r.bgds"
        assert run(["synth", "--task", "retrieval", "--seed", "1",
                    "--n-per-class", "3", "--out", str(out)]) == 0
        ds = load_container(out)
        assert len(ds) == 12

    def test_import_images(self, rng, tmp_path):
        d = tmp_path / "imgs"
        d.mkdir()
        rows = [["file", "label"]]
        for i in range(4):
            img = rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
            write_pnm(d / f"im{i}.ppm", img)
            rows.append([f"im{i}.ppm", str(i % 2)])
        labels = tmp_path / "labels.csv"
        with open(labels, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
        out = tmp_path / "imported.bgds"
        assert run(["import", "--kind", "image", "--in", str(d),
                    "--labels", str(labels), "--out", str(out)]) == 0
        ds = load_container(out)
        assert ds.images.shape == (4, 3, 8, 8)
        np.testing.assert_array_equal(ds.labels, [0, 1, 0, 1])

    def test_import_pairs(self, rng, tmp_path):
        d = tmp_path / "patches"
        d.mkdir()
        rows = [["file_a", "file_b", "match"]]
        for i in range(3):
            for side in "ab":
                write_pnm(d / f"p{i}{side}.pgm",
                          rng.integers(0, 256, (8, 8), dtype=np.uint8))
            rows.append([f"p{i}a.pgm", f"p{i}b.pgm", str(i % 2)])
        labels = tmp_path / "pairs.csv"
        with open(labels, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
        out = tmp_path / "pairs.bgds"
        assert run(["import", "--kind", "pairs", "--in", str(d),
                    "--labels", str(labels), "--out", str(out)]) == 0
        ds = load_container(out)
        np.testing.assert_array_equal(ds.match, [False, True, False])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """synth -> train -> extract once; several tests read the artifacts."""
    root = tmp_path_factory.mktemp("pipeline")
    data = root / "toy.bgds"
    cfgfile = root / "train.cfg"
    cfgfile.write_text(
        "batch_size = 8\nz_dim = 8\ngen_base_channels = 8\ncode_bits = 16\n"
    )
    assert main(["synth", "--task", "retrieval", "--seed", "2",
                 "--n-per-class", "8", "--out", str(data)]) == 0
    run_dir = root / "run"
    assert main(["train", "--data", str(data), "--task", "toy", "--seed", "2",
                 "--epochs", "1", "--config", str(cfgfile),
                 "--out", str(run_dir)]) == 0
    codes = root / "codes.bgbd"
    assert main(["extract", "--ckpt", str(run_dir / "checkpoint.bgck"),
                 "--data", str(data), "--out", str(codes)]) == 0
    return root, data, run_dir, codes


class TestPipeline:
    def test_train_outputs(self, pipeline):
        _, _, run_dir, _ = pipeline
        assert (run_dir / "checkpoint.bgck").exists()
        assert (run_dir / "losses.csv").exists()
        assert (run_dir / "losses.png").stat().st_size > 0
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert manifest["command"] == "train"
        assert all(len(v) == 64 for v in manifest["inputs"].values())
        assert manifest["wall_clock_sec"] >= 0

    def test_extract_output(self, pipeline):
        _, _, _, codes = pipeline
        bm, labels = load_descriptors(codes)
        assert bm.n_rows == 32 and bm.n_bits == 16
        assert len(labels) == 32

    def test_eval_retrieval(self, pipeline, capsys, monkeypatch):
        root, _, _, codes = pipeline
        monkeypatch.chdir(root)
        assert main(["eval-retrieval", "--queries", str(codes),
                     "--db", str(codes), "--k", "10",
                     "--out", str(root / "ret.csv"), "--per-query"]) == 0
        out = capsys.readouterr().out
        assert "mAP@10" in out
        assert (root / "ret.png").exists()
        assert (root / "ret_per_query.csv").exists()

    def test_sample_writes_pnm_grid(self, pipeline):
        root, _, run_dir, _ = pipeline
        out = root / "samples.ppm"
        assert main(["sample", "--ckpt", str(run_dir / "checkpoint.bgck"),
                     "--n", "4", "--seed", "1", "--out", str(out)]) == 0
        grid = read_pnm(out)
        assert grid.ndim == 3 and grid.shape[2] == 3

    def test_extract_determinism(self, pipeline, tmp_path):
        _, data, run_dir, codes = pipeline
        again = tmp_path / "codes2.bgbd"
        assert main(["extract", "--ckpt", str(run_dir / "checkpoint.bgck"),
                     "--data", str(data), "--out", str(again)]) == 0
        assert again.read_bytes() == codes.read_bytes()


class TestEvalMatchingCli:
    def test_end_to_end(self, tmp_path, capsys):
        data = tmp_path / "pairs.bgds"
        assert main(["synth", "--task", "pairs", "--seed", "4",
                     "--n-pairs", "16", "--out", str(data)]) == 0
        cfgfile = tmp_path / "c.cfg"
        cfgfile.write_text(
            "batch_size = 8\nz_dim = 8\ngen_base_channels = 8\n"
            "scale_profile = desk\ncode_bits = 16\n"
        )
        run_dir = tmp_path / "run"
        assert main(["train", "--data", str(data), "--task", "matching",
                     "--seed", "4", "--epochs", "1", "--config", str(cfgfile),
                     "--out", str(run_dir)]) == 0
        assert main(["eval-matching", "--ckpt", str(run_dir / "checkpoint.bgck"),
                     "--pairs", str(data),
                     "--out", str(tmp_path / "match.csv")]) == 0
        assert "FPR@95%TPR" in capsys.readouterr().out
        assert (tmp_path / "match.png").exists()
