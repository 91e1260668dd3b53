import json

import numpy as np
import pytest

from mfgrow.arch import arch_to_json, build_mlp
from mfgrow.cli import main
from mfgrow.data import load_checkpoint, save_checkpoint
from mfgrow.init import initialize, nonzero_mean_default
from mfgrow.net import forward_batch, zeros_network
from mfgrow.tensor import Rng


@pytest.fixture
def example3_arch_file(tmp_path):
    g = build_mlp(4, 16, with_bias=True, with_skip=True)
    path = tmp_path / "example3.json"
    path.write_text(arch_to_json(g), encoding="utf-8")
    return path


@pytest.fixture
def small_ckpt(tmp_path):
    arch = build_mlp(3, 20, with_bias=True, parametrization="MFP")
    net = initialize(zeros_network(arch), nonzero_mean_default("MFP", arch), Rng(0))
    path = tmp_path / "small.ckpt"
    save_checkpoint(net, path, seed=0)
    return path


def synth_config(tmp_path, **overrides):
    cfg = {
        "parametrization": "MFP",
        "arch": {"builder": "mlp", "depth": 2, "widths": 32, "with_bias": False},
        "optimizer": {"kind": "sgd", "lr": 0.05, "batch_size": 32},
        "epochs": 2,
        "seeds": [0],
        "dataset": {"kind": "sine", "n": 128, "noise_std": 0.0},
        "out_dir": str(tmp_path / "out"),
    }
    cfg.update(overrides)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path


class TestGamma:
    def test_example3_file_prints_three_groups(self, example3_arch_file, capsys):
        assert main(["gamma", str(example3_arch_file)]) == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert len(out) == 3
        assert out[1] == "Γ_2: {γ_2, γ_3} width=16"

    def test_mlp_flag_prints_singletons(self, capsys):
        assert main(["gamma", "--mlp", "5"]) == 0
        assert len(capsys.readouterr().out.strip().splitlines()) == 4

    def test_malformed_json_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{nope", encoding="utf-8")
        assert main(["gamma", str(bad)]) == 2

    def test_missing_args_exits_2(self):
        assert main(["gamma"]) == 2


class TestTrainCli:
    def test_train_writes_log_and_checkpoint(self, tmp_path, capsys):
        cfg = synth_config(tmp_path)
        assert main(["train", "--config", str(cfg)]) == 0
        out_dir = tmp_path / "out"
        assert (out_dir / "train_seed0.csv").exists()
        assert (out_dir / "trained_seed0.ckpt").exists()
        header = (out_dir / "train_seed0.csv").read_text().splitlines()[0]
        assert header == "epoch,step,train_loss,test_loss,test_acc,seed"

    def test_seed_determinism_byte_identical(self, tmp_path):
        cfg = synth_config(tmp_path)
        assert main(["train", "--config", str(cfg), "--seed", "7"]) == 0
        first = (tmp_path / "out" / "train_seed7.csv").read_bytes()
        first_ckpt = (tmp_path / "out" / "trained_seed7.ckpt").read_bytes()
        assert main(["train", "--config", str(cfg), "--seed", "7"]) == 0
        assert (tmp_path / "out" / "train_seed7.csv").read_bytes() == first
        assert (tmp_path / "out" / "trained_seed7.ckpt").read_bytes() == first_ckpt

    def test_unknown_config_key_exits_2(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"parametrization": "MFP", "bogus": 1}), encoding="utf-8")
        assert main(["train", "--config", str(path)]) == 2

    def test_cifar_without_data_exits_3(self, tmp_path, monkeypatch, capsys):
        monkeypatch.delenv("MFGROW_CIFAR10_DIR", raising=False)
        cfg = synth_config(tmp_path, dataset={"kind": "cifar10"})
        assert main(["train", "--config", str(cfg)]) == 3
        assert "MFGROW_CIFAR10_DIR" in capsys.readouterr().err


class TestTransferCli:
    def test_transfer_roundtrip(self, small_ckpt, tmp_path, capsys):
        out_ckpt = tmp_path / "big.ckpt"
        rc = main([
            "transfer", "--from", str(small_ckpt), "--widths", "60",
            "--strategy", "random", "--r1", "0.1", "--r2", "0.0",
            "--noise", "perturb", "--seed", "7", "--out", str(out_ckpt),
        ])
        assert rc == 0
        grown = load_checkpoint(out_ckpt)
        assert grown.store["w1"].shape == (60, 60)

    def test_duplicate_preserves_function(self, small_ckpt, tmp_path):
        out_ckpt = tmp_path / "dup.ckpt"
        rc = main([
            "transfer", "--from", str(small_ckpt), "--widths", "40",
            "--strategy", "duplicate", "--out", str(out_ckpt),
        ])
        assert rc == 0
        src = load_checkpoint(small_ckpt)
        dup = load_checkpoint(out_ckpt)
        xs = Rng(1).generator().normal(size=(50, 1))
        assert np.allclose(forward_batch(dup, xs), forward_batch(src, xs), atol=1e-12)


class TestDiagnoseCli:
    def test_corr_report(self, small_ckpt, tmp_path):
        out = tmp_path / "diag"
        assert main(["diagnose", "--ckpt", str(small_ckpt), "--report", "corr",
                     "--out", str(out)]) == 0
        text = (out / "correlations.csv").read_text()
        assert text.splitlines()[0] == "profile_a,profile_b,abs_pearson"

    def test_heatmap_report(self, small_ckpt, tmp_path):
        out = tmp_path / "diag"
        assert main(["diagnose", "--ckpt", str(small_ckpt), "--report", "heatmap",
                     "--out", str(out)]) == 0
        assert (out / "w1.grid").exists()
        assert (out / "w1.gp").exists()

    def test_hist_report(self, small_ckpt, tmp_path):
        out = tmp_path / "diag"
        assert main(["diagnose", "--ckpt", str(small_ckpt), "--ckpt", str(small_ckpt),
                     "--report", "hist", "--out", str(out)]) == 0
        assert (out / "w1_hist.csv").exists()


class TestSampleCli:
    def test_measure_and_indices(self, small_ckpt, tmp_path):
        out = tmp_path / "samp"
        rc = main(["sample", "--ckpt", str(small_ckpt), "--group", "1",
                   "--target", "50", "--strategy", "function_based",
                   "--seed", "3", "--out", str(out)])
        assert rc == 0
        assert (out / "group1_measure.csv").exists()
        idx = (out / "group1_indices.csv").read_text().splitlines()
        assert len(idx) == 51

    def test_bad_group_exits_2(self, small_ckpt, tmp_path):
        assert main(["sample", "--ckpt", str(small_ckpt), "--group", "9",
                     "--out", str(tmp_path / "x")]) == 2


class TestReproduceCli:
    def test_twolayer_regen_passes(self, tmp_path, capsys):
        rc = main(["reproduce", "twolayer_regen", "--out", str(tmp_path / "r")])
        out = capsys.readouterr().out
        assert "ratio=" in out
        assert rc == 0
        assert (tmp_path / "r" / "twolayer_regen.txt").exists()

    def test_cifar_experiments_exit_3_without_data(self, tmp_path, monkeypatch):
        monkeypatch.delenv("MFGROW_CIFAR10_DIR", raising=False)
        for name in ("table1", "fig1", "fig2_grow", "fig2_prune", "accuracy"):
            assert main(["reproduce", name, "--out", str(tmp_path / name)]) == 3

    def test_init_writes_checkpoint(self, tmp_path):
        cfg = synth_config(tmp_path)
        assert main(["init", "--config", str(cfg), "--seed", "4"]) == 0
        ckpt = tmp_path / "out" / "init_seed4.ckpt"
        assert ckpt.exists()
        net = load_checkpoint(ckpt)
        assert net.meta["seed"] == 4
