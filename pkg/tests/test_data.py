import numpy as np
import pytest

from mfgrow.arch import build_mlp
from mfgrow.data import (
    CIFAR_RECORD,
    Dataset,
    load_checkpoint,
    load_cifar10,
    save_checkpoint,
    synth_regression,
)
from mfgrow.errors import CheckpointError, DataError, MissingDataError
from mfgrow.init import initialize, nonzero_mean_default
from mfgrow.net import forward_batch, zeros_network
from mfgrow.tensor import Rng


def write_fixture_batch(path, records):
    """records: list of (label, first_pixel). Remaining pixels ramp mod 256."""
    blob = bytearray()
    for label, first in records:
        blob.append(label)
        blob += bytes((first + i) % 256 for i in range(CIFAR_RECORD - 1))
    path.write_bytes(bytes(blob))


class TestCifarLoader:
    def test_well_formed_fixture(self, tmp_path):
        write_fixture_batch(tmp_path / "data_batch_1.bin", [(3, 10), (7, 100)])
        write_fixture_batch(tmp_path / "test_batch.bin", [(1, 0)])
        train, test = load_cifar10(tmp_path)
        assert train.n == 2 and test.n == 1
        assert train.inputs.shape == (2, 3072)
        assert train.targets.tolist() == [3, 7]
        expected = np.array([(10 + i) % 256 for i in range(3072)]) / 255.0
        assert np.array_equal(train.inputs[0], expected)

    def test_sorted_file_order(self, tmp_path):
        write_fixture_batch(tmp_path / "data_batch_2.bin", [(2, 0)])
        write_fixture_batch(tmp_path / "data_batch_1.bin", [(1, 0)])
        write_fixture_batch(tmp_path / "test_batch.bin", [(0, 0)])
        train, _ = load_cifar10(tmp_path)
        assert train.targets.tolist() == [1, 2]

    def test_truncated_file_reports_offset(self, tmp_path):
        (tmp_path / "data_batch_1.bin").write_bytes(b"\x00" * (CIFAR_RECORD + 5))
        write_fixture_batch(tmp_path / "test_batch.bin", [(0, 0)])
        with pytest.raises(DataError, match=str(CIFAR_RECORD)):
            load_cifar10(tmp_path)

    def test_bad_label(self, tmp_path):
        write_fixture_batch(tmp_path / "data_batch_1.bin", [(12, 0)])
        write_fixture_batch(tmp_path / "test_batch.bin", [(0, 0)])
        with pytest.raises(DataError, match="label 12"):
            load_cifar10(tmp_path)

    def test_missing_dataset(self, tmp_path):
        with pytest.raises(MissingDataError, match="MFGROW_CIFAR10_DIR"):
            load_cifar10(tmp_path)


class TestSynth:
    def test_sine_exact_when_noiseless(self):
        data = synth_regression("sine", 1000, 0.0, Rng(0))
        assert np.array_equal(data.targets[:, 0], np.sin(data.inputs[:, 0]))

    def test_deterministic(self):
        a = synth_regression("sine", 100, 0.1, Rng(3))
        b = synth_regression("sine", 100, 0.1, Rng(3))
        assert np.array_equal(a.inputs, b.inputs)
        assert np.array_equal(a.targets, b.targets)

    def test_noise_std_calibrated(self):
        data = synth_regression("cubic", 100_000, 0.1, Rng(5))
        resid = data.targets[:, 0] - data.inputs[:, 0] ** 3
        assert abs(resid.std() - 0.1) < 0.01

    def test_inputs_in_range(self):
        data = synth_regression("sine", 1000, 0.0, Rng(1))
        assert (np.abs(data.inputs) <= np.pi).all()


def example_net(seed=0):
    arch = build_mlp(4, 10, with_bias=True, with_skip=True, parametrization="MFP")
    return initialize(zeros_network(arch), nonzero_mean_default("MFP", arch), Rng(seed))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        net = example_net()
        path = tmp_path / "a.ckpt"
        save_checkpoint(net, path, seed=42)
        loaded = load_checkpoint(path)
        assert loaded.meta["seed"] == 42
        assert loaded.arch == net.arch
        for k in net.store:
            assert np.array_equal(loaded.store[k], net.store[k])

    def test_save_load_save_idempotent(self, tmp_path):
        net = example_net()
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(net, p1, seed=7)
        save_checkpoint(load_checkpoint(p1), p2, seed=7)
        assert p1.read_bytes() == p2.read_bytes()

    def test_forward_preserved_on_round_trip(self, tmp_path):
        net = example_net(3)
        path = tmp_path / "c.ckpt"
        save_checkpoint(net, path)
        loaded = load_checkpoint(path)
        xs = Rng(9).generator().normal(size=(100, 1))
        assert np.array_equal(forward_batch(loaded, xs), forward_batch(net, xs))

    def test_f32_round_trip_error_bound(self, tmp_path):
        net = example_net(5)
        path = tmp_path / "d.ckpt"
        save_checkpoint(net, path, dtype="f32")
        loaded = load_checkpoint(path)
        for k in net.store:
            w = net.store[k]
            err = np.max(np.abs(loaded.store[k] - w))
            bound = 2.0**-23 * max(np.max(np.abs(w)), 1e-30)
            assert err <= bound * 1.0001

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_truncation_detected(self, tmp_path):
        net = example_net()
        path = tmp_path / "e.ckpt"
        save_checkpoint(net, path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 10])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)


class TestDataset:
    def test_classification_flag(self):
        d = Dataset(np.zeros((3, 2)), np.array([0, 1, 2]))
        assert d.classification
        r = Dataset(np.zeros((3, 1)), np.zeros((3, 1)))
        assert not r.classification
