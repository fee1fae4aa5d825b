import json
import struct

import numpy as np
import pytest

from productae.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from productae.config import load_preset
from productae.errors import CheckpointError
from productae.model import Architecture
from productae.training import Trainer, TrainingConfig, model_from_checkpoint

from conftest import TINY


@pytest.fixture
def trained(tmp_path):
    cfg = TrainingConfig(batch_size=16, dec_steps=2, enc_steps=2, lr_enc=1e-3, lr_dec=1e-3, seed=1, dtype="float64")
    t = Trainer.from_config(Architecture(**TINY), cfg)
    t.fit(2)
    path = tmp_path / "ck.pae"
    t.save(path)
    return t, path


def test_round_trip_is_bitwise(trained):
    t, path = trained
    ck = load_checkpoint(path)
    for name, p in t.model.named_parameters().items():
        assert ck.params[name].dtype == p.dtype
        assert np.array_equal(ck.params[name], p.data)
    for group, opt in (("encoder", t.enc_opt), ("decoder", t.dec_opt)):
        state = ck.optimizers[group]
        assert state["t"] == opt.t and state["lr"] == opt.lr
        assert all(np.array_equal(a, b) for a, b in zip(state["m"], opt.m))
        assert all(np.array_equal(a, b) for a, b in zip(state["v"], opt.v))
    assert ck.epoch == 2 and ck.best_loss == t.best_loss


def test_restored_trainer_continues_identically(trained):
    t, path = trained
    resumed = Trainer.from_checkpoint(path)
    a = t.run_epoch()
    b = resumed.run_epoch()
    assert (a.dec_loss, a.enc_loss) == (b.dec_loss, b.enc_loss)
    for p, q in zip(t.model.parameters(), resumed.model.parameters()):
        assert np.array_equal(p.data, q.data)


def test_model_from_checkpoint(trained):
    t, path = trained
    model = model_from_checkpoint(path)
    for p, q in zip(t.model.parameters(), model.parameters()):
        assert np.array_equal(p.data, q.data)


def test_file_starts_with_magic_and_version(trained):
    _, path = trained
    magic, version = struct.unpack_from("<4sH", path.read_bytes())
    assert (magic, version) == (MAGIC, 1)


def test_float32_round_trip(tmp_path):
    cfg = TrainingConfig(batch_size=8, dec_steps=1, enc_steps=1, lr_enc=1e-3, lr_dec=1e-3, dtype="float32")
    t = Trainer.from_config(Architecture(**TINY), cfg)
    t.fit(1)
    t.save(tmp_path / "f32.pae")
    ck = load_checkpoint(tmp_path / "f32.pae")
    for name, p in t.model.named_parameters().items():
        assert ck.params[name].dtype == np.float32 and np.array_equal(ck.params[name], p.data)


class TestCorruption:
    def test_truncated(self, trained):
        _, path = trained
        raw = path.read_bytes()
        for cut in (3, 8, len(raw) // 2, len(raw) - 1):
            path.write_bytes(raw[:cut])
            with pytest.raises(CheckpointError) as exc:
                load_checkpoint(path)
            assert exc.value.reason in ("truncated", "bad-magic", "bad-header")

    def test_truncated_data_section(self, trained):
        _, path = trained
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(CheckpointError) as exc:
            load_checkpoint(path)
        assert exc.value.reason == "truncated"

    def test_bad_magic(self, trained):
        _, path = trained
        path.write_bytes(b"XXXX" + path.read_bytes()[4:])
        with pytest.raises(CheckpointError) as exc:
            load_checkpoint(path)
        assert exc.value.reason == "bad-magic"

    def test_unsupported_version(self, trained):
        _, path = trained
        raw = bytearray(path.read_bytes())
        raw[4:6] = struct.pack("<H", 99)
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError) as exc:
            load_checkpoint(path)
        assert exc.value.reason == "unsupported-version"

    def test_garbage_header(self, trained):
        _, path = trained
        raw = bytearray(path.read_bytes())
        raw[10:20] = b"\xff" * 10
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError) as exc:
            load_checkpoint(path)
        assert exc.value.reason == "bad-header"

    def test_shape_mismatch_on_restore(self, trained, tmp_path):
        _, path = trained
        ck = load_checkpoint(path)
        ck.params["enc1.0.weight"] = np.zeros((5, 5))
        save_checkpoint(tmp_path / "bad.pae", ck)
        with pytest.raises(CheckpointError) as exc:
            Trainer.from_checkpoint(tmp_path / "bad.pae")
        assert exc.value.reason == "shape-mismatch"
        with pytest.raises(CheckpointError):
            model_from_checkpoint(tmp_path / "bad.pae")

    def test_missing(self, tmp_path):
        with pytest.raises(CheckpointError) as exc:
            load_checkpoint(tmp_path / "absent.pae")
        assert exc.value.reason == "missing"


def test_reference_config_is_recorded(tmp_path):
    cfg = load_preset("productae-15-10")
    t = Trainer.from_config(cfg.arch, cfg.training)
    t.save(tmp_path / "ref.pae")
    raw = (tmp_path / "ref.pae").read_bytes()
    hlen = struct.unpack_from("<I", raw, 6)[0]
    header = json.loads(raw[10:10 + hlen])
    arch = header["arch"]
    assert (arch["iterations"], arch["features"]) == (4, 3)
    assert (arch["enc_width"], arch["dec_width"]) == (200, 250)
    assert (arch["dec_layers"], arch["dec_last_layers"], arch["enc_layers"]) == (7, 9, 7)
    assert (arch["k1"], arch["n1"], arch["k2"], arch["n2"]) == (10, 15, 10, 15)
    assert load_checkpoint(tmp_path / "ref.pae").arch == arch
