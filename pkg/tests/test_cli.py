import csv
import math
import subprocess
import sys

import numpy as np
import pytest

from productae.checkpoint import load_checkpoint
from productae.cli import main, parse_points
from productae.model import Architecture, ProductAE

TINY_TOML = """\
seed = 3

[code]
k1 = 2
k2 = 2
n1 = 3
n2 = 3

[model]
iterations = 2
features = 2
enc_layers = 1
enc_width = 8
dec_layers = 1
dec_width = 8
dec_last_layers = 1

[training]
batch_size = 16
dec_steps = 2
enc_steps = 1
lr_enc = 0.001
lr_dec = 0.001
gamma_db = 2.0
epochs = 2
dtype = "float64"

[eval]
snr_db = [0.0, 2.0]
min_block_errors = 20
max_blocks = 5000
batch_size = 200

[paths]
checkpoint_dir = "{dir}"
results_csv = "{dir}/sweep.csv"
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(TINY_TOML.format(dir=(tmp_path / "run").as_posix()))
    return path


@pytest.fixture
def trained_run(config, tmp_path):
    assert main(["train", "--config", str(config)]) == 0
    return tmp_path / "run"


def read_log(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("command", [[], ["train"], ["eval"], ["sweep"], ["gradcheck"], ["oracle"]])
def test_help_exits_zero(command, capsys):
    with pytest.raises(SystemExit) as exc:
        main(command + ["--help"])
    assert exc.value.code == 0
    assert "usage" in capsys.readouterr().out


def test_parse_points():
    assert parse_points("0:6:1") == [0, 1, 2, 3, 4, 5, 6]
    assert parse_points("1,2.5") == [1.0, 2.5]
    assert parse_points("0:1:0.25") == [0, 0.25, 0.5, 0.75, 1.0]


def test_train_writes_artifacts(trained_run):
    for name in ("best.pae", "final.pae", "train_log.csv", "config.toml"):
        assert (trained_run / name).exists()
    rows = read_log(trained_run / "train_log.csv")
    assert [r["kind"] for r in rows] == ["decoder", "encoder"] * 2


def test_same_seed_gives_identical_logs(config, tmp_path):
    logs = []
    for name in ("a", "b"):
        assert main(["train", "--config", str(config), "--out", str(tmp_path / name)]) == 0
        logs.append([(r["epoch"], r["kind"], r["mean_loss"]) for r in read_log(tmp_path / name / "train_log.csv")])
    assert logs[0] == logs[1]


def test_seed_override_changes_run(config, tmp_path):
    main(["train", "--config", str(config), "--out", str(tmp_path / "a")])
    main(["train", "--config", str(config), "--out", str(tmp_path / "b"), "--seed", "4"])
    a = read_log(tmp_path / "a" / "train_log.csv")
    b = read_log(tmp_path / "b" / "train_log.csv")
    assert a[0]["mean_loss"] != b[0]["mean_loss"]


def test_zero_epochs_writes_initial_checkpoint_only(config, tmp_path):
    out = tmp_path / "zero"
    assert main(["train", "--config", str(config), "--epochs", "0", "--out", str(out)]) == 0
    ck = load_checkpoint(out / "final.pae")
    assert ck.epoch == 0
    fresh = ProductAE.build(Architecture(**ck.arch), seed=3, dtype=np.float64)
    for name, p in fresh.named_parameters().items():
        assert np.array_equal(ck.params[name], p.data)
    assert not (out / "best.pae").exists()
    assert read_log(out / "train_log.csv") == []


def test_eval_snr_range_gives_seven_points(trained_run, tmp_path, capsys):
    out = tmp_path / "eval.csv"
    code = main(["eval", "--checkpoint", str(trained_run / "best.pae"), "--snr", "0:6:1",
                 "--min-block-errors", "5", "--max-blocks", "400", "--batch-size", "200", "--out", str(out)])
    assert code == 0
    rows = read_log(out)
    assert [float(r["snr_db"]) for r in rows] == [0, 1, 2, 3, 4, 5, 6]


def test_eval_ebn0_uses_checkpoint_rate(trained_run, tmp_path):
    out = tmp_path / "ebn0.csv"
    code = main(["eval", "--checkpoint", str(trained_run / "best.pae"), "--ebn0", "6",
                 "--rate-from-checkpoint", "--max-blocks", "200", "--batch-size", "200", "--out", str(out)])
    assert code == 0
    (row,) = read_log(out)
    assert float(row["snr_db"]) == pytest.approx(6 - 10 * math.log10(9 / 4), abs=1e-12)
    assert float(row["ebn0_db"]) == pytest.approx(6.0, abs=1e-12)


def test_eval_ebn0_with_explicit_rate(trained_run, tmp_path):
    out = tmp_path / "r.csv"
    main(["eval", "--checkpoint", str(trained_run / "best.pae"), "--ebn0", "3", "--rate", "0.5",
          "--max-blocks", "200", "--batch-size", "200", "--out", str(out)])
    assert float(read_log(out)[0]["snr_db"]) == pytest.approx(3 - 10 * math.log10(2), abs=1e-12)


def test_empty_sweep_is_usage_error(trained_run):
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--checkpoint", str(trained_run / "best.pae"), "--snr", "3:1:1"])
    assert exc.value.code == 2


def test_sweep_uses_config_points(config, trained_run):
    assert main(["sweep", "--config", str(config)]) == 0
    rows = read_log(trained_run / "sweep.csv")
    assert [float(r["snr_db"]) for r in rows] == [0.0, 2.0]


def test_eval_is_deterministic(trained_run, tmp_path):
    args = ["eval", "--checkpoint", str(trained_run / "best.pae"), "--snr", "1", "--seed", "7",
            "--min-block-errors", "30", "--batch-size", "100"]
    main(args + ["--out", str(tmp_path / "a.csv")])
    main(args + ["--out", str(tmp_path / "b.csv"), "--workers", "2"])
    assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()


def test_bad_checkpoint_exits_4(tmp_path, capsys):
    bad = tmp_path / "bad.pae"
    bad.write_bytes(b"not a checkpoint at all")
    assert main(["eval", "--checkpoint", str(bad), "--snr", "0"]) == 4
    assert "bad-magic" in capsys.readouterr().err


def test_missing_checkpoint_exits_4(tmp_path):
    assert main(["eval", "--checkpoint", str(tmp_path / "none.pae"), "--snr", "0"]) == 4


def test_invalid_config_exits_2_with_diagnostics(config, capsys):
    config.write_text(config.read_text().replace("lr_enc = 0.001", "lr_enc = -0.001"))
    assert main(["train", "--config", str(config)]) == 2
    err = capsys.readouterr().err
    assert "line 22" in err and "training.lr_enc" in err


def test_unreadable_config_exits_3(tmp_path):
    assert main(["train", "--config", str(tmp_path / "missing.toml")]) == 3


def test_gradcheck_passes(capsys):
    assert main(["gradcheck", "--params", "50"]) == 0
    out = capsys.readouterr().out
    assert "max relative error" in out and "PASS" in out


def test_gradcheck_threshold_exceeded_exits_1(capsys):
    assert main(["gradcheck", "--params", "20", "--tol", "1e-30"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_oracle_prints_distance_and_pass(capsys):
    assert main(["oracle"]) == 0
    out = capsys.readouterr().out
    assert "SPC(3,2)^2" in out and "d=4" in out and "d=9" in out
    assert out.strip().endswith("PASS")


def test_console_entry_point():
    done = subprocess.run([sys.executable, "-m", "productae.cli", "--help"], capture_output=True, text=True)
    assert done.returncode == 0 and "gradcheck" in done.stdout
