import csv

import pytest

from vdjscc import cli, config
from vdjscc.config import DataConfig, ExperimentConfig, TrainConfig
from vdjscc.gradcheck import toy_pipeline_config


@pytest.fixture(scope="module")
def toy_ini(tmp_path_factory):
    exp = ExperimentConfig(
        pipeline=toy_pipeline_config(),
        train=TrainConfig(learning_rate=1e-3, batch_size=2, steps=4, eval_every=2),
        data=DataConfig(n_train=2, n_test=3),
        snr_list=(1.0, 13.0),
        gamma_list=(0.5, 1.0),
    )
    path = tmp_path_factory.mktemp("cfg") / "toy.ini"
    path.write_text(config.dumps(exp))
    return path


@pytest.fixture(scope="module")
def trained(toy_ini, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert cli.main(["train", "--config", str(toy_ini), "--out", str(out)]) == 0
    return out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_train_outputs(trained, toy_ini):
    assert (trained / "checkpoint.npz").exists()
    assert len(read_csv(trained / "train_log.csv")) == 1 + 4
    assert (trained / "config.source.ini").read_text() == toy_ini.read_text()


def test_sweep_snr_csv(trained):
    out = trained / "snr.csv"
    assert cli.main(["sweep-snr", "--checkpoint", str(trained / "checkpoint.npz"), "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == list(cli.SNR_COLUMNS)
    assert [float(r[0]) for r in rows[1:]] == [1.0, 13.0]
    assert rows[1][3] == rows[2][3]
    assert (trained / "config.ini").exists()


def test_sweep_cbr_csv_consistent_with_snr_sweep(trained):
    ckpt = str(trained / "checkpoint.npz")
    cli.main(["sweep-cbr", "--checkpoint", ckpt, "--out", str(trained / "cbr.csv"), "--sweep_snr_db", "13"])
    cli.main(["sweep-snr", "--checkpoint", ckpt, "--out", str(trained / "snr1.csv"), "--gamma", "1.0"])
    cbr = read_csv(trained / "cbr.csv")
    assert cbr[0] == list(cli.CBR_COLUMNS)
    assert float(cbr[2][1]) == 2 * float(cbr[1][1])
    snr13 = read_csv(trained / "snr1.csv")[2]
    assert cbr[2][2:] == snr13[1:3]


def test_visualize_masks(trained, capsys):
    out = trained / "maps"
    code = cli.main(["visualize-masks", "--checkpoint", str(trained / "checkpoint.npz"), "--gamma", "1.0", "--out", str(out)])
    assert code == 0
    maps = sorted(out.glob("clip0_t*.pgm"))
    assert len(maps) == toy_pipeline_config().tubelet.n_t
    assert all(set(map(int, m.read_text().split()[4:])) == {255} for m in maps)
    assert "mover footprint" in capsys.readouterr().out


def test_gradcheck_passes(capsys):
    assert cli.main(["gradcheck"]) == 0
    out = capsys.readouterr().out
    assert "pipeline" in out and "max rel err" in out


def test_gradcheck_detects_corruption():
    assert cli.main(["gradcheck", "--corrupt-op", "softmax"]) == 2


def test_gradcheck_refuses_large_width(capsys):
    assert cli.main(["gradcheck", "--K", "128"]) == 1
    assert "refuses K=128" in capsys.readouterr().err


def test_config_errors_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[model]\nL = deep\n")
    assert cli.main(["train", "--config", str(bad)]) == 1
    assert "L" in capsys.readouterr().err
    assert cli.main(["train", "--no_such_field", "1"]) == 1
    assert cli.main(["train", "--h", "5"]) == 1


def test_missing_checkpoint_exit_2(tmp_path):
    assert cli.main(["sweep-snr", "--checkpoint", str(tmp_path / "none.npz")]) == 2
