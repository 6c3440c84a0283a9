import dataclasses
import math

import numpy as np
import pytest

from vdjscc import config
from vdjscc.config import ExperimentConfig, PipelineConfig, TubeletConfig, desk_profile
from vdjscc.errors import ConfigError
from vdjscc.params import CheckpointError, ParamStore, assign, load_archive, save_archive


def test_full_scale_defaults():
    cfg = ExperimentConfig()
    tc = cfg.pipeline.tubelet
    assert (tc.T, tc.H, tc.t, tc.h, tc.K) == (16, 224, 2, 16, 768)
    assert (cfg.pipeline.L, cfg.pipeline.n_heads, cfg.pipeline.gamma, cfg.pipeline.c) == (5, 12, 0.8, 96)
    assert cfg.train.learning_rate == 1e-4 and cfg.train.batch_size == 4
    assert cfg.train.snr_set_db == (1.0, 4.0, 7.0, 10.0, 13.0)


def test_desk_profile_dims():
    tc = desk_profile().pipeline.tubelet
    assert (tc.M, tc.N, tc.tube_dim) == (256, 24576, 96)


def test_round_trip_through_text():
    cfg = desk_profile()
    cfg = dataclasses.replace(cfg, pipeline=dataclasses.replace(cfg.pipeline, snr_db=math.inf, gamma=0.6))
    assert config.loads(config.dumps(cfg)) == cfg


def test_file_round_trip(tmp_path):
    (tmp_path / "a.ini").write_text(config.dumps(desk_profile()))
    assert config.load(tmp_path / "a.ini") == desk_profile()


def test_keys_are_case_sensitive():
    cfg = config.loads("[tubelet]\nT = 4\nt = 1\n")
    assert cfg.pipeline.tubelet.T == 4 and cfg.pipeline.tubelet.t == 1


def test_unknown_field_and_section():
    with pytest.raises(ConfigError, match="unknown field 'depth'"):
        config.loads("[model]\ndepth = 3\n")
    with pytest.raises(ConfigError, match=r"unknown section \[optim\]"):
        config.loads("[optim]\nlr = 1\n")


def test_bad_value_names_field():
    with pytest.raises(ConfigError, match=r"\[model\] L"):
        config.loads("[model]\nL = two\n")


def test_overrides():
    cfg = config.apply_overrides(desk_profile(), {"gamma": "0.4", "train.steps": "7", "snr-set-db": "1, 13"})
    assert cfg.pipeline.gamma == 0.4
    assert cfg.train.steps == 7
    assert cfg.train.snr_set_db == (1.0, 13.0)
    with pytest.raises(ConfigError):
        config.apply_overrides(desk_profile(), {"nonsense": "1"})


@pytest.mark.parametrize(
    "change, message",
    [
        (dict(h=5), "divisible"),
        (dict(K=30), "heads"),
    ],
)
def test_validation(change, message):
    tc = dataclasses.replace(desk_profile().pipeline.tubelet, **change)
    with pytest.raises(ConfigError, match=message):
        dataclasses.replace(desk_profile().pipeline, tubelet=tc).validate()


def test_odd_channel_dim_rejected():
    with pytest.raises(ConfigError):
        PipelineConfig(tubelet=TubeletConfig(T=4, C=1, H=16, W=16, t=2, h=4, w=4, K=16), n_heads=2, c=3).validate()


def test_archive_round_trip_and_determinism(tmp_path):
    arrays = {"a": np.arange(6.0).reshape(2, 3), "b/c": np.array([1], dtype=np.int64)}
    save_archive(tmp_path / "x.npz", arrays, "[train]\nsteps = 3\n")
    save_archive(tmp_path / "y.npz", arrays, "[train]\nsteps = 3\n")
    assert (tmp_path / "x.npz").read_bytes() == (tmp_path / "y.npz").read_bytes()
    back, text = load_archive(tmp_path / "x.npz")
    assert "steps = 3" in text
    np.testing.assert_array_equal(back["a"], arrays["a"])
    assert back["b/c"].dtype == np.int64


def test_assign_reports_mismatches():
    store = ParamStore(0)
    store.linear("fc", 3, 2)
    with pytest.raises(CheckpointError, match=r"fc.weight: checkpoint \(2, 3\) vs model \(3, 2\); missing fc.bias"):
        assign(store, {"fc.weight": np.zeros((2, 3))})
