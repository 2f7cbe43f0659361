# tests/test_checkpoint.py
import struct

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from core.checkpoint import (
    FORMAT_VERSION,
    MAGIC,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from core.errors import CheckpointError, ConfigMismatchError
from core.network import init_network
from core.optimizer import OptimizerState
from tests.conftest import tiny_network_config


@pytest.fixture
def trained(tiny_config, rng):
    params = init_network(tiny_config, 3)
    state = OptimizerState.zeros_like(params)
    for name, t in params.items():
        state.m[name] = rng.normal(size=t.shape).astype(np.float32)
        state.v[name] = rng.uniform(size=t.shape).astype(np.float32)
    state.step = 42
    return params, state


def test_round_trip_is_bit_exact(tmp_path, tiny_config, trained):
    params, state = trained
    path = save_checkpoint(params, state, tiny_config, 7, tmp_path / "run" / "last.tsr", best_psnr=31.5)
    loaded = load_checkpoint(path, tiny_config)
    assert loaded.config == tiny_config
    assert list(loaded.params) == list(params)
    for name in params:
        assert_array_equal(loaded.params[name].data, params[name].data)
        assert_array_equal(loaded.opt_state.m[name], state.m[name])
        assert_array_equal(loaded.opt_state.v[name], state.v[name])
    assert (loaded.progress.epoch, loaded.progress.step, loaded.progress.best_psnr) == (7, 42, 31.5)
    assert loaded.opt_state.step == 42

    again = save_checkpoint(loaded.params, loaded.opt_state, tiny_config, 7, tmp_path / "again.tsr", 31.5)
    assert again.read_bytes() == path.read_bytes()


def test_weights_only_file(tmp_path, tiny_config, trained):
    params, _ = trained
    path = save_checkpoint(params, None, tiny_config, None, tmp_path / "weights.tsr")
    loaded = load_checkpoint(path)
    assert loaded.opt_state is None and loaded.progress is None
    assert path.read_bytes()[:4] == MAGIC


def test_config_mismatch(tmp_path, tiny_config, trained):
    params, state = trained
    path = save_checkpoint(params, state, tiny_config, 1, tmp_path / "c.tsr")
    with pytest.raises(ConfigMismatchError) as exc:
        load_checkpoint(path, tiny_network_config(scale=4))
    assert set(exc.value.differences) == {"scale"}
    with pytest.raises(ConfigMismatchError):
        save_checkpoint(params, state, tiny_network_config(width=5), 1, tmp_path / "d.tsr")


def test_corrupt_files(tmp_path, tiny_config, trained):
    params, state = trained
    buf = encode_checkpoint(params)
    with pytest.raises(CheckpointError):
        decode_checkpoint(b"XXXX" + buf[4:])
    with pytest.raises(CheckpointError):
        decode_checkpoint(MAGIC + struct.pack("<I", FORMAT_VERSION + 1) + buf[8:])
    with pytest.raises(CheckpointError):
        decode_checkpoint(buf[:-3])
    with pytest.raises(CheckpointError):
        decode_checkpoint(buf + b"junk")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.tsr")
    with pytest.raises(CheckpointError):
        encode_checkpoint(params, state)
