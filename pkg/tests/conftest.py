# tests/conftest.py
"""Shared fixtures and loop-based reference kernels."""

import numpy as np
import pytest

from core.network import NetworkConfig


def tiny_network_config(scale: int = 2, width: int = 4, count: int = 1, bicubic_skip: int = 1) -> NetworkConfig:
    return NetworkConfig(
        scale=scale,
        misr_channels=width,
        misr_blocks=count,
        residual_channels=width,
        residual_blocks=count,
        sisr_feat0=width,
        sisr_feat=width,
        sisr_stages=count,
        fusion_channels=width,
        bicubic_skip=bicubic_skip,
    )


@pytest.fixture
def tiny_config() -> NetworkConfig:
    return tiny_network_config()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _log_to_tmp(tmp_path, monkeypatch):
    monkeypatch.setenv("LOG_FILE", str(tmp_path / "thermalsr.log"))


# -----------------------------------------------------------
# Naive references
# -----------------------------------------------------------
def naive_conv2d(x, w, b=None, stride=1, padding=0):
    bsz, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    xp = np.zeros((bsz, cin, h + 2 * padding, wd + 2 * padding), dtype=np.float64)
    xp[:, :, padding:padding + h, padding:padding + wd] = x
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((bsz, cout, oh, ow), dtype=np.float64)
    for n in range(bsz):
        for o in range(cout):
            for i in range(oh):
                for j in range(ow):
                    patch = xp[n, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[n, o, i, j] = np.sum(patch * w[o])
            if b is not None:
                out[n, o] += b[o]
    return out


def naive_conv2d_transposed(x, w, b=None, stride=1, padding=0):
    bsz, cin, h, wd = x.shape
    _, cout, kh, kw = w.shape
    full = np.zeros((bsz, cout, (h - 1) * stride + kh, (wd - 1) * stride + kw), dtype=np.float64)
    for n in range(bsz):
        for c in range(cin):
            for i in range(h):
                for j in range(wd):
                    full[n, :, i * stride:i * stride + kh, j * stride:j * stride + kw] += x[n, c, i, j] * w[c]
    oh = (h - 1) * stride - 2 * padding + kh
    ow = (wd - 1) * stride - 2 * padding + kw
    out = full[:, :, padding:padding + oh, padding:padding + ow].copy()
    if b is not None:
        out += b.reshape(1, -1, 1, 1)
    return out


def naive_prelu(x, a):
    return np.where(x < 0, a * x, x)
