# tests/test_trainer.py
from collections import Counter
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from core.degradation import DegradationParams
from core.errors import ConfigError, TrainingDivergedError
from core.network import init_network
from core.optimizer import OptimizerState
from core.synthetic import synth_thermal_corpus
from core.trainer import (
    TrainConfig,
    TrainLogRow,
    build_batch,
    draw_sequence_length,
    evaluate,
    plan_epoch,
    train_epoch,
)
from tests.conftest import tiny_network_config

DEGRADATION = DegradationParams(scale=2, blur_sigma=1.0, noise_sigma=0.01, seed=3)


@pytest.fixture
def corpus():
    return synth_thermal_corpus(4, 4, 24, seed=5)


@pytest.fixture
def train_config():
    return TrainConfig(epochs=2, batch_size=2, min_seq_len=1, max_seq_len=3, crop_size=12, seed=7)


def _fresh(seed=0, bicubic_skip=1):
    params = init_network(tiny_network_config(bicubic_skip=bicubic_skip), seed)
    return params, OptimizerState.zeros_like(params)


# -----------------------------------------------------------
# Planning
# -----------------------------------------------------------
def test_sequence_length_histogram_is_uniform():
    rng = np.random.default_rng(0)
    config = TrainConfig()
    n = 100_000
    counts = Counter(draw_sequence_length(rng, config) for _ in range(n))
    assert sorted(counts) == list(range(1, 11))
    for length in range(1, 11):
        assert abs(counts[length] - n / 10) <= 0.05 * n / 10


def test_plan_epoch_is_seeded_and_covers_dataset(corpus, train_config):
    plans = plan_epoch(corpus, train_config, epoch=0)
    assert plans == plan_epoch(corpus, train_config, epoch=0)
    assert plans != plan_epoch(corpus, train_config, epoch=1)
    ids = [i for plan in plans for i in plan.sequence_ids]
    assert sorted(ids) == sorted(s.sequence_id for s in corpus)
    for plan in plans:
        assert 1 <= plan.length <= train_config.max_seq_len
        assert len(plan.crop_seeds) == len(plan.degradation_seeds) == len(plan.sequence_ids)


def test_build_batch_stacks_samples(corpus, train_config):
    plan = plan_epoch(corpus, train_config, epoch=0)[0]
    batch = build_batch(plan, {s.sequence_id: s for s in corpus}, DEGRADATION, train_config.crop_size)
    assert len(batch.lr_steps) == len(batch.hr_steps) == plan.length
    b = len(plan.sequence_ids)
    assert batch.hr_steps[0].shape == (b, 1, 12, 12)
    assert batch.lr_steps[0].shape == (b, 1, 6, 6)


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(min_seq_len=5, max_seq_len=2)
    with pytest.raises(ConfigError) as exc:
        TrainConfig(max_seq_len=11)
    assert "max_seq_len" in exc.value.keys
    with pytest.raises(ConfigError) as exc:
        TrainConfig(batch_size=0)
    assert "batch_size" in exc.value.keys
    assert TrainLogRow.columns()[0] == "epoch"


# -----------------------------------------------------------
# Training
# -----------------------------------------------------------
def test_training_is_bit_reproducible(corpus, train_config):
    runs = []
    for _ in range(2):
        params, state = _fresh()
        losses = [train_epoch(params, state, corpus, train_config, e, DEGRADATION).train_loss for e in range(2)]
        runs.append((params, state, losses))
    (p1, s1, l1), (p2, s2, l2) = runs
    assert l1 == l2
    assert s1.step == s2.step == 4
    for name in p1:
        assert_array_equal(p1[name].data, p2[name].data)
        assert_array_equal(s1.v[name], s2.v[name])


def test_prefetch_does_not_change_results(corpus, train_config):
    results = []
    for prefetch in (0, 2):
        params, state = _fresh()
        train_epoch(params, state, corpus, replace(train_config, prefetch=prefetch), 0, DEGRADATION)
        results.append(params)
    for name in results[0]:
        assert_array_equal(results[0][name].data, results[1][name].data)


def test_loss_decreases_on_a_fixed_sample():
    corpus = synth_thermal_corpus(1, 2, 16, seed=2)
    config = TrainConfig(batch_size=1, min_seq_len=2, max_seq_len=2, crop_size=16, seed=0)
    clean = replace(DEGRADATION, noise_sigma=0.0)
    params, state = _fresh(1, bicubic_skip=0)
    losses = [train_epoch(params, state, corpus, config, e, clean).train_loss for e in range(5)]
    assert losses[-1] < losses[0]


def test_divergence_reports_batch(corpus, train_config):
    params, state = _fresh()
    params["sisr.feat0.weight"].data[...] = np.nan
    with pytest.raises(TrainingDivergedError) as exc:
        train_epoch(params, state, corpus, train_config, 0, DEGRADATION)
    assert exc.value.epoch == 0
    assert exc.value.step == 1
    assert set(exc.value.sequence_ids) <= {s.sequence_id for s in corpus}


@pytest.mark.slow
def test_overfits_a_single_sequence():
    corpus = synth_thermal_corpus(1, 3, 32, seed=4)
    config = TrainConfig(base_lr=1e-3, batch_size=1, min_seq_len=3, max_seq_len=3, crop_size=32,
                         weight_decay=0.0, seed=0)
    clean = replace(DEGRADATION, noise_sigma=0.0)
    params, state = _fresh(0, bicubic_skip=0)
    losses = [train_epoch(params, state, corpus, config, 0, clean).train_loss for _ in range(500)]
    assert losses[-1] <= losses[0] / 10


# -----------------------------------------------------------
# Evaluation
# -----------------------------------------------------------
def test_evaluation_report(corpus):
    params, _ = _fresh()
    result = evaluate(params, corpus, DEGRADATION)
    assert len(result.sr.per_item) == len(corpus)
    assert result.sr.psnr_mean == pytest.approx(np.mean([i.psnr for i in result.sr.per_item]))
    assert result.sr.psnr_std == pytest.approx(np.std([i.psnr for i in result.sr.per_item]))
    assert [row["step"] for row in result.per_step] == list(range(4))
    assert np.isfinite(result.val_loss)
    assert {row["method"] for row in result.items()} == {"SR", "Bicubic"}


def test_evaluation_is_repeatable_and_bicubic_ignores_weights(corpus):
    first = evaluate(_fresh(0)[0], corpus, DEGRADATION)
    again = evaluate(_fresh(0)[0], corpus, DEGRADATION)
    other = evaluate(_fresh(1)[0], corpus, DEGRADATION)
    assert first.sr.psnr_mean == again.sr.psnr_mean
    assert first.bicubic.psnr_mean == other.bicubic.psnr_mean
    assert first.sr.psnr_mean != other.sr.psnr_mean


def test_zero_recon_scores_as_bicubic(corpus):
    params, _ = _fresh()
    params["recon.weight"].data = np.zeros_like(params["recon.weight"].data)
    result = evaluate(params, corpus, DEGRADATION)
    assert all(np.isfinite(i.psnr) for i in result.sr.per_item)
    assert result.sr.psnr_mean == pytest.approx(result.bicubic.psnr_mean, abs=1e-9)
    assert result.sr.ssim_mean == pytest.approx(result.bicubic.ssim_mean, abs=1e-9)


def test_zero_output_network_scores_finite(corpus):
    params, _ = _fresh(bicubic_skip=0)
    params["recon.weight"].data = np.zeros_like(params["recon.weight"].data)
    result = evaluate(params, corpus, DEGRADATION)
    assert all(np.isfinite(i.psnr) for i in result.sr.per_item)
